"""Kernel families ``h(t, x)`` and integral functionals over ``rate * dt * sigma(dx)``.

The functionals are evaluated on doubling time pieces ``[0,1], [1,2], [2,4], ...``
(or on the finite time support of windowed kernels). Inside a piece the time
integral is adaptive Gauss-Kronrod; the mark integral is either closed form
(kernels ``x * g(t)`` against laws with closed-form truncated moments),
composite Gauss-Legendre against the density split at the ``|h| = 1`` level
sets, an exact sum over atoms, or Monte Carlo with batch-means error bars.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from ._quad import gauss_kronrod, panel_rule
from .stochastic import JumpLaw, RngStream, expm1i

DIVERGENCE_THRESHOLD = 1e8
MAX_PIECES = 64


# ---------------------------------------------------------------------------
# Time factors g(t)

class TimeFunction:
    """Closed-form function of time with an a.e. derivative."""

    family = "abstract"
    breaks: tuple[float, ...] = ()
    support_end = math.inf

    def __call__(self, t):
        raise NotImplementedError

    def derivative(self, t):
        raise NotImplementedError

    def tail_integral(self, T: float) -> float:
        """``int_T^inf |g(t)| dt`` (``inf`` when not integrable)."""
        return math.inf

    def describe(self) -> dict:
        return {"family": self.family}


@dataclass(frozen=True)
class ExpDecay(TimeFunction):
    beta: float = 1.0
    amplitude: float = 1.0
    family = "exponential"

    def __call__(self, t):
        return self.amplitude * np.exp(-self.beta * np.asarray(t, dtype=float))

    def derivative(self, t):
        return -self.beta * self(t)

    def tail_integral(self, T):
        if self.amplitude == 0:
            return 0.0
        if self.beta <= 0:
            return math.inf
        return abs(self.amplitude) * math.exp(-self.beta * T) / self.beta

    def describe(self):
        return {"family": self.family, "beta": self.beta, "amplitude": self.amplitude}


@dataclass(frozen=True)
class PowerDecay(TimeFunction):
    """``amplitude * (1 + t) ** -beta``."""

    beta: float = 2.0
    amplitude: float = 1.0
    family = "power"

    def __call__(self, t):
        return self.amplitude * (1.0 + np.asarray(t, dtype=float)) ** (-self.beta)

    def derivative(self, t):
        return -self.beta * self.amplitude * (1.0 + np.asarray(t, dtype=float)) ** (-self.beta - 1.0)

    def tail_integral(self, T):
        if self.amplitude == 0:
            return 0.0
        if self.beta <= 1:
            return math.inf
        return abs(self.amplitude) * (1.0 + T) ** (1.0 - self.beta) / (self.beta - 1.0)

    def describe(self):
        return {"family": self.family, "beta": self.beta, "amplitude": self.amplitude}


@dataclass(frozen=True)
class Polynomial(TimeFunction):
    """``sum_k coeffs[k] * t**k``; affine is the two-coefficient case."""

    coeffs: tuple[float, ...] = (1.0,)
    family = "polynomial"

    def __call__(self, t):
        return np.polynomial.polynomial.polyval(np.asarray(t, dtype=float), self.coeffs)

    def derivative(self, t):
        d = np.polynomial.polynomial.polyder(self.coeffs) if len(self.coeffs) > 1 else [0.0]
        return np.polynomial.polynomial.polyval(np.asarray(t, dtype=float), d)

    def tail_integral(self, T):
        return 0.0 if not any(self.coeffs) else math.inf

    def describe(self):
        return {"family": self.family, "coeffs": list(self.coeffs)}


@dataclass(frozen=True)
class Indicator(TimeFunction):
    """``amplitude * 1_[0, t0](t)``."""

    t0: float = 1.0
    amplitude: float = 1.0
    family = "indicator"

    @property
    def breaks(self):
        return (self.t0,)

    @property
    def support_end(self):
        return self.t0

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        return np.where((t >= 0) & (t <= self.t0), self.amplitude, 0.0)

    def derivative(self, t):
        return np.zeros_like(np.asarray(t, dtype=float))

    def tail_integral(self, T):
        return abs(self.amplitude) * max(self.t0 - T, 0.0)

    def describe(self):
        return {"family": self.family, "t0": self.t0, "amplitude": self.amplitude}


@dataclass(frozen=True)
class PiecewiseConstant(TimeFunction):
    """``values[k]`` on ``[breaks[k-1], breaks[k])`` with ``breaks[-1] = 0``; last value holds to infinity."""

    cuts: tuple[float, ...] = (1.0,)
    values: tuple[float, ...] = (1.0, 0.0)
    family = "piecewise_constant"

    def __post_init__(self):
        if len(self.values) != len(self.cuts) + 1:
            raise ValueError("piecewise_constant needs len(values) == len(cuts) + 1")
        if any(b <= a for a, b in zip(self.cuts, self.cuts[1:])) or (self.cuts and self.cuts[0] <= 0):
            raise ValueError("cuts must be positive and strictly increasing")

    @property
    def breaks(self):
        return tuple(self.cuts)

    @property
    def support_end(self):
        if self.values[-1] != 0:
            return math.inf
        nz = [k for k, v in enumerate(self.values) if v != 0]
        return self.cuts[nz[-1]] if nz else 0.0

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        idx = np.searchsorted(np.asarray(self.cuts), t, side="right")
        return np.asarray(self.values, dtype=float)[idx]

    def derivative(self, t):
        return np.zeros_like(np.asarray(t, dtype=float))

    def tail_integral(self, T):
        if self.values[-1] != 0:
            return math.inf
        edges = (0.0,) + tuple(self.cuts)
        total = 0.0
        for k, v in enumerate(self.values[:-1]):
            a, b = max(edges[k], T), edges[k + 1]
            if b > a:
                total += abs(v) * (b - a)
        return total

    def describe(self):
        return {"family": self.family, "cuts": list(self.cuts), "values": list(self.values)}


def affine(c0: float, c1: float) -> Polynomial:
    return Polynomial((float(c0), float(c1)))


def constant(c: float = 1.0) -> Polynomial:
    return Polynomial((float(c),))


def time_function_from_spec(spec: dict) -> TimeFunction:
    spec = dict(spec)
    family = spec.pop("family")
    if family == "exponential":
        g = ExpDecay(spec.pop("beta", 1.0), spec.pop("amplitude", 1.0))
    elif family == "power":
        g = PowerDecay(spec.pop("beta", 2.0), spec.pop("amplitude", 1.0))
    elif family == "affine":
        g = affine(spec.pop("c0", 0.0), spec.pop("c1", 0.0))
    elif family == "polynomial":
        g = Polynomial(tuple(float(c) for c in spec.pop("coeffs")))
    elif family == "constant":
        g = constant(spec.pop("value", 1.0))
    elif family == "indicator":
        g = Indicator(spec.pop("t0", 1.0), spec.pop("amplitude", 1.0))
    elif family == "piecewise_constant":
        g = PiecewiseConstant(tuple(spec.pop("cuts")), tuple(spec.pop("values")))
    else:
        raise ValueError(f"unknown time function family {family!r}")
    if spec:
        raise ValueError(f"unexpected keys for {family}: {sorted(spec)}")
    return g


# ---------------------------------------------------------------------------
# Kernels

class Kernel:
    """Deterministic filter ``h(t, x)``.

    ``linear_factor`` is the time function ``g`` when ``h(t, x) = x * g(t)``
    exactly; it enables closed-form mark integrals.
    """

    family = "abstract"
    differentiable_in_t = True

    def eval(self, t, x):
        raise NotImplementedError

    def __call__(self, t, x):
        return self.eval(t, x)

    def time_derivative(self, t, x):
        return None

    def space_derivative(self, t, x):
        return None

    @property
    def t_breaks(self) -> tuple[float, ...]:
        return ()

    @property
    def t_end(self) -> float:
        """Time after which the kernel vanishes identically."""
        return math.inf

    @property
    def linear_factor(self) -> TimeFunction | None:
        return None

    def x_level_sets(self, t):
        """Marks where ``|h(t, .)| = 1`` or ``h(t, .)`` jumps, shape ``t.shape + (k,)`` (NaN = none)."""
        return None

    def tail_l1(self, T: float, sigma: JumpLaw) -> float | None:
        """Upper bound on ``int_T^inf int |h| dt sigma(dx)``, or ``None``."""
        return None

    def describe(self) -> dict:
        return {"family": self.family}

    def __repr__(self):
        return f"{type(self).__name__}({self.describe()})"


class ZeroKernel(Kernel):
    family = "zero"

    def eval(self, t, x):
        return np.zeros(np.broadcast(np.asarray(t), np.asarray(x)).shape)

    def time_derivative(self, t, x):
        return self.eval(t, x)

    def space_derivative(self, t, x):
        return self.eval(t, x)

    @property
    def t_end(self):
        return 0.0

    def tail_l1(self, T, sigma):
        return 0.0


@dataclass(frozen=True, repr=False)
class ConstantKernel(Kernel):
    value: float = 1.0
    family = "constant"

    def eval(self, t, x):
        return np.full(np.broadcast(np.asarray(t), np.asarray(x)).shape, float(self.value))

    def time_derivative(self, t, x):
        return np.zeros(np.broadcast(np.asarray(t), np.asarray(x)).shape)

    space_derivative = time_derivative

    def x_level_sets(self, t):
        return np.full(np.shape(t) + (1,), np.nan)

    def describe(self):
        return {"family": self.family, "value": self.value}


_MARK_FACTORS = {
    "x": (lambda x: x, lambda x: np.ones_like(x)),
    "x2": (lambda x: x * x, lambda x: 2.0 * x),
    "one": (lambda x: np.ones_like(x), lambda x: np.zeros_like(x)),
}


@dataclass(frozen=True, repr=False)
class ProductKernel(Kernel):
    """``h(t, x) = m(x) * g(t)`` with mark factor ``m`` in ``{x, x^2, 1}``."""

    g: TimeFunction
    mark: str = "x"
    family = "product"

    def __post_init__(self):
        if self.mark not in _MARK_FACTORS:
            raise ValueError(f"mark factor must be one of {sorted(_MARK_FACTORS)}")

    def eval(self, t, x):
        m, _ = _MARK_FACTORS[self.mark]
        return m(np.asarray(x, dtype=float)) * self.g(t)

    def time_derivative(self, t, x):
        m, _ = _MARK_FACTORS[self.mark]
        return m(np.asarray(x, dtype=float)) * self.g.derivative(t)

    def space_derivative(self, t, x):
        _, dm = _MARK_FACTORS[self.mark]
        return dm(np.asarray(x, dtype=float)) * self.g(t)

    @property
    def t_breaks(self):
        return tuple(self.g.breaks)

    @property
    def t_end(self):
        return self.g.support_end

    @property
    def linear_factor(self):
        return self.g if self.mark == "x" else None

    def x_level_sets(self, t):
        g = np.abs(self.g(t))
        with np.errstate(divide="ignore", invalid="ignore"):
            if self.mark == "x":
                c = np.where(g > 0, 1.0 / g, np.nan)
            elif self.mark == "x2":
                c = np.where(g > 0, 1.0 / np.sqrt(g), np.nan)
            else:
                return np.full(np.shape(t) + (1,), np.nan)
        return np.stack((-c, c), axis=-1)

    def tail_l1(self, T, sigma):
        tail = self.g.tail_integral(T)
        if tail == 0.0:
            return 0.0
        if not math.isfinite(tail):
            return None
        try:
            if self.mark == "x":
                moment = sigma.abs_mean()
            elif self.mark == "one":
                moment = 1.0
            else:
                moment = float(sigma.partial_second(np.inf))
        except NotImplementedError:
            return None
        return tail * moment

    def describe(self):
        return {"family": self.family, "mark": self.mark, "g": self.g.describe()}


def product_exp(beta: float = 1.0) -> ProductKernel:
    return ProductKernel(ExpDecay(beta))


def product_power(beta: float = 2.0) -> ProductKernel:
    return ProductKernel(PowerDecay(beta))


@dataclass(frozen=True, repr=False)
class TimeWindow(Kernel):
    """``f(t, x) * 1_[0, t0](t)``."""

    inner: Kernel
    t0: float
    family = "time_window"

    def __post_init__(self):
        if not (self.t0 > 0 and math.isfinite(self.t0)):
            raise ValueError("window end t0 must be finite and > 0")

    def _mask(self, t):
        t = np.asarray(t, dtype=float)
        return (t >= 0) & (t <= self.t0)

    def eval(self, t, x):
        return np.where(self._mask(t), self.inner.eval(t, x), 0.0)

    def time_derivative(self, t, x):
        d = self.inner.time_derivative(t, x)
        return None if d is None else np.where(self._mask(t), d, 0.0)

    def space_derivative(self, t, x):
        d = self.inner.space_derivative(t, x)
        return None if d is None else np.where(self._mask(t), d, 0.0)

    @property
    def t_breaks(self):
        return tuple(b for b in self.inner.t_breaks if b < self.t0) + (self.t0,)

    @property
    def t_end(self):
        return min(self.t0, self.inner.t_end)

    @property
    def linear_factor(self):
        g = self.inner.linear_factor
        return None if g is None else _Windowed(g, self.t0)

    def x_level_sets(self, t):
        return self.inner.x_level_sets(t)

    def tail_l1(self, T, sigma):
        if T >= self.t0:
            return 0.0
        return self.inner.tail_l1(T, sigma)

    def describe(self):
        return {"family": self.family, "t0": self.t0, "inner": self.inner.describe()}


@dataclass(frozen=True)
class _Windowed(TimeFunction):
    g: TimeFunction
    t0: float
    family = "windowed"

    @property
    def breaks(self):
        return tuple(b for b in self.g.breaks if b < self.t0) + (self.t0,)

    @property
    def support_end(self):
        return min(self.t0, self.g.support_end)

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        return np.where((t >= 0) & (t <= self.t0), self.g(t), 0.0)

    def derivative(self, t):
        t = np.asarray(t, dtype=float)
        return np.where((t >= 0) & (t <= self.t0), self.g.derivative(t), 0.0)

    def tail_integral(self, T):
        if T >= self.t0:
            return 0.0
        full = self.g.tail_integral(T)
        return full if math.isfinite(full) else math.inf


@dataclass(frozen=True, repr=False)
class BigJumpWindow(Kernel):
    """``f(t, x) * 1_{|x| >= 1}``."""

    inner: Kernel
    family = "big_jump_window"
    differentiable_in_t = True

    def eval(self, t, x):
        x = np.asarray(x, dtype=float)
        return np.where(np.abs(x) >= 1.0, self.inner.eval(t, x), 0.0)

    def time_derivative(self, t, x):
        d = self.inner.time_derivative(t, x)
        return None if d is None else np.where(np.abs(np.asarray(x)) >= 1.0, d, 0.0)

    def space_derivative(self, t, x):
        d = self.inner.space_derivative(t, x)
        return None if d is None else np.where(np.abs(np.asarray(x)) >= 1.0, d, 0.0)

    @property
    def t_breaks(self):
        return self.inner.t_breaks

    @property
    def t_end(self):
        return self.inner.t_end

    def x_level_sets(self, t):
        inner = self.inner.x_level_sets(t)
        edges = np.broadcast_to(np.array([-1.0, 1.0]), np.shape(t) + (2,))
        return edges if inner is None else np.concatenate((inner, edges), axis=-1)

    def tail_l1(self, T, sigma):
        return self.inner.tail_l1(T, sigma)

    def describe(self):
        return {"family": self.family, "inner": self.inner.describe()}


@dataclass(frozen=True, repr=False)
class AdditiveKernel(Kernel):
    """``h(t, x) = g(t) + c * x * exp(-beta t)``."""

    g: TimeFunction
    c: float = 1.0
    beta: float = 1.0
    family = "additive"

    def eval(self, t, x):
        t = np.asarray(t, dtype=float)
        return self.g(t) + self.c * np.asarray(x, dtype=float) * np.exp(-self.beta * t)

    def time_derivative(self, t, x):
        t = np.asarray(t, dtype=float)
        return self.g.derivative(t) - self.beta * self.c * np.asarray(x, dtype=float) * np.exp(-self.beta * t)

    def space_derivative(self, t, x):
        t = np.asarray(t, dtype=float)
        return self.c * np.exp(-self.beta * t) * np.ones_like(np.asarray(x, dtype=float))

    @property
    def t_breaks(self):
        return tuple(self.g.breaks)

    def x_level_sets(self, t):
        t = np.asarray(t, dtype=float)
        s = self.c * np.exp(-self.beta * t)
        g = self.g(t)
        with np.errstate(divide="ignore", invalid="ignore"):
            a = np.where(s != 0, (1.0 - g) / s, np.nan)
            b = np.where(s != 0, (-1.0 - g) / s, np.nan)
        return np.stack((a, b), axis=-1)

    def tail_l1(self, T, sigma):
        gt = self.g.tail_integral(T)
        if not math.isfinite(gt) or self.beta <= 0:
            return None
        try:
            m = sigma.abs_mean()
        except NotImplementedError:
            return None
        return gt + abs(self.c) * m * math.exp(-self.beta * T) / self.beta

    def describe(self):
        return {"family": self.family, "g": self.g.describe(), "c": self.c, "beta": self.beta}


@dataclass(frozen=True, repr=False)
class ScaledKernel(Kernel):
    """``factor * h(t, x)``."""

    inner: Kernel
    factor: float
    family = "scaled"

    def eval(self, t, x):
        return self.factor * self.inner.eval(t, x)

    def time_derivative(self, t, x):
        d = self.inner.time_derivative(t, x)
        return None if d is None else self.factor * d

    def space_derivative(self, t, x):
        d = self.inner.space_derivative(t, x)
        return None if d is None else self.factor * d

    @property
    def t_breaks(self):
        return self.inner.t_breaks

    @property
    def t_end(self):
        return self.inner.t_end if self.factor != 0 else 0.0

    @property
    def linear_factor(self):
        g = self.inner.linear_factor
        return None if g is None else _ScaledTime(g, self.factor, 1.0)

    def tail_l1(self, T, sigma):
        inner = self.inner.tail_l1(T, sigma)
        return None if inner is None else abs(self.factor) * inner

    def describe(self):
        return {"family": self.family, "factor": self.factor, "inner": self.inner.describe()}


@dataclass(frozen=True, repr=False)
class TimeScaledKernel(Kernel):
    """``h(speed * t, x)``."""

    inner: Kernel
    speed: float
    family = "time_scaled"

    def __post_init__(self):
        if not self.speed > 0:
            raise ValueError("speed must be > 0")

    def eval(self, t, x):
        return self.inner.eval(self.speed * np.asarray(t, dtype=float), x)

    def time_derivative(self, t, x):
        d = self.inner.time_derivative(self.speed * np.asarray(t, dtype=float), x)
        return None if d is None else self.speed * d

    def space_derivative(self, t, x):
        return self.inner.space_derivative(self.speed * np.asarray(t, dtype=float), x)

    @property
    def t_breaks(self):
        return tuple(b / self.speed for b in self.inner.t_breaks)

    @property
    def t_end(self):
        return self.inner.t_end / self.speed

    @property
    def linear_factor(self):
        g = self.inner.linear_factor
        return None if g is None else _ScaledTime(g, 1.0, self.speed)

    def x_level_sets(self, t):
        return self.inner.x_level_sets(self.speed * np.asarray(t, dtype=float))

    def tail_l1(self, T, sigma):
        inner = self.inner.tail_l1(self.speed * T, sigma)
        return None if inner is None else inner / self.speed

    def describe(self):
        return {"family": self.family, "speed": self.speed, "inner": self.inner.describe()}


@dataclass(frozen=True)
class _ScaledTime(TimeFunction):
    g: TimeFunction
    factor: float
    speed: float
    family = "scaled_time"

    @property
    def breaks(self):
        return tuple(b / self.speed for b in self.g.breaks)

    @property
    def support_end(self):
        return self.g.support_end / self.speed

    def __call__(self, t):
        return self.factor * self.g(self.speed * np.asarray(t, dtype=float))

    def derivative(self, t):
        return self.factor * self.speed * self.g.derivative(self.speed * np.asarray(t, dtype=float))

    def tail_integral(self, T):
        return abs(self.factor) * self.g.tail_integral(self.speed * T) / self.speed


@dataclass(frozen=True, repr=False)
class DifferenceKernel(Kernel):
    """``a(t, x) - b(t, x)``."""

    a: Kernel
    b: Kernel
    family = "difference"

    def eval(self, t, x):
        return self.a.eval(t, x) - self.b.eval(t, x)

    @property
    def t_breaks(self):
        return tuple(sorted(set(self.a.t_breaks) | set(self.b.t_breaks)))

    @property
    def t_end(self):
        return max(self.a.t_end, self.b.t_end)

    @property
    def linear_factor(self):
        ga, gb = self.a.linear_factor, self.b.linear_factor
        return None if ga is None or gb is None else _DiffTime(ga, gb)

    def tail_l1(self, T, sigma):
        ta, tb = self.a.tail_l1(T, sigma), self.b.tail_l1(T, sigma)
        return None if ta is None or tb is None else ta + tb

    def describe(self):
        return {"family": self.family, "a": self.a.describe(), "b": self.b.describe()}


@dataclass(frozen=True)
class _DiffTime(TimeFunction):
    ga: TimeFunction
    gb: TimeFunction
    family = "difference"

    @property
    def breaks(self):
        return tuple(sorted(set(self.ga.breaks) | set(self.gb.breaks)))

    @property
    def support_end(self):
        return max(self.ga.support_end, self.gb.support_end)

    def __call__(self, t):
        return self.ga(t) - self.gb(t)

    def derivative(self, t):
        return self.ga.derivative(t) - self.gb.derivative(t)

    def tail_integral(self, T):
        return self.ga.tail_integral(T) + self.gb.tail_integral(T)


def kernel_from_spec(spec: dict) -> Kernel:
    spec = dict(spec)
    family = spec.pop("family")
    if family == "zero":
        k = ZeroKernel()
    elif family == "constant":
        k = ConstantKernel(spec.pop("value", 1.0))
    elif family == "product_exp":
        k = product_exp(spec.pop("beta", 1.0))
    elif family == "product_power":
        k = product_power(spec.pop("beta", 2.0))
    elif family == "product":
        k = ProductKernel(time_function_from_spec(spec.pop("g")), spec.pop("mark", "x"))
    elif family == "time_window":
        k = TimeWindow(kernel_from_spec(spec.pop("inner")), spec.pop("t0"))
    elif family == "big_jump_window":
        k = BigJumpWindow(kernel_from_spec(spec.pop("inner")))
    elif family == "additive":
        k = AdditiveKernel(time_function_from_spec(spec.pop("g")), spec.pop("c", 1.0), spec.pop("beta", 1.0))
    else:
        raise ValueError(f"unknown kernel family {family!r}")
    if spec:
        raise ValueError(f"unexpected keys for kernel {family}: {sorted(spec)}")
    return k


# ---------------------------------------------------------------------------
# Reports

@dataclass
class ConditionReport:
    """Result of a numerically evaluated integral condition.

    ``status`` is one of ``converged``, ``diverged`` or ``inconclusive``.
    """

    name: str
    value: float
    converged: bool
    error: float
    status: str
    diagnostics: dict = field(default_factory=dict)

    @property
    def diverged(self) -> bool:
        return self.status == "diverged"

    def to_dict(self) -> dict:
        value = self.value
        if isinstance(value, float) and math.isinf(value):
            value = "inf"
        return {
            "name": self.name,
            "value": value,
            "converged": self.converged,
            "error": self.error,
            "status": self.status,
            "diagnostics": _jsonable(self.diagnostics),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else str(v)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    return obj


# ---------------------------------------------------------------------------
# Integration engine

def _centered_exponent(y, inside):
    """``exp(i y) - 1 - i y 1_inside`` with series for tiny ``y``."""
    s = np.sin(0.5 * y)
    re = -2.0 * s * s
    sin_y = np.sin(y)
    small = np.abs(y) < 1e-4
    y3 = y * y * y
    im_centered = np.where(small, -y3 / 6.0 + y3 * y * y / 120.0, sin_y - y)
    im = np.where(inside, im_centered, sin_y)
    return re + 1j * im


class _Integrand:
    """Named integrand ``F(h)`` with its closed-form mark expectation for ``h = x g(t)``."""

    def __init__(self, name: str, u=None):
        self.name = name
        self.u = None if u is None else np.asarray(u, dtype=float)

    @property
    def is_complex(self):
        return self.name == "cf"

    @property
    def out_shape(self):
        return () if self.u is None else self.u.shape

    def envelope_factor(self) -> float:
        if self.name == "cf":
            umax = float(np.max(np.abs(self.u))) if self.u.size else 0.0
            return max(2.0, 0.5 * umax * umax)
        return 1.0

    def of_h(self, h):
        if self.name == "l2":
            return np.minimum(h * h, 1.0)
        if self.name == "l1":
            return np.abs(h)
        if self.name == "center":
            return np.where(np.abs(h) <= 1.0, h, 0.0)
        if self.name == "nonzero":
            return (h != 0.0).astype(float)
        if self.name == "cf":
            inside = (np.abs(h) <= 1.0)[..., None]
            return _centered_exponent(h[..., None] * self.u, inside)
        raise ValueError(self.name)

    def of_g(self, g, sigma: JumpLaw):
        g = np.asarray(g, dtype=float)
        ag = np.abs(g)
        with np.errstate(divide="ignore"):
            c = np.where(ag > 0, 1.0 / ag, np.inf)
        nz = ag > 0
        if self.name == "l2":
            return np.where(nz, g * g * sigma.partial_second(c) + sigma.tail_prob(c), 0.0)
        if self.name == "l1":
            return ag * sigma.abs_mean()
        if self.name == "center":
            return np.where(nz, g * sigma.partial_mean(c), 0.0)
        if self.name == "nonzero":
            return nz.astype(float)
        if self.name == "cf":
            ug = g[:, None] * self.u[None, :]
            m1 = np.where(nz, sigma.partial_mean(c), 0.0)
            return sigma.cf_minus_one(ug) - 1j * ug * m1[:, None]
        raise ValueError(self.name)


_MC_NODES = 1 << 14
_MC_BATCHES = 16
_MC_STREAM = RngStream(0x5EED5EED, 7)


def _linear_factor_for(kernel: Kernel, sigma: JumpLaw):
    g = kernel.linear_factor
    if g is None and isinstance(kernel, BigJumpWindow):
        if sigma.min_abs() >= 1.0:
            g = kernel.inner.linear_factor
    if g is not None and sigma.has_closed_forms:
        return g
    return None


class _MarkIntegrator:
    """Evaluates ``t -> E_sigma[F(h(t, X))]`` on arrays of times."""

    def __init__(self, kernel: Kernel, sigma: JumpLaw, integrand: _Integrand, force_generic=False):
        self.kernel, self.sigma, self.integrand = kernel, sigma, integrand
        self.g = None if force_generic else _linear_factor_for(kernel, sigma)
        self.method = "closed_form"
        if self.g is None:
            if sigma.atoms() is not None:
                self.method = "atoms"
            elif sigma.has_density:
                self.method = "quadrature"
            else:
                self.method = "monte_carlo"
                self._mc_x = sigma.sample(_MC_NODES, _MC_STREAM.generator())
        self.batches = _MC_BATCHES if self.method == "monte_carlo" else 1

    def _panels(self, t):
        """Panel count per sub-interval from the integrand's oscillation."""
        level_sets = self.kernel.x_level_sets(t[:1]) is not None
        base = 6 if level_sets else 48
        if not self.integrand.is_complex or self.integrand.u.size == 0:
            return base
        umax = float(np.max(np.abs(self.integrand.u)))
        width = max(b - a for a, b in self.sigma.quadrature_support())
        probe_t = t[:: max(1, t.size // 16)]
        xs = np.linspace(*self.sigma.quadrature_support()[0], 129)
        slope = 0.0
        for a, b in self.sigma.quadrature_support():
            xs = np.linspace(a, b, 129)
            hv = self.kernel.eval(probe_t[:, None], xs[None, :])
            slope = max(slope, float(np.max(np.abs(np.diff(hv, axis=1))) / (xs[1] - xs[0])))
        return int(min(4000, max(base, math.ceil(umax * slope * width / 2.0))))

    def _nodes(self, t):
        if self.method == "atoms":
            vals, probs = self.sigma.atoms()
            x = np.broadcast_to(vals, t.shape + vals.shape)
            return x, np.broadcast_to(probs, x.shape)
        panels = self._panels(t)
        xs, ws = [], []
        level = self.kernel.x_level_sets(t)
        for a, b in self.sigma.quadrature_support():
            if level is None:
                cuts = np.empty(t.shape + (0,))
            else:
                cuts = np.where(np.isnan(level), b, np.clip(level, a, b))
            ends = np.concatenate((np.full(t.shape + (1,), a), np.sort(cuts, axis=-1),
                                   np.full(t.shape + (1,), b)), axis=-1)
            for j in range(ends.shape[-1] - 1):
                x, w = panel_rule(ends[..., j], ends[..., j + 1], panels)
                xs.append(x)
                ws.append(w * self.sigma.density(x))
        return np.concatenate(xs, axis=-1), np.concatenate(ws, axis=-1)

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        F = self.integrand
        if self.g is not None:
            out = F.of_g(self.g(t), self.sigma)
            return out.reshape(t.shape + (1,) + F.out_shape)
        if self.method == "monte_carlo":
            x = self._mc_x.reshape(self.batches, -1)
            out = []
            for row in t:
                h = self.kernel.eval(row, x)
                out.append(F.of_h(h).mean(axis=1))
            return np.stack(out)
        # chunk over times to bound memory of (times, nodes, u) blocks
        res = []
        per_t = None
        step = t.size
        start = 0
        while start < t.size:
            tt = t[start:start + step]
            x, w = self._nodes(tt)
            if per_t is None:
                per_t = x.shape[-1] * max(1, int(np.prod(F.out_shape)))
                step = max(1, int(2_000_000 // per_t))
                if tt.size > step:
                    tt = tt[:step]
                    x, w = x[:step], w[:step]
            vals = F.of_h(self.kernel.eval(tt[:, None], x))
            if F.out_shape:
                r = np.einsum("tn,tn...->t...", w, vals)
            else:
                r = np.sum(w * vals, axis=-1)
            res.append(r)
            start += tt.size
        out = np.concatenate(res, axis=0)
        return out.reshape(t.shape + (1,) + F.out_shape)


@dataclass
class _Integral:
    value: np.ndarray
    error: float
    status: str
    history: list
    method: str
    horizon: float
    batch_values: np.ndarray | None = None


def _time_pieces(kernel: Kernel, t_lo: float, t_hi: float):
    """Yield ``(a, b, is_last)`` pieces covering ``[t_lo, t_hi]`` (``t_hi`` may be inf)."""
    end = min(t_hi, kernel.t_end)
    breaks = sorted(b for b in kernel.t_breaks if t_lo < b < end)
    if math.isfinite(end):
        edges = [t_lo] + breaks + [end]
        # keep pieces short enough for the adaptive rule to see the decay
        refined = [edges[0]]
        for b in edges[1:]:
            a = refined[-1]
            while b - a > max(1.0, 2.0 * a) * 1.0000001:
                a = max(1.0, 2.0 * a) if a >= 1.0 else a + 1.0
                a = min(a, b)
                refined.append(a)
            if b > refined[-1]:
                refined.append(b)
        for k in range(len(refined) - 1):
            yield refined[k], refined[k + 1], k == len(refined) - 2
        return
    a = t_lo
    bset = list(breaks)
    while True:
        b = max(1.0, 2.0 * a) if a >= 1.0 else a + 1.0 if a > 0 else 1.0
        inner = [x for x in bset if a < x < b]
        if inner:
            b = inner[0]
        yield a, b, False
        a = b


def integrate_kernel(kernel: Kernel, sigma: JumpLaw, rate: float, integrand: _Integrand,
                     tol: float, t_lo: float = 0.0, t_hi: float = math.inf,
                     divergence_threshold: float = DIVERGENCE_THRESHOLD,
                     max_pieces: int = MAX_PIECES, force_generic: bool = False) -> _Integral:
    """``rate * int_{t_lo}^{t_hi} int F(h(t, x)) dt sigma(dx)`` on doubling pieces."""
    mark = _MarkIntegrator(kernel, sigma, integrand, force_generic=force_generic)
    total = None
    err = 0.0
    history = []
    prev_norm = None
    piece_tol = 0.1 * tol / max(rate, 1e-300)
    status = "inconclusive"
    b = t_lo
    for k, (a, b, last) in enumerate(_time_pieces(kernel, t_lo, t_hi)):
        res = gauss_kronrod(mark, a, b, piece_tol)
        piece = res.value * rate
        err += res.error * rate
        total = piece if total is None else total + piece
        mean_total = total.mean(axis=0)
        history.append((b, mean_total.copy()))
        norm = float(np.max(np.abs(piece.mean(axis=0)))) if piece.size else 0.0
        if last:
            status = "converged"
            break
        if math.isfinite(t_hi) and b >= t_hi:
            status = "converged"
            break
        env = kernel.tail_l1(b, sigma)
        if env is not None and env * rate * integrand.envelope_factor() < 0.1 * tol:
            err += env * rate * integrand.envelope_factor()
            status = "converged"
            break
        if prev_norm is not None:
            if norm == 0.0 and prev_norm == 0.0:
                status = "converged"
                break
            if prev_norm > 0:
                ratio = norm / prev_norm
                if ratio < 0.9:
                    tail = norm * ratio / (1.0 - ratio)
                    if tail < 0.1 * tol:
                        err += tail
                        status = "converged"
                        break
        if float(np.max(np.abs(mean_total))) > divergence_threshold and (
                prev_norm is None or norm >= 0.5 * prev_norm):
            status = "diverged"
            break
        prev_norm = norm
        if k + 1 >= max_pieces:
            break
    if total is None:
        total = np.zeros((mark.batches,) + integrand.out_shape,
                         dtype=complex if integrand.is_complex else float)
        status = "converged"
    value = total.mean(axis=0)
    batch_values = None
    if mark.batches > 1:
        batch_values = total
        err += float(np.max(np.abs(total.std(axis=0, ddof=1)))) / math.sqrt(mark.batches)
    return _Integral(value, err, status, history, mark.method, b, batch_values)


def _report(name: str, integral: _Integral, tol: float, extra=None) -> ConditionReport:
    value = float(np.real(integral.value))
    if integral.status == "diverged":
        return ConditionReport(name, math.inf, False, math.inf, "diverged",
                               {"method": integral.method, "horizon_reached": integral.horizon,
                                "partial_value": value, **(extra or {})})
    converged = integral.status == "converged" and integral.error <= tol
    status = "converged" if converged else "inconclusive"
    diag = {"method": integral.method, "horizon_reached": integral.horizon, **(extra or {})}
    return ConditionReport(name, value, converged, integral.error, status, diag)


def l2_condition(k: Kernel, sigma: JumpLaw, rate: float = 1.0, tol: float = 1e-6,
                 divergence_threshold: float = DIVERGENCE_THRESHOLD, **kw) -> ConditionReport:
    """``rate * int int (|h|^2 ^ 1) dt sigma(dx)``; divergence is reported, not raised."""
    if tol <= 0:
        raise ValueError("tol must be > 0")
    res = integrate_kernel(k, sigma, rate, _Integrand("l2"), tol,
                           divergence_threshold=divergence_threshold, **kw)
    return _report("l2", res, tol)


def l1_norm(k: Kernel, sigma: JumpLaw, rate: float = 1.0, tol: float = 1e-6, **kw) -> ConditionReport:
    if tol <= 0:
        raise ValueError("tol must be > 0")
    res = integrate_kernel(k, sigma, rate, _Integrand("l1"), tol, **kw)
    return _report("l1", res, tol)


def centering_a(k: Kernel, sigma: JumpLaw, rate: float = 1.0, s_max_schedule=None,
                tol: float = 1e-6, **kw) -> ConditionReport:
    """Limit of ``A(s) = rate * int_0^s int h 1_{|h|<=1}`` along an increasing schedule.

    The default schedule doubles ``s``; convergence is the Cauchy criterion on
    successive values together with a geometric tail estimate.
    """
    if tol <= 0:
        raise ValueError("tol must be > 0")
    F = _Integrand("center")
    if s_max_schedule is not None:
        sched = [float(s) for s in s_max_schedule]
        if any(b <= a for a, b in zip(sched, sched[1:])) or sched[0] <= 0:
            raise ValueError("schedule must be positive and increasing")
        values, err, prev = [], 0.0, 0.0
        for s in sched:
            r = integrate_kernel(k, sigma, rate, F, tol, t_lo=prev, t_hi=s, **kw)
            err += r.error
            values.append((values[-1] if values else 0.0) + float(r.value))
            prev = s
        incr = [abs(b - a) for a, b in zip(values, values[1:])]
        converged = bool(incr) and incr[-1] < tol
        return ConditionReport("centering", values[-1], converged, err,
                               "converged" if converged else "inconclusive",
                               {"schedule": sched, "sequence": values})
    res = integrate_kernel(k, sigma, rate, F, tol, **kw)
    seq = [float(v) for _, v in res.history]
    report = _report("centering", res, tol,
                     {"schedule": [s for s, _ in res.history], "sequence": seq})
    if res.status != "converged" and len(seq) >= 4:
        incr = np.abs(np.diff(seq[-4:]))
        if not np.all(incr[1:] <= incr[:-1]):
            report.diagnostics["note"] = "A(s) is not Cauchy along the schedule"
    return report


def atom_measure(k: Kernel, sigma: JumpLaw, rate: float = 1.0, tol: float = 1e-10) -> float:
    """``rate * (lambda x sigma){h != 0}``; ``inf`` for kernels without finite time support."""
    if isinstance(k, ZeroKernel) or k.t_end == 0.0:
        return 0.0
    if not math.isfinite(k.t_end):
        return math.inf
    res = integrate_kernel(k, sigma, rate, _Integrand("nonzero"), tol)
    return float(res.value)


class PoissonIntegralError(ValueError):
    pass


def from_poisson_integral(f: Kernel, mass_on_big_jumps: float, big_jump_law: JumpLaw):
    """Series representation of ``int int_{|x|>=1} f(t, x) N(dt, dx)``.

    Returns ``(f * 1_{|x|>=1}, rate, sigma)`` with ``rate = nu(B_1^c)`` and
    ``sigma`` the normalized big-jump law.
    """
    if not (math.isfinite(mass_on_big_jumps) and mass_on_big_jumps > 0):
        raise PoissonIntegralError("big-jump mass must be finite and > 0")
    if big_jump_law.min_abs() < 1.0:
        raise PoissonIntegralError("the normalized big-jump law must live on |x| >= 1")
    return BigJumpWindow(f), float(mass_on_big_jumps), big_jump_law
