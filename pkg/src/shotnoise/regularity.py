"""Numerical surrogates for absolute-continuity conditions.

Absolute continuity cannot be decided from samples. The checks here test
sufficient conditions (non-vanishing derivatives, convergence of functions
and derivatives) on seeded samples or grids, and the convolution-power
diagnostic is labeled indicative only.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from . import laws
from .kernels import Kernel, TimeFunction, _jsonable
from .measures import DiscreteSignedMeasure, convolution_power
from .stochastic import JumpLaw, RngStream, run_sharded

DEFAULT_EPS = 1e-8
DEFAULT_THRESHOLD = 1e-3


@dataclass
class RegularityReport:
    condition: str
    verdict: str          # pass | fail | inconclusive
    measured: dict
    sample_size: int
    tolerance: dict
    diagnostic: bool = False
    notes: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return self.verdict == "pass"

    def to_dict(self) -> dict:
        return {
            "condition": self.condition,
            "verdict": self.verdict,
            "diagnostic": self.diagnostic,
            "measured": _jsonable(self.measured),
            "sample_size": self.sample_size,
            "tolerance": _jsonable(self.tolerance),
            "notes": list(self.notes),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)


def pushforward_samples(k: Kernel, t: float, sigma: JumpLaw, n: int, stream: RngStream,
                        threads: int = 1) -> np.ndarray:
    """I.i.d. draws of ``h(U, X)`` with ``U ~ Uniform[0, t]`` and ``X ~ sigma``."""
    if not (math.isfinite(t) and t > 0):
        raise ValueError("t must be finite and > 0")

    def block(size, rng):
        u = rng.uniform(0.0, t, size=size)
        x = np.asarray(sigma.sample(size, rng), dtype=float)
        return k.eval(u, x)

    parts = run_sharded(block, n, stream, threads)
    return np.concatenate(parts) if parts else np.zeros(0)


def _time_points(t_range, n, rng, t_sampling):
    """Times on ``t_range`` and self-normalized weights back to the uniform law.

    ``t_sampling`` is ``"uniform"`` or ``("beta", a, b)``; the beta option is
    a strictly monotone change of sampling measure with an equivalent density.
    """
    lo, hi = map(float, t_range)
    if not hi > lo:
        raise ValueError("t_range must satisfy lo < hi")
    if t_sampling == "uniform":
        return lo + (hi - lo) * rng.random(n), np.full(n, 1.0 / n)
    kind, a, b = t_sampling
    if kind != "beta":
        raise ValueError("t_sampling must be 'uniform' or ('beta', a, b)")
    z = rng.beta(a, b, size=n)
    w = 1.0 / stats.beta(a, b).pdf(z)
    return lo + (hi - lo) * z, w / w.sum()


def _fraction_verdict(name, small, weights, threshold, n, eps, extra=None):
    frac = float(np.sum(weights[small]))
    n_eff = 1.0 / float(np.sum(weights ** 2))
    margin = 3.0 * math.sqrt(max(threshold * (1.0 - threshold), 1e-300) / n_eff)
    if frac + margin < threshold:
        verdict = "pass"
    elif frac - margin >= threshold:
        verdict = "fail"
    else:
        verdict = "inconclusive"
    measured = {"fraction": frac, "margin": margin, "effective_sample_size": n_eff, **(extra or {})}
    return RegularityReport(name, verdict, measured, n, {"eps": eps, "threshold": threshold})


def check_time_derivative(k: Kernel, t_range, sigma: JumpLaw, n: int = 10_000,
                          eps: float = DEFAULT_EPS, stream: RngStream | None = None,
                          threshold: float = DEFAULT_THRESHOLD, t_sampling="uniform") -> RegularityReport:
    """Fraction of sampled ``(t, x)`` with ``|d/dt h(t, x)| <= eps``."""
    stream = stream or RngStream(0)
    rng = stream.generator()
    t, w = _time_points(t_range, n, rng, t_sampling)
    x = np.asarray(sigma.sample(n, rng), dtype=float)
    d = k.time_derivative(t, x)
    source = "declared"
    if d is None:
        if not k.differentiable_in_t:
            return RegularityReport("tderiv", "inconclusive", {}, n, {"eps": eps, "threshold": threshold},
                                    notes=["kernel declares no time derivative and is not differentiable"])
        step = 1e-6 * np.maximum(1.0, np.abs(t))
        d = (k.eval(t + step, x) - k.eval(t - step, x)) / (2.0 * step)
        source = "finite_difference"
    rep = _fraction_verdict("tderiv", np.abs(d) <= eps, w, threshold, n, eps, {"derivative": source})
    return rep


def check_space_jacobian(k: Kernel, t_range, sigma: JumpLaw, n: int = 10_000,
                         eps: float = DEFAULT_EPS, stream: RngStream | None = None,
                         threshold: float = DEFAULT_THRESHOLD, t_sampling="uniform") -> RegularityReport:
    """Fraction of sampled ``(t, x)`` with ``|d/dx h|^2 <= eps`` (the 1x1 Gram determinant)."""
    tol = {"eps": eps, "threshold": threshold}
    if not sigma.has_density:
        return RegularityReport("xjac", "inconclusive", {}, n, tol,
                                notes=["the jump law has no density"])
    stream = stream or RngStream(0)
    rng = stream.generator()
    t, w = _time_points(t_range, n, rng, t_sampling)
    x = np.asarray(sigma.sample(n, rng), dtype=float)
    d = k.space_derivative(t, x)
    if d is None:
        return RegularityReport("xjac", "inconclusive", {}, n, tol,
                                notes=["kernel declares no space derivative"])
    return _fraction_verdict("xjac", d * d <= eps, w, threshold, n, eps)


def check_davydov(g_seq, g: TimeFunction, interval, n_grid: int = 10_001, eps: float = DEFAULT_EPS,
                  tol: float = 1e-2, threshold: float = DEFAULT_THRESHOLD) -> RegularityReport:
    """Value at the left end, L1 distance of derivatives, and the flat set of ``g'``.

    Passes when the first two discrepancies are non-increasing along the
    sequence and end below ``tol``, and ``{|g'| <= eps}`` covers less than
    ``threshold`` of the interval.
    """
    lo, hi = map(float, interval)
    if not hi > lo:
        raise ValueError("interval must satisfy lo < hi")
    grid = np.linspace(lo, hi, n_grid)
    dg = np.asarray(g.derivative(grid), dtype=float)
    value_gap, deriv_gap = [], []
    for gn in g_seq:
        value_gap.append(abs(float(gn(np.array(lo))) - float(g(np.array(lo)))))
        deriv_gap.append(float(np.trapezoid(np.abs(np.asarray(gn.derivative(grid)) - dg), grid)))
    flat = float(np.mean(np.abs(dg) <= eps))
    measured = {
        "value_gap": value_gap,
        "derivative_l1_gap": deriv_gap,
        "flat_fraction": flat,
        "flat_measure": flat * (hi - lo),
    }

    def settles(seq):
        return not seq or (all(b <= a + 1e-15 for a, b in zip(seq, seq[1:])) and seq[-1] < tol)

    ok = settles(value_gap) and settles(deriv_gap) and flat < threshold
    return RegularityReport("davydov", "pass" if ok else "fail", measured, n_grid,
                            {"tol": tol, "eps": eps, "threshold": threshold})


def convolution_power_diagnostic(samples, p: int, grid=None, bins: int = 100,
                                 concentration_factor: float = 10.0) -> RegularityReport:
    """Histogram the samples, convolve the histogram ``p`` times and look for concentration.

    ``grid`` is explicit equal-width edges; by default ``bins`` equal bins
    span the sample range. Locations are bin indices during convolution, so
    the discrete arithmetic is exact. Indicative only.
    """
    if int(p) != p or p < 1:
        raise ValueError("p must be a positive integer")
    x = np.asarray(samples, dtype=float).ravel()
    if x.size == 0:
        raise ValueError("samples must be non-empty")
    if grid is None:
        lo, hi = float(x.min()), float(x.max())
        if hi <= lo:
            lo, hi = lo - 0.5, hi + 0.5
        edges = np.linspace(lo, hi, bins + 1)
    else:
        edges = np.asarray(grid, dtype=float)
        widths = np.diff(edges)
        if edges.size < 2 or not np.allclose(widths, widths[0], rtol=1e-9):
            raise ValueError("grid must be equal-width edges")
    width = float(edges[1] - edges[0])
    counts = np.histogram(x, bins=edges)[0]
    base = DiscreteSignedMeasure(np.arange(counts.size, dtype=float), counts / x.size)
    conv = convolution_power(base, int(p))
    span = int(p) * (counts.size - 1) + 1
    uniform_level = conv.total_mass / span
    masses = conv.weights
    heavy = masses > concentration_factor * uniform_level
    peak = int(np.argmax(masses))
    centers0 = 0.5 * (edges[0] + edges[1])
    measured = {
        "p": int(p),
        "bin_width": width,
        "bins": span,
        "max_bin_mass": float(masses.max()),
        "max_bin_location": float(int(p) * centers0 + conv.locations[peak] * width),
        "uniform_level": uniform_level,
        "concentrated_mass": float(masses[heavy].sum()),
        "outside_grid": int(x.size - counts.sum()),
    }
    flagged = bool(heavy.any())
    notes = ["indicative diagnostic: absolute continuity is not decidable from samples"]
    if flagged:
        notes.append("mass concentrates in bins above the concentration factor")
    return RegularityReport("convpow", "fail" if flagged else "pass", measured, int(x.size),
                            {"concentration_factor": concentration_factor}, diagnostic=True, notes=notes)


def pushforward_tv(k_n: Kernel, k: Kernel, t: float, sigma: JumpLaw, n: int,
                   stream: RngStream, threads: int = 1) -> tuple[float, float]:
    """Histogram TV between pushforwards of ``k_n`` and ``k`` with paired draws; returns ``(tv, floor)``."""
    a = pushforward_samples(k_n, t, sigma, n, stream, threads)
    b = pushforward_samples(k, t, sigma, n, stream, threads)
    la, lb = laws.estimate_paired(a, b)
    return laws.tv_distance(la, lb), laws.noise_floor(la, lb)
