"""Jump SDE ``X_t = x0 + int_0^t a(X_s) ds + Z_t`` driven by a compound Poisson ``Z``.

Between jumps the ODE ``x' = a(x)`` is integrated with classical RK4 on a
uniform grid of step ``t_end / ceil(t_end / ode_tol**0.25)``; a grid step
containing jump times is split exactly at them. The same routine drives single
recorded paths and vectorized batches of terminal values.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from . import laws
from .stochastic import ExponentialLaw, JumpLaw, RngStream, _arrivals_block, run_sharded

DEFAULT_BOX = (-1e6, 1e6)


class SdeTruncationError(RuntimeError):
    """The state left the configured box; ``path`` holds the partial trajectory."""

    def __init__(self, message, path=None):
        super().__init__(message)
        self.path = path


# ---------------------------------------------------------------------------
# Drifts

class DriftSpec:
    """Drift ``a`` with derivative ``a'``.

    Registry families have ``a`` and ``a'`` jointly continuous in their
    parameters and the state; that property is declared, not checked.
    """

    family = "abstract"

    def a(self, x):
        raise NotImplementedError

    def da(self, x):
        raise NotImplementedError

    def locally_monotone(self, x0: float, radius: float = 0.5, points: int = 201) -> bool:
        """``a'`` has a strict constant sign on ``[x0 - radius, x0 + radius]``, or ``a`` is constant there."""
        grid = np.linspace(x0 - radius, x0 + radius, points)
        d = np.asarray(self.da(grid), dtype=float)
        return bool(np.all(d > 0) or np.all(d < 0) or np.all(d == 0))

    def derivative_bound(self, box=DEFAULT_BOX, points: int = 10_001) -> float:
        grid = np.linspace(box[0], box[1], points)
        return float(np.max(np.abs(self.da(grid))))

    def describe(self) -> dict:
        return {"family": self.family}


@dataclass(frozen=True)
class ZeroDrift(DriftSpec):
    family = "zero"

    def a(self, x):
        return np.zeros_like(np.asarray(x, dtype=float))

    def da(self, x):
        return np.zeros_like(np.asarray(x, dtype=float))


@dataclass(frozen=True)
class ConstantDrift(DriftSpec):
    value: float = 1.0
    family = "constant"

    def a(self, x):
        return np.full_like(np.asarray(x, dtype=float), self.value)

    def da(self, x):
        return np.zeros_like(np.asarray(x, dtype=float))

    def describe(self):
        return {"family": self.family, "value": self.value}


@dataclass(frozen=True)
class AffineDrift(DriftSpec):
    """``a(x) = c0 + c1 x``; ``linear(lam)`` is ``c0 = 0, c1 = -lam``."""

    c0: float = 0.0
    c1: float = -1.0
    family = "affine"

    def a(self, x):
        return self.c0 + self.c1 * np.asarray(x, dtype=float)

    def da(self, x):
        return np.full_like(np.asarray(x, dtype=float), self.c1)

    def describe(self):
        return {"family": self.family, "c0": self.c0, "c1": self.c1}


def linear(lam: float) -> AffineDrift:
    return AffineDrift(0.0, -float(lam))


@dataclass(frozen=True)
class DampedCubicDrift(DriftSpec):
    """``a(x) = -x^3 - lam x``."""

    lam: float = 1.0
    family = "damped_cubic"

    def a(self, x):
        x = np.asarray(x, dtype=float)
        return -x * x * x - self.lam * x

    def da(self, x):
        x = np.asarray(x, dtype=float)
        return -3.0 * x * x - self.lam

    def describe(self):
        return {"family": self.family, "lam": self.lam}


@dataclass(frozen=True)
class LogisticDrift(DriftSpec):
    """``a(x) = amplitude * tanh(steepness * x / 2)``, monotone with bounded derivative."""

    amplitude: float = -1.0
    steepness: float = 1.0
    family = "logistic"

    def a(self, x):
        return self.amplitude * np.tanh(0.5 * self.steepness * np.asarray(x, dtype=float))

    def da(self, x):
        c = np.cosh(0.5 * self.steepness * np.asarray(x, dtype=float))
        return 0.5 * self.amplitude * self.steepness / (c * c)

    def describe(self):
        return {"family": self.family, "amplitude": self.amplitude, "steepness": self.steepness}


@dataclass(frozen=True)
class ScaledDrift(DriftSpec):
    """``factor * a(x)``."""

    inner: DriftSpec
    factor: float
    family = "scaled"

    def a(self, x):
        return self.factor * self.inner.a(x)

    def da(self, x):
        return self.factor * self.inner.da(x)

    def describe(self):
        return {"family": self.family, "factor": self.factor, "inner": self.inner.describe()}


def drift_from_spec(spec: dict) -> DriftSpec:
    spec = dict(spec)
    family = spec.pop("family")
    if family == "zero":
        d = ZeroDrift()
    elif family == "constant":
        d = ConstantDrift(spec.pop("value", 1.0))
    elif family == "affine":
        d = AffineDrift(spec.pop("c0", 0.0), spec.pop("c1", -1.0))
    elif family == "linear":
        d = linear(spec.pop("lam", 1.0))
    elif family == "damped_cubic":
        d = DampedCubicDrift(spec.pop("lam", 1.0))
    elif family == "logistic":
        d = LogisticDrift(spec.pop("amplitude", -1.0), spec.pop("steepness", 1.0))
    else:
        raise ValueError(f"unknown drift family {family!r}")
    if spec:
        raise ValueError(f"unexpected keys for drift {family}: {sorted(spec)}")
    return d


# ---------------------------------------------------------------------------
# Paths

@dataclass
class SdePath:
    jump_times: np.ndarray
    jumps: np.ndarray
    pre: np.ndarray             # X at T_i-
    post: np.ndarray            # X at T_i
    grid_t: np.ndarray          # recorded nodes; a jump time appears twice (pre, post)
    grid_x: np.ndarray
    terminal: float
    t_end: float
    step: float
    meta: dict = field(default_factory=dict)

    def to_csv(self, path) -> None:
        """Recorded nodes as ``t, x, kind`` rows (kind is node, pre or post)."""
        jt = set(self.jump_times.tolist())
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["t", "x", "kind"])
            seen = set()
            for t, x in zip(self.grid_t.tolist(), self.grid_x.tolist()):
                kind = "node"
                if t in jt:
                    kind = "post" if t in seen else "pre"
                    seen.add(t)
                w.writerow([repr(t), repr(x), kind])


def grid_step(t_end: float, ode_tol: float) -> tuple[int, float]:
    if not (t_end > 0 and ode_tol > 0):
        raise ValueError("t_end and ode_tol must be > 0")
    n = max(1, int(math.ceil(t_end / ode_tol ** 0.25)))
    return n, t_end / n


def _rk4(drift: DriftSpec, x, dt):
    k1 = drift.a(x)
    k2 = drift.a(x + 0.5 * dt * k1)
    k3 = drift.a(x + 0.5 * dt * k2)
    k4 = drift.a(x + dt * k3)
    return x + dt * (k1 + 2.0 * k2 + 2.0 * k3 + k4) / 6.0


def _integrate(drift: DriftSpec, x0, times, jumps, t_end, ode_tol, box=DEFAULT_BOX, record=False):
    """Vectorized RK4 with jumps applied at their exact times.

    ``times`` and ``jumps`` are ``(n, K)`` with ``inf`` padding in ``times``.
    Returns terminal states and, when ``record`` (``n == 1`` only), the nodes
    plus pre/post jump states.
    """
    n_paths = times.shape[0]
    x = np.broadcast_to(np.asarray(x0, dtype=float), (n_paths,)).copy()
    T = np.concatenate((times, np.full((n_paths, 1), np.inf)), axis=1)
    D = np.concatenate((np.nan_to_num(jumps), np.zeros((n_paths, 1))), axis=1)
    rows = np.arange(n_paths)
    j = np.zeros(n_paths, dtype=np.int64)
    cur = np.zeros(n_paths)
    n_steps, h = grid_step(t_end, ode_tol)
    nodes_t, nodes_x, pre, post = [0.0], [float(x[0])], [], []
    for k in range(n_steps):
        step_end = t_end if k == n_steps - 1 else (k + 1) * h
        while True:
            nxt = T[rows, j]
            target = np.minimum(nxt, step_end)
            x = _rk4(drift, x, target - cur)
            cur = target
            hit = nxt <= step_end
            bad = ~(np.isfinite(x) & (x >= box[0]) & (x <= box[1]))
            if record:
                nodes_t.append(float(cur[0]))
                nodes_x.append(float(x[0]))
            if np.any(bad):
                partial = None
                if record:
                    partial = (np.array(nodes_t), np.array(nodes_x), pre, post)
                raise SdeTruncationError(f"{int(bad.sum())} path(s) left the state box {box}", partial)
            if not np.any(hit):
                break
            if record:
                pre.append(float(x[0]))
            x[hit] = x[hit] + D[rows[hit], j[hit]]
            j[hit] += 1
            if record:
                post.append(float(x[0]))
                nodes_t.append(float(cur[0]))
                nodes_x.append(float(x[0]))
    return x, (np.array(nodes_t), np.array(nodes_x), np.array(pre), np.array(post)), h


def simulate_from_jumps(drift: DriftSpec, x0: float, jump_times, jumps, t_end: float = 1.0,
                        ode_tol: float = 1e-10, box=DEFAULT_BOX) -> SdePath:
    """Path for a given jump configuration (times in ``(0, t_end]``, sorted)."""
    jt = np.asarray(jump_times, dtype=float).ravel()
    js = np.asarray(jumps, dtype=float).ravel()
    if jt.shape != js.shape:
        raise ValueError("jump_times and jumps must match")
    if jt.size and (np.any(np.diff(jt) <= 0) or jt[0] <= 0 or jt[-1] > t_end):
        raise ValueError("jump times must be strictly increasing in (0, t_end]")
    times = jt[None, :] if jt.size else np.full((1, 1), np.inf)
    marks = js[None, :] if js.size else np.zeros((1, 1))
    try:
        xT, (gt, gx, pre, post), h = _integrate(drift, x0, times, marks, t_end, ode_tol, box, record=True)
    except SdeTruncationError as exc:
        if exc.path is not None:
            gt, gx, pre, post = exc.path
            exc.path = SdePath(jt[:len(post)], js[:len(post)], np.array(pre), np.array(post),
                               gt, gx, float(gx[-1]), float(gt[-1]), grid_step(t_end, ode_tol)[1],
                               {"truncated": True})
        raise
    return SdePath(jt, js, pre, post, gt, gx, float(xT[0]), float(t_end), h,
                   {"drift": drift.describe(), "x0": float(x0), "ode_tol": ode_tol})


def _draw_jumps(rate: float, sigma: JumpLaw, t_end: float, size: int, rng):
    times, counts = _arrivals_block(rate, t_end, size, rng)
    mask = np.isfinite(times)
    marks = np.zeros(times.shape)
    marks[mask] = np.asarray(sigma.sample(int(mask.sum()), rng), dtype=float)
    return times, marks, counts


def simulate(drift: DriftSpec, x0: float, rate: float, sigma: JumpLaw, t_end: float = 1.0,
             ode_tol: float = 1e-10, stream: RngStream | None = None, box=DEFAULT_BOX) -> SdePath:
    """One path: compound Poisson jumps at ``rate`` with sizes from ``sigma``."""
    if not (math.isfinite(rate) and rate > 0):
        raise ValueError("rate must be finite and > 0")
    rng = (stream or RngStream(0)).generator()
    times, marks, counts = _draw_jumps(rate, sigma, t_end, 1, rng)
    c = int(counts[0])
    return simulate_from_jumps(drift, x0, times[0, :c], marks[0, :c], t_end, ode_tol, box)


def terminal_values(drift: DriftSpec, x0: float, rate: float, sigma: JumpLaw, t_end: float,
                    n: int, stream: RngStream, ode_tol: float = 1e-8, threads: int = 1,
                    box=DEFAULT_BOX) -> np.ndarray:
    """``n`` draws of ``X_{t_end}``; shard ``k`` uses ``stream.substream(k)``."""

    def block(size, rng):
        times, marks, _ = _draw_jumps(rate, sigma, t_end, size, rng)
        return _integrate(drift, x0, times, marks, t_end, ode_tol, box)[0]

    parts = run_sharded(block, n, stream, threads)
    return np.concatenate(parts) if parts else np.zeros(0)


# ---------------------------------------------------------------------------
# Sensitivity to the first jump time

class NoJumpError(ValueError):
    pass


def _log_flow_integral(drift: DriftSpec, t: np.ndarray, x: np.ndarray) -> float:
    """``int a'(X_s) ds`` over recorded nodes by Simpson's rule per step.

    The midpoint state uses the cubic Hermite interpolant built from the
    node values and the slopes ``a(X)``, which keeps fourth order.
    """
    total = 0.0
    dt = np.diff(t)
    keep = dt > 0
    t0, t1 = t[:-1][keep], t[1:][keep]
    x0, x1 = x[:-1][keep], x[1:][keep]
    h = t1 - t0
    xm = 0.5 * (x0 + x1) + h * (drift.a(x0) - drift.a(x1)) / 8.0
    total = np.sum(h * (drift.da(x0) + 4.0 * drift.da(xm) + drift.da(x1)) / 6.0)
    return float(total)


def jump_time_derivative(drift: DriftSpec, path: SdePath, t_end: float | None = None) -> float:
    """``(a(X_{T1-}) - a(X_{T1})) exp(int_{T1}^{t_end} a'(X_s) ds)``, on the stored nodes."""
    t_end = path.t_end if t_end is None else t_end
    if path.jump_times.size == 0 or path.jump_times[0] > t_end:
        raise NoJumpError("the path has no jump before t_end")
    if t_end != path.t_end:
        raise ValueError("t_end must equal the simulated horizon")
    T1 = path.jump_times[0]
    # first node at T1 carrying the post-jump state
    idx = np.flatnonzero(path.grid_t == T1)
    start = int(idx[-1])
    pref = float(drift.a(np.array(path.pre[0])) - drift.a(np.array(path.post[0])))
    integral = _log_flow_integral(drift, path.grid_t[start:], path.grid_x[start:])
    return pref * math.exp(integral)


def finite_difference_derivative(drift: DriftSpec, path: SdePath, step: float = 1e-5,
                                 ode_tol: float | None = None) -> float:
    """Central difference of ``X_{t_end}`` in the first jump time, other jumps fixed."""
    if path.jump_times.size == 0:
        raise NoJumpError("the path has no jump")
    tol = ode_tol if ode_tol is not None else path.meta.get("ode_tol", 1e-10)
    x0 = path.meta["x0"]
    out = []
    for s in (step, -step):
        jt = path.jump_times.copy()
        jt[0] += s
        if (jt.size > 1 and jt[0] >= jt[1]) or jt[0] <= 0 or jt[0] > path.t_end:
            raise ValueError("the perturbed first jump time leaves its ordering interval")
        out.append(simulate_from_jumps(drift, x0, jt, path.jumps, path.t_end, tol).terminal)
    return (out[0] - out[1]) / (2.0 * step)


# ---------------------------------------------------------------------------
# Convergence in total variation over drift/initial-value sequences

@dataclass
class TvTable:
    rows: list           # dicts: index, tv, noise_floor
    verdict: str
    notes: list

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["index", "tv", "noise_floor"])
            for r in self.rows:
                w.writerow([r["index"], repr(r["tv"]), repr(r["noise_floor"])])


def tv_verdict(tvs, floors, monotone_ok: bool = True) -> tuple[str, list]:
    """Pass when the TV sequence decreases, allowing one inversion no larger
    than the local noise floor, and the last value is within 2x the floor."""
    notes = []
    inversions = [(i, tvs[i + 1] - tvs[i]) for i in range(len(tvs) - 1) if tvs[i + 1] > tvs[i]]
    bad = [i for i, d in inversions if d > floors[i + 1]]
    if len(inversions) > 1 or bad:
        notes.append(f"non-monotone TV sequence at positions {[i for i, _ in inversions]}")
    if tvs and tvs[-1] > 2.0 * floors[-1]:
        notes.append("last TV estimate exceeds twice the noise floor")
    if not monotone_ok:
        notes.append("limit drift is not locally monotone at the initial value")
    return ("pass" if not notes else "fail"), notes


def tv_convergence_experiment(drift_seq, drift: DriftSpec, x0_seq, x0: float, t: float, n: int,
                              stream: RngStream, rate: float = 10.0, sigma: JumpLaw | None = None,
                              ode_tol: float = 1e-8, indices=None, threads: int = 1) -> TvTable:
    """Histogram TV between ``X_{n,t}`` and the limit ``X_t`` with paired seeds."""
    sigma = sigma or ExponentialLaw(1.0)
    drift_seq, x0_seq = list(drift_seq), list(x0_seq)
    if len(drift_seq) != len(x0_seq):
        raise ValueError("drift_seq and x0_seq must have the same length")
    indices = list(indices) if indices is not None else list(range(1, len(drift_seq) + 1))
    limit = terminal_values(drift, x0, rate, sigma, t, n, stream, ode_tol, threads)
    rows, tvs, floors = [], [], []
    for idx, dn, xn in zip(indices, drift_seq, x0_seq):
        vals = terminal_values(dn, xn, rate, sigma, t, n, stream, ode_tol, threads)
        la, lb = laws.estimate_paired(vals, limit)
        tv, fl = laws.tv_distance(la, lb), laws.noise_floor(la, lb)
        rows.append({"index": idx, "tv": tv, "noise_floor": fl})
        tvs.append(tv)
        floors.append(fl)
    verdict, notes = tv_verdict(tvs, floors, drift.locally_monotone(x0))
    return TvTable(rows, verdict, notes)
