"""Samplers for the shot noise series, its time-truncated version and the
conditional law of the first terms given a later arrival time.

All batch samplers split work into fixed shards (see ``stochastic.run_sharded``)
so results do not depend on the thread count. Empty sums are exactly ``0.0``.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .kernels import (ConditionReport, Kernel, _Integrand, centering_a, integrate_kernel,
                      l2_condition)
from .stochastic import JumpLaw, RngStream, _arrivals_block, run_sharded

MAX_HORIZON = 2.0 ** 20


class SeriesPreconditionError(ValueError):
    """The existence integral diverges, or a required centering did not converge."""


@dataclass
class SeriesConfig:
    """Shot noise series ``sum_i h(T_i, D_i)`` truncated at ``horizon``.

    ``horizon=None`` picks the smallest power of two whose residual bound is
    below ``epsilon``: the L1 tail ``rate * int_T^inf int |h|`` when the kernel
    exposes one, else the tail of the L2 existence integral.

    ``centering="compensate"`` adds ``a(h) - A(horizon)`` to every draw, the
    centering mass carried by the discarded tail. It is an approximation for
    kernels that are not integrable; the residual bound is reported either way.
    """

    kernel: Kernel
    sigma: JumpLaw
    rate: float = 1.0
    horizon: float | None = None
    epsilon: float = 1e-6
    centering: str = "none"
    _checked: dict = field(default_factory=dict, init=False, repr=False)

    def __post_init__(self):
        if not (math.isfinite(self.rate) and self.rate > 0):
            raise ValueError("rate must be finite and > 0")
        if not self.epsilon > 0:
            raise ValueError("epsilon must be > 0")
        if self.centering not in ("none", "compensate"):
            raise ValueError("centering must be 'none' or 'compensate'")
        if self.horizon is not None and not (math.isfinite(self.horizon) and self.horizon > 0):
            raise ValueError("horizon must be finite and > 0")

    def existence(self) -> ConditionReport:
        if "l2" not in self._checked:
            self._checked["l2"] = l2_condition(self.kernel, self.sigma, self.rate, tol=1e-6)
        return self._checked["l2"]

    def residual_bound(self, T: float) -> tuple[float, str]:
        """Bound on the discarded tail beyond ``T``: ``(value, kind)``."""
        if T >= self.kernel.t_end:
            return 0.0, "exact"
        l1 = self.kernel.tail_l1(T, self.sigma)
        if l1 is not None:
            return self.rate * l1, "l1"
        res = integrate_kernel(self.kernel, self.sigma, self.rate, _Integrand("l2"),
                               0.1 * self.epsilon, t_lo=T)
        return float(res.value) + res.error, "l2"

    def resolved_horizon(self) -> float:
        if self.horizon is not None:
            return float(self.horizon)
        if "horizon" in self._checked:
            return self._checked["horizon"]
        if math.isfinite(self.kernel.t_end):
            T = float(self.kernel.t_end)
        else:
            T = 1.0
            while self.residual_bound(T)[0] >= self.epsilon:
                T *= 2.0
                if T > MAX_HORIZON:
                    raise SeriesPreconditionError(
                        f"no horizon up to {MAX_HORIZON:g} brings the residual below {self.epsilon:g}")
        self._checked["horizon"] = T
        return T

    def compensation(self) -> float:
        if self.centering == "none":
            return 0.0
        if "comp" not in self._checked:
            full = centering_a(self.kernel, self.sigma, self.rate)
            if not full.converged:
                raise SeriesPreconditionError("centering constant did not converge")
            T = self.resolved_horizon()
            part = centering_a(self.kernel, self.sigma, self.rate, s_max_schedule=[T])
            self._checked["comp"] = full.value - part.value
        return self._checked["comp"]

    def validate(self) -> None:
        rep = self.existence()
        if rep.diverged:
            raise SeriesPreconditionError("the L2 existence integral diverges; the series is not defined")


def _sum_rows(kernel: Kernel, sigma: JumpLaw, times: np.ndarray, rng) -> np.ndarray:
    """Row sums of ``h(times, marks)`` over the finite entries of ``times``."""
    m = times.shape[0]
    mask = np.isfinite(times)
    k = int(mask.sum())
    if k == 0:
        return np.zeros(m)
    rows = np.nonzero(mask)[0]
    marks = np.asarray(sigma.sample(k, rng), dtype=float)
    vals = kernel.eval(times[mask], marks)
    return np.bincount(rows, weights=vals, minlength=m)


def _truncated_block(kernel, sigma, rate, t, size, rng, keep_times=False):
    times, counts = _arrivals_block(rate, t, size, rng)
    values = _sum_rows(kernel, sigma, times, rng)
    return (values, counts, times) if keep_times else (values, counts)


def sample_truncated_batch(f: Kernel, t: float, sigma: JumpLaw, rate: float, n: int,
                           stream: RngStream, threads: int = 1):
    """``n`` draws of ``sum_{T_i <= t} f(T_i, D_i)``; returns ``(values, counts)``."""
    if not (math.isfinite(t) and t > 0):
        raise ValueError("t must be finite and > 0")
    if not (math.isfinite(rate) and rate > 0):
        raise ValueError("rate must be finite and > 0")
    parts = run_sharded(lambda size, rng: _truncated_block(f, sigma, rate, t, size, rng),
                        n, stream, threads)
    if not parts:
        return np.zeros(0), np.zeros(0, dtype=np.int64)
    return (np.concatenate([v for v, _ in parts]),
            np.concatenate([c for _, c in parts]).astype(np.int64))


def sample_truncated(f: Kernel, t: float, sigma: JumpLaw, rate: float,
                     stream: RngStream) -> tuple[float, int]:
    values, counts = sample_truncated_batch(f, t, sigma, rate, 1, stream)
    return float(values[0]), int(counts[0])


def sample_truncated_given_count(f: Kernel, t: float, sigma: JumpLaw, rate: float, count: int,
                                 n: int, stream: RngStream, threads: int = 1,
                                 batch: int = 100_000, max_rounds: int = 10_000):
    """Rejection sampler: ``n`` draws of the truncated series whose arrival count equals ``count``.

    Returns ``(times, values)`` with ``times`` of shape ``(n, count)``. Round
    ``r`` draws ``batch`` unconditioned replicates from ``stream.substream(r)``.
    """
    if int(count) != count or count < 0:
        raise ValueError("count must be a non-negative integer")
    count = int(count)
    got_t, got_v, total = [], [], 0
    for r in range(max_rounds):
        parts = run_sharded(lambda size, rng: _truncated_block(f, sigma, rate, t, size, rng, True),
                            batch, stream.substream(r), threads)
        for values, counts, times in parts:
            sel = counts == count
            if not np.any(sel):
                continue
            tt = times[sel]
            if tt.shape[1] < count:
                tt = np.pad(tt, ((0, 0), (0, count - tt.shape[1])), constant_values=np.inf)
            got_t.append(tt[:, :count])
            got_v.append(values[sel])
            total += int(sel.sum())
        if total >= n:
            break
    else:
        raise RuntimeError(f"only {total} of {n} draws with count {count} after {max_rounds} rounds")
    return np.vstack(got_t)[:n], np.concatenate(got_v)[:n]


def sample_full_batch(cfg: SeriesConfig, n: int, stream: RngStream, threads: int = 1) -> np.ndarray:
    """``n`` draws of the series truncated at the configured horizon."""
    cfg.validate()
    T = cfg.resolved_horizon()
    values, _ = sample_truncated_batch(cfg.kernel, T, cfg.sigma, cfg.rate, n, stream, threads)
    comp = cfg.compensation()
    if comp != 0.0:
        values = values + comp
    return values


def sample_full(cfg: SeriesConfig, stream: RngStream) -> float:
    return float(sample_full_batch(cfg, 1, stream)[0])


def _first_p_block(kernel, sigma, p, t_next, size, rng):
    times = np.sort(rng.uniform(0.0, t_next, size=(size, p)), axis=1)
    marks = np.asarray(sigma.sample(size * p, rng), dtype=float).reshape(size, p)
    return kernel.eval(times, marks).sum(axis=1)


def sample_conditional_first_p_batch(cfg: SeriesConfig, p: int, t_next: float, n: int,
                                     stream: RngStream, threads: int = 1) -> np.ndarray:
    """Draws of ``sum_{i<=p} h(T_i, D_i)`` given ``T_{p+1} = t_next``.

    Given the (p+1)-th arrival, the first ``p`` arrivals are uniform order
    statistics on ``[0, t_next]``.
    """
    if int(p) != p or p < 1:
        raise ValueError("p must be a positive integer")
    if not (math.isfinite(t_next) and t_next > 0):
        raise ValueError("t_next must be finite and > 0")
    parts = run_sharded(lambda size, rng: _first_p_block(cfg.kernel, cfg.sigma, int(p), t_next, size, rng),
                        n, stream, threads)
    return np.concatenate(parts) if parts else np.zeros(0)


def sample_conditional_first_p(cfg: SeriesConfig, p: int, t_next: float, stream: RngStream) -> float:
    return float(sample_conditional_first_p_batch(cfg, p, t_next, 1, stream)[0])


def write_batch_csv(path, values, counts=None, t_next=None) -> None:
    """CSV with columns ``replicate, value[, count][, t_next]`` (repr floats, LF endings)."""
    header = ["replicate", "value"]
    if counts is not None:
        header.append("count")
    if t_next is not None:
        header.append("t_next")
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for i, v in enumerate(np.asarray(values, dtype=float).tolist()):
            row = [i, repr(v)]
            if counts is not None:
                row.append(int(counts[i]))
            if t_next is not None:
                row.append(repr(float(np.broadcast_to(t_next, np.shape(values))[i])))
            w.writerow(row)


def read_batch_csv(path):
    """Inverse of ``write_batch_csv``: ``(values, counts or None)``."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if not header or "value" not in header:
            raise ValueError(f"{path}: expected a header with a 'value' column")
        rows = list(reader)
    vi = header.index("value")
    values = np.array([float(r[vi]) for r in rows])
    counts = None
    if "count" in header:
        ci = header.index("count")
        counts = np.array([int(r[ci]) for r in rows], dtype=np.int64)
    return values, counts
