"""Atom-aware empirical laws, histogram total variation and KS statistics.

An ``EmpiricalLaw`` keeps integer counts: bit-exact zeros form the atom,
nonzero values are binned on explicit edges. Masses are ``count / n``, so the
atom mass plus the bin masses sum to one up to rounding of the divisions.

Total variation uses the unnormalized convention (values in ``[0, 2]``).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

MAX_BINS = 1_000_000
KS_COEFF_1PCT = 1.63
# Sum over bins of sqrt(2/pi * p_k * 2/n) is at most 2 sqrt(K/n) / sqrt(pi)
# by Cauchy-Schwarz; this is the calibrated constant of the same-law bound.
SAME_LAW_CONSTANT = 1.0 / math.sqrt(math.pi)


class BinningError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class EmpiricalLaw:
    n: int
    atom_count: int
    edges: np.ndarray
    counts: np.ndarray
    samples: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        edges = np.asarray(self.edges, dtype=float)
        counts = np.asarray(self.counts, dtype=np.int64)
        if edges.size and np.any(np.diff(edges) <= 0):
            raise BinningError("bin edges must be strictly increasing")
        if counts.size != max(edges.size - 1, 0):
            raise BinningError("need len(counts) == len(edges) - 1")
        if self.n < 1 or self.atom_count < 0 or int(counts.sum()) + self.atom_count != self.n:
            raise ValueError("counts must add up to n")
        object.__setattr__(self, "edges", edges)
        object.__setattr__(self, "counts", counts)

    @property
    def atom_mass(self) -> float:
        return self.atom_count / self.n

    @property
    def masses(self) -> np.ndarray:
        return self.counts / self.n

    @property
    def bin_count(self) -> int:
        return int(self.counts.size)

    def density(self) -> np.ndarray:
        """Histogram density of the continuous part (masses over widths)."""
        return self.masses / np.diff(self.edges) if self.edges.size else np.zeros(0)

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "atom": self.atom_mass,
            "atom_count": self.atom_count,
            "edges": [float(e) for e in self.edges],
            "masses": [float(m) for m in self.masses],
            "counts": [int(c) for c in self.counts],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    @classmethod
    def from_dict(cls, d: dict) -> EmpiricalLaw:
        n = int(d["n"])
        if "counts" in d:
            counts = np.asarray(d["counts"], dtype=np.int64)
            atom = int(d.get("atom_count", n - int(counts.sum())))
        else:
            counts = np.rint(np.asarray(d["masses"]) * n).astype(np.int64)
            atom = int(round(d["atom"] * n))
        return cls(n, atom, np.asarray(d["edges"], dtype=float), counts)

    @classmethod
    def from_json(cls, text: str) -> EmpiricalLaw:
        return cls.from_dict(json.loads(text))


def _nonzero(samples) -> tuple[np.ndarray, int]:
    x = np.asarray(samples, dtype=float).ravel()
    if x.size == 0:
        raise ValueError("samples must be non-empty")
    if not np.all(np.isfinite(x)):
        raise ValueError("samples must be finite")
    nz = x[x != 0.0]
    return nz, int(x.size - nz.size)


def fd_width(values: np.ndarray) -> float:
    """Freedman-Diaconis bin width; 0 when the values carry no spread."""
    if values.size < 2:
        return 0.0
    q75, q25 = np.percentile(values, [75, 25])
    iqr = q75 - q25
    if iqr <= 0:
        iqr = float(values.max() - values.min())
    return 2.0 * iqr * values.size ** (-1.0 / 3.0)


def grid_edges(lo: float, hi: float, width: float) -> np.ndarray:
    """Uniform edges of the given width covering ``[lo, hi]``."""
    if hi <= lo:
        return np.array([lo - 0.5, lo + 0.5])
    # coarsen rather than exceed the bin limit on extreme ranges
    width = max(width, (hi - lo) / MAX_BINS) if width > 0 else hi - lo
    k = max(int(math.ceil((hi - lo) / width)), 1)
    edges = lo + width * np.arange(k + 1)
    if edges[-1] < hi:
        edges = np.append(edges, edges[-1] + width)
    return edges


def _bin(values: np.ndarray, edges: np.ndarray) -> np.ndarray:
    if values.size and (values.min() < edges[0] or values.max() > edges[-1]):
        raise BinningError("samples fall outside the explicit bin edges")
    idx = np.searchsorted(edges, values, side="right") - 1
    idx = np.minimum(idx, edges.size - 2)   # the last edge is closed
    return np.bincount(idx, minlength=edges.size - 1).astype(np.int64)


def estimate(samples, binning="auto", keep_samples: bool = False) -> EmpiricalLaw:
    """Empirical law: bit-exact zeros form the atom, the rest is histogrammed.

    ``binning`` is ``"auto"`` (Freedman-Diaconis on the nonzero part) or an
    array of explicit edges.
    """
    nz, zeros = _nonzero(samples)
    n = nz.size + zeros
    if isinstance(binning, str):
        if binning != "auto":
            raise ValueError("binning must be 'auto' or explicit edges")
        if nz.size == 0:
            edges = np.zeros(0)
        else:
            edges = grid_edges(float(nz.min()), float(nz.max()), fd_width(nz))
    else:
        edges = np.asarray(binning, dtype=float)
        if edges.size < 2:
            raise BinningError("explicit binning needs at least two edges")
    counts = _bin(nz, edges) if edges.size else np.zeros(0, dtype=np.int64)
    kept = np.asarray(samples, dtype=float).ravel().copy() if keep_samples else None
    return EmpiricalLaw(n, zeros, edges, counts, kept)


def paired_edges(*sample_sets) -> np.ndarray:
    """Shared edges: union range of the nonzero parts, coarsest FD width."""
    parts = [_nonzero(s)[0] for s in sample_sets]
    parts = [p for p in parts if p.size]
    if not parts:
        return np.zeros(0)
    lo = min(float(p.min()) for p in parts)
    hi = max(float(p.max()) for p in parts)
    width = max(fd_width(p) for p in parts)
    if width <= 0:
        # each set is a point mass; the pooled spread separates them
        width = fd_width(np.concatenate(parts))
    return grid_edges(lo, hi, width)


def estimate_paired(*sample_sets) -> list[EmpiricalLaw]:
    edges = paired_edges(*sample_sets)
    if edges.size == 0:
        return [estimate(s) for s in sample_sets]
    return [estimate(s, edges) for s in sample_sets]


def _aligned(a: EmpiricalLaw, b: EmpiricalLaw):
    if a.edges.size == 0 or b.edges.size == 0:
        # a pure atom has no continuous part to align
        ma = a.masses if a.edges.size else np.zeros(b.counts.size)
        mb = b.masses if b.edges.size else np.zeros(a.counts.size)
        return ma, mb
    if a.edges.shape != b.edges.shape or not np.array_equal(a.edges, b.edges):
        raise BinningError("laws are binned on different edges; rebuild them with estimate_paired")
    return a.masses, b.masses


def tv_distance(a: EmpiricalLaw, b: EmpiricalLaw) -> float:
    """``|atom_a - atom_b| + sum_k |mass_a,k - mass_b,k|``, in ``[0, 2]``."""
    ma, mb = _aligned(a, b)
    return math.fsum([abs(a.atom_mass - b.atom_mass)] + np.abs(ma - mb).tolist())


def tv_samples(a, b) -> float:
    la, lb = estimate_paired(a, b)
    return tv_distance(la, lb)


def noise_floor(a: EmpiricalLaw, b: EmpiricalLaw) -> float:
    """Expected histogram TV between independent same-law samples of these sizes.

    Each cell (atom included) contributes ``E|p_a - p_b| ~ sqrt(2/pi) sd``
    with ``sd^2 = p(1-p)(1/n_a + 1/n_b)`` and ``p`` the pooled cell mass.
    """
    ma, mb = _aligned(a, b)
    pa = np.concatenate(([a.atom_mass], ma))
    pb = np.concatenate(([b.atom_mass], mb))
    p = (pa * a.n + pb * b.n) / (a.n + b.n)
    var = p * (1.0 - p) * (1.0 / a.n + 1.0 / b.n)
    return float(np.sqrt(2.0 / np.pi * var).sum())


def same_law_bound(bin_count: int, n: int, constant: float = SAME_LAW_CONSTANT) -> float:
    """``2 sqrt(K / n) C``: upper bound on the same-law noise floor for ``K`` cells."""
    return 2.0 * math.sqrt(bin_count / n) * constant


def kde_l1_distance(a, b, grid_size: int = 2048, max_points: int = 20_000, seed: int = 0) -> float:
    """Cross-check: atom difference plus L1 distance of Gaussian KDEs of the nonzero parts.

    Each continuous part is weighted by its mass. Large inputs are subsampled
    with a fixed seed.
    """
    rng = np.random.default_rng(seed)
    parts = []
    for s in (a, b):
        nz, zeros = _nonzero(s)
        n = nz.size + zeros
        if nz.size > max_points:
            nz = rng.choice(nz, max_points, replace=False)
        parts.append((nz, zeros / n))
    nzs = [p for p, _ in parts if p.size > 1]
    if not nzs:
        return abs(parts[0][1] - parts[1][1]) + abs((1 - parts[0][1]) - (1 - parts[1][1]))
    lo = min(p.min() for p in nzs)
    hi = max(p.max() for p in nzs)
    pad = 0.1 * (hi - lo) + 1e-9
    grid = np.linspace(lo - pad, hi + pad, grid_size)
    dens = []
    for nz, atom in parts:
        if nz.size > 1 and np.ptp(nz) > 0:
            dens.append((1 - atom) * stats.gaussian_kde(nz)(grid))
        else:
            dens.append(np.zeros_like(grid))
    l1 = float(np.trapezoid(np.abs(dens[0] - dens[1]), grid))
    return abs(parts[0][1] - parts[1][1]) + l1


def ks_statistic(samples, reference_cdf) -> float:
    """One-sample KS distance ``sup |F_n - F|``, checking both sides of every jump."""
    x = np.sort(np.asarray(samples, dtype=float).ravel())
    if x.size == 0:
        raise ValueError("samples must be non-empty")
    n = x.size
    pts, cnt = np.unique(x, return_counts=True)
    upper = np.cumsum(cnt) / n
    lower = upper - cnt / n
    F = np.asarray(reference_cdf(pts), dtype=float)
    F_left = np.asarray(reference_cdf(np.nextafter(pts, -np.inf)), dtype=float)
    return float(max(np.max(np.abs(upper - F)), np.max(np.abs(lower - F_left))))


def ks_two_sample(a, b) -> float:
    a = np.sort(np.asarray(a, dtype=float).ravel())
    b = np.sort(np.asarray(b, dtype=float).ravel())
    if a.size == 0 or b.size == 0:
        raise ValueError("samples must be non-empty")
    pts = np.concatenate((a, b))
    fa = np.searchsorted(a, pts, side="right") / a.size
    fb = np.searchsorted(b, pts, side="right") / b.size
    return float(np.max(np.abs(fa - fb)))


def ks_critical(n: int, m: int | None = None, coeff: float = KS_COEFF_1PCT) -> float:
    """Asymptotic 1% critical value of the one- or two-sample KS statistic."""
    if m is None:
        return coeff / math.sqrt(n)
    return coeff * math.sqrt((n + m) / (n * m))


@dataclass
class CountDecomposition:
    """Per-count conditional laws on shared edges with their mixing weights."""

    laws: dict
    weights: dict
    edges: np.ndarray

    def recombine(self) -> EmpiricalLaw:
        n = sum(l.n for l in self.laws.values())
        atom = sum(l.atom_count for l in self.laws.values())
        counts = np.zeros(max(self.edges.size - 1, 0), dtype=np.int64)
        for law in self.laws.values():
            if law.counts.size:
                counts += law.counts
        return EmpiricalLaw(n, atom, self.edges, counts)

    def to_dict(self) -> dict:
        return {
            "weights": {str(k): v for k, v in sorted(self.weights.items())},
            "laws": {str(k): l.to_dict() for k, l in sorted(self.laws.items())},
        }


def decompose_by_count(values, counts, binning="auto") -> CountDecomposition:
    """Split ``(value, count)`` pairs by arrival count on edges shared by all counts."""
    values = np.asarray(values, dtype=float).ravel()
    counts = np.asarray(counts).ravel()
    if values.shape != counts.shape or values.size == 0:
        raise ValueError("values and counts must be matching non-empty vectors")
    if isinstance(binning, str):
        edges = estimate(values).edges
    else:
        edges = np.asarray(binning, dtype=float)
    laws, weights = {}, {}
    for c in np.unique(counts).tolist():
        sel = values[counts == c]
        if edges.size:
            laws[int(c)] = estimate(sel, edges)
        else:
            laws[int(c)] = estimate(sel)
        weights[int(c)] = sel.size / values.size
    return CountDecomposition(laws, weights, edges)
