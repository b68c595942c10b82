"""Finite-support signed measures on the real line.

Total variation follows the unnormalized convention: the distance between
two probability laws lies in ``[0, 2]`` (no factor 1/2).
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

MERGE_TOL = 1e-12
DEFAULT_SUPPORT_CAP = 10_000_000


class SupportSizeError(ValueError):
    """Raised when a convolution would exceed the configured support cap."""


class MeasureDomainError(ValueError):
    pass


def _normalize(locs: np.ndarray, weights: np.ndarray, tol: float = MERGE_TOL):
    locs = np.asarray(locs, dtype=float).ravel()
    weights = np.asarray(weights, dtype=float).ravel()
    if locs.shape != weights.shape:
        raise ValueError("locations and weights must have the same length")
    if not (np.all(np.isfinite(locs)) and np.all(np.isfinite(weights))):
        raise ValueError("locations and weights must be finite")
    if locs.size == 0:
        return locs, weights
    order = np.argsort(locs, kind="stable")
    locs, weights = locs[order], weights[order]
    # chain merge: a new group starts where the gap exceeds tol
    starts = np.flatnonzero(np.concatenate(([True], np.diff(locs) > tol)))
    if starts.size == locs.size:
        merged_w = weights
        merged_l = locs
    else:
        ends = np.append(starts[1:], locs.size)
        merged_l = locs[starts]
        merged_w = np.array([math.fsum(weights[s:e]) for s, e in zip(starts, ends)])
    keep = merged_w != 0.0
    return merged_l[keep], merged_w[keep]


@dataclass(frozen=True, eq=False)
class DiscreteSignedMeasure:
    """Signed measure ``sum_i w_i * delta_{x_i}`` kept in normalized form.

    Construction sorts locations, merges locations closer than ``1e-12`` and
    drops atoms whose merged weight is exactly zero.
    """

    locations: np.ndarray
    weights: np.ndarray

    def __init__(self, locations=(), weights=()):
        locs, w = _normalize(np.asarray(locations, dtype=float), np.asarray(weights, dtype=float))
        locs.setflags(write=False)
        w.setflags(write=False)
        object.__setattr__(self, "locations", locs)
        object.__setattr__(self, "weights", w)

    @classmethod
    def dirac(cls, x: float, weight: float = 1.0) -> DiscreteSignedMeasure:
        return cls([x], [weight])

    @classmethod
    def from_pairs(cls, pairs) -> DiscreteSignedMeasure:
        pairs = list(pairs)
        if not pairs:
            return cls()
        locs, w = zip(*pairs)
        return cls(locs, w)

    def __len__(self) -> int:
        return int(self.locations.size)

    def __iter__(self):
        return iter(zip(self.locations.tolist(), self.weights.tolist()))

    def __repr__(self) -> str:
        body = ", ".join(f"{w:g}@{x:g}" for x, w in self)
        return f"DiscreteSignedMeasure({body})"

    @property
    def total_mass(self) -> float:
        return math.fsum(self.weights)

    @property
    def is_probability(self) -> bool:
        return bool(np.all(self.weights >= 0.0)) and abs(self.total_mass - 1.0) <= 1e-9

    def __add__(self, other: DiscreteSignedMeasure) -> DiscreteSignedMeasure:
        return DiscreteSignedMeasure(
            np.concatenate((self.locations, other.locations)),
            np.concatenate((self.weights, other.weights)),
        )

    def __neg__(self) -> DiscreteSignedMeasure:
        return DiscreteSignedMeasure(self.locations, -self.weights)

    def __sub__(self, other: DiscreteSignedMeasure) -> DiscreteSignedMeasure:
        return self + (-other)

    def __mul__(self, scalar: float) -> DiscreteSignedMeasure:
        return DiscreteSignedMeasure(self.locations, self.weights * float(scalar))

    __rmul__ = __mul__

    def allclose(self, other: DiscreteSignedMeasure, atol: float = 1e-12) -> bool:
        """Compare as measures: total variation of the difference below ``atol``."""
        return tv_norm(self - other) <= atol

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["location", "weight"])
            for x, w in self:
                writer.writerow([repr(x), repr(w)])

    @classmethod
    def from_csv(cls, path) -> DiscreteSignedMeasure:
        with open(Path(path), newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader, None)
            if header is None or [h.strip() for h in header] != ["location", "weight"]:
                raise ValueError(f"{path}: expected header 'location,weight'")
            rows = [(float(a), float(b)) for a, b in reader]
        return cls.from_pairs(rows)


def tv_norm(m: DiscreteSignedMeasure) -> float:
    """Total variation norm, the sum of absolute atom weights."""
    return math.fsum(np.abs(m.weights))


def convolve(a: DiscreteSignedMeasure, b: DiscreteSignedMeasure,
             cap: int = DEFAULT_SUPPORT_CAP) -> DiscreteSignedMeasure:
    size = len(a) * len(b)
    if size > cap:
        raise SupportSizeError(f"convolution support {len(a)}x{len(b)}={size} exceeds cap {cap}")
    if size == 0:
        return DiscreteSignedMeasure()
    locs = np.add.outer(a.locations, b.locations)
    weights = np.multiply.outer(a.weights, b.weights)
    return DiscreteSignedMeasure(locs, weights)


def convolution_power(m: DiscreteSignedMeasure, p: int,
                      cap: int = DEFAULT_SUPPORT_CAP) -> DiscreteSignedMeasure:
    if int(p) != p or p < 1:
        raise ValueError("p must be a positive integer")
    out = m
    for _ in range(int(p) - 1):
        out = convolve(out, m, cap=cap)
    return out


def convolution_powers(m: DiscreteSignedMeasure, p_max: int,
                       cap: int = DEFAULT_SUPPORT_CAP) -> list[DiscreteSignedMeasure]:
    """``[m, m*m, ..., m^{*p_max}]`` computed incrementally."""
    out = [m]
    for _ in range(p_max - 1):
        out.append(convolve(out[-1], m, cap=cap))
    return out


def product_law(a: DiscreteSignedMeasure, b: DiscreteSignedMeasure,
                cap: int = DEFAULT_SUPPORT_CAP) -> DiscreteSignedMeasure:
    """Law of ``X * Z`` for independent ``X ~ a`` and ``Z ~ b``."""
    for name, m in (("a", a), ("b", b)):
        if not m.is_probability:
            raise MeasureDomainError(f"product_law needs probability laws; '{name}' is signed or unnormalized")
    size = len(a) * len(b)
    if size > cap:
        raise SupportSizeError(f"product support {size} exceeds cap {cap}")
    locs = np.multiply.outer(a.locations, b.locations)
    weights = np.multiply.outer(a.weights, b.weights)
    return DiscreteSignedMeasure(locs, weights)
