"""Seeded random streams, Poisson arrivals and jump laws.

Arrivals are always parameterized by an intensity ``rate``: inter-arrival
times are exponential with mean ``1 / rate``.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy import special, stats

# Fixed shard size: shard k of a batch always uses substream k, so results do
# not depend on how many workers evaluate the shards.
SHARD_SIZE = 10_000


@dataclass(frozen=True)
class RngStream:
    """Counter-based random stream identified by ``(seed, stream_id)``.

    ``generator()`` returns a fresh Philox generator positioned at the start
    of the stream, so a stream always replays the same sequence.
    """

    seed: int
    stream_id: int = 0
    path: tuple[int, ...] = ()

    def __post_init__(self):
        if not (0 <= int(self.seed) < 2**64):
            raise ValueError("seed must be a 64-bit unsigned integer")
        if int(self.stream_id) < 0:
            raise ValueError("stream_id must be non-negative")

    def generator(self) -> np.random.Generator:
        ss = np.random.SeedSequence(int(self.seed), spawn_key=(int(self.stream_id), *self.path))
        return np.random.Generator(np.random.Philox(ss))

    def substream(self, index: int) -> RngStream:
        return RngStream(self.seed, self.stream_id, self.path + (int(index),))


def shard_sizes(n: int, shard_size: int = SHARD_SIZE) -> list[int]:
    full, rest = divmod(int(n), shard_size)
    return [shard_size] * full + ([rest] if rest else [])


def run_sharded(fn, n: int, stream: RngStream, threads: int = 1, shard_size: int = SHARD_SIZE):
    """Evaluate ``fn(size, generator)`` on fixed-size shards and return the list of results.

    Shard ``k`` draws from ``stream.substream(k)``; results come back in shard
    order regardless of ``threads``.
    """
    sizes = shard_sizes(n, shard_size)
    jobs = [(size, stream.substream(k)) for k, size in enumerate(sizes)]

    def work(job):
        size, sub = job
        return fn(size, sub.generator())

    if threads <= 1 or len(jobs) <= 1:
        return [work(j) for j in jobs]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(work, jobs))


@dataclass(frozen=True)
class ArrivalProcess:
    rate: float

    def __post_init__(self):
        if not (math.isfinite(self.rate) and self.rate > 0):
            raise ValueError("arrival rate must be finite and > 0")


def sample_arrivals(proc: ArrivalProcess, horizon: float, stream: RngStream) -> np.ndarray:
    """Arrival times in ``(0, horizon]`` as cumulative exponential inter-arrivals."""
    if not (math.isfinite(horizon) and horizon > 0):
        raise ValueError("horizon must be finite and > 0")
    rng = stream.generator()
    times = []
    t = rng.exponential(1.0 / proc.rate)
    while t <= horizon:
        times.append(t)
        t += rng.exponential(1.0 / proc.rate)
    return np.array(times, dtype=float)


def _arrivals_block(rate: float, horizon: float, size: int, rng: np.random.Generator):
    # enough columns that overflow is rare; overflowing rows are extended below
    width = max(8, int(rate * horizon + 6.0 * math.sqrt(rate * horizon) + 8))
    times = np.cumsum(rng.exponential(1.0 / rate, size=(size, width)), axis=1)
    while np.any(times[:, -1] <= horizon):
        more = np.cumsum(rng.exponential(1.0 / rate, size=(size, width)), axis=1) + times[:, -1:]
        times = np.concatenate((times, more), axis=1)
    counts = np.sum(times <= horizon, axis=1)
    times = np.where(times <= horizon, times, np.inf)[:, : max(int(counts.max(initial=0)), 1)]
    return times, counts


def sample_arrivals_batch(proc: ArrivalProcess, horizon: float, n: int, stream: RngStream,
                          threads: int = 1):
    """``n`` independent arrival draws on ``(0, horizon]``.

    Returns ``(times, counts)`` where ``times`` is ``(n, K)`` padded with ``inf``.
    """
    parts = run_sharded(lambda size, rng: _arrivals_block(proc.rate, horizon, size, rng),
                        n, stream, threads)
    width = max(p[0].shape[1] for p in parts)
    times = np.vstack([np.pad(t, ((0, 0), (0, width - t.shape[1])), constant_values=np.inf)
                       for t, _ in parts])
    counts = np.concatenate([c for _, c in parts])
    return times, counts


def sample_conditional_order_stats(i: int, t: float, stream: RngStream) -> np.ndarray:
    """``i`` sorted independent uniforms on ``[0, t]``."""
    return sample_conditional_order_stats_batch(i, t, 1, stream)[0]


def sample_conditional_order_stats_batch(i: int, t: float, n: int, stream: RngStream,
                                         threads: int = 1) -> np.ndarray:
    if int(i) != i or i < 1:
        raise ValueError("i must be a positive integer")
    parts = run_sharded(lambda size, rng: np.sort(rng.uniform(0.0, t, size=(size, int(i))), axis=1),
                        n, stream, threads)
    return np.vstack(parts)


# ---------------------------------------------------------------------------
# Jump laws

def expm1i(y):
    """``exp(i*y) - 1`` without cancellation for small ``y``."""
    y = np.asarray(y, dtype=float)
    s = np.sin(0.5 * y)
    return -2.0 * s * s + 1j * np.sin(y)


class JumpLaw:
    """Law of the marks. Every built-in family has no atom at 0.

    Subclasses implement ``sample``; closed-form capabilities (``cf``,
    ``partial_mean`` ...) return ``None``/raise ``NotImplementedError`` when
    unavailable, in which case numerical routines fall back to quadrature or
    Monte Carlo.
    """

    family = "abstract"
    dim = 1

    def sample(self, size: int, rng: np.random.Generator) -> np.ndarray:
        raise NotImplementedError

    def density(self, x):
        return None

    def cdf(self, x):
        return None

    @property
    def has_density(self) -> bool:
        return False

    @property
    def has_closed_forms(self) -> bool:
        return False

    def quadrature_support(self) -> list[tuple[float, float]]:
        """Finite intervals carrying all but a negligible (< 1e-15) share of the mass."""
        raise NotImplementedError

    def atoms(self):
        """``(locations, probabilities)`` for purely atomic laws, else ``None``."""
        return None

    # closed-form moments used by the fast integration path
    def cf_minus_one(self, u):
        raise NotImplementedError

    def partial_mean(self, c):
        """``E[X; |X| <= c]``."""
        raise NotImplementedError

    def partial_second(self, c):
        """``E[X^2; |X| <= c]``."""
        raise NotImplementedError

    def tail_prob(self, c):
        """``P(|X| > c)``."""
        raise NotImplementedError

    def abs_mean(self) -> float:
        raise NotImplementedError

    def min_abs(self) -> float:
        """Lower bound of ``|X|`` on the support."""
        return 0.0

    def describe(self) -> dict:
        return {"family": self.family}


@dataclass(frozen=True)
class ExponentialLaw(JumpLaw):
    """``sign * (shift + E)`` with ``E ~ Exp(rate)``; ``symmetric`` draws a fair sign.

    ``shift=0`` is the plain exponential law; ``shift=1`` is the big-jump
    family supported on ``|x| >= 1``.
    """

    rate: float = 1.0
    shift: float = 0.0
    symmetric: bool = False

    def __post_init__(self):
        if not self.rate > 0:
            raise ValueError("exponential rate must be > 0")
        if self.shift < 0:
            raise ValueError("shift must be >= 0")

    @property
    def family(self):
        return "shifted_exponential" if self.shift > 0 or self.symmetric else "exponential"

    def sample(self, size, rng):
        x = self.shift + rng.exponential(1.0 / self.rate, size=size)
        if self.symmetric:
            x = np.where(rng.random(size) < 0.5, -x, x)
        return x

    @property
    def has_density(self):
        return True

    @property
    def has_closed_forms(self):
        return True

    def _pos_density(self, y):
        y = np.asarray(y, dtype=float)
        return np.where(y >= self.shift, self.rate * np.exp(-self.rate * (y - self.shift)), 0.0)

    def density(self, x):
        x = np.asarray(x, dtype=float)
        if self.symmetric:
            return 0.5 * self._pos_density(np.abs(x))
        return self._pos_density(x)

    def cdf(self, x):
        x = np.asarray(x, dtype=float)
        pos = np.where(x >= self.shift, -np.expm1(-self.rate * np.maximum(x - self.shift, 0.0)), 0.0)
        if not self.symmetric:
            return pos
        neg_tail = np.where(-x >= self.shift, np.exp(-self.rate * np.maximum(-x - self.shift, 0.0)), 1.0)
        return np.where(x >= 0, 0.5 + 0.5 * pos, 0.5 * neg_tail)

    def quadrature_support(self):
        hi = self.shift + 40.0 / self.rate
        if self.symmetric:
            return [(-hi, -self.shift), (self.shift, hi)]
        return [(self.shift, hi)]

    # moments of the positive branch Y = shift + E restricted to Y <= c
    def _pos_moments(self, c):
        c = np.asarray(c, dtype=float)
        lam, s = self.rate, self.shift
        d = np.maximum(c - s, 0.0)
        e = np.exp(-lam * d)
        p = -np.expm1(-lam * d)
        with np.errstate(invalid="ignore"):
            ld_e = np.where(np.isinf(d), 0.0, lam * d * e)
            ld2_e = np.where(np.isinf(d), 0.0, e * lam * d * (lam * d + 2.0))
        m1 = (p - ld_e) / lam
        m2 = (2.0 * p - ld2_e) / lam**2
        return p, s * p + m1, s * s * p + 2.0 * s * m1 + m2

    def cf_minus_one(self, u):
        u = np.asarray(u, dtype=float)
        lam, s = self.rate, self.shift
        base = lam / (lam - 1j * u)
        out = expm1i(u * s) * base + 1j * u / (lam - 1j * u)
        if self.symmetric:
            out = out.real + 0j
        return out

    def partial_mean(self, c):
        if self.symmetric:
            return np.zeros_like(np.asarray(c, dtype=float))
        return self._pos_moments(c)[1]

    def partial_second(self, c):
        return self._pos_moments(c)[2]

    def tail_prob(self, c):
        return 1.0 - self._pos_moments(c)[0]

    def abs_mean(self):
        return self.shift + 1.0 / self.rate

    def min_abs(self):
        return self.shift

    def describe(self):
        return {"family": self.family, "rate": self.rate, "shift": self.shift, "symmetric": self.symmetric}


class UniformUnionLaw(JumpLaw):
    """Uniform law on a finite union of disjoint intervals (mass proportional to length)."""

    def __init__(self, intervals):
        iv = sorted((float(a), float(b)) for a, b in intervals)
        if not iv:
            raise ValueError("at least one interval is required")
        for a, b in iv:
            if not (math.isfinite(a) and math.isfinite(b) and a < b):
                raise ValueError(f"bad interval ({a}, {b})")
        for (_, b0), (a1, _) in zip(iv, iv[1:]):
            if a1 < b0:
                raise ValueError("intervals must be disjoint")
        self.intervals = tuple(iv)
        self._lengths = np.array([b - a for a, b in iv])
        self._total = float(self._lengths.sum())

    family = "uniform"

    @classmethod
    def symmetric(cls, a: float, b: float) -> UniformUnionLaw:
        return cls([(-b, -a), (a, b)])

    def __eq__(self, other):
        return isinstance(other, UniformUnionLaw) and self.intervals == other.intervals

    def __hash__(self):
        return hash(self.intervals)

    def __repr__(self):
        return f"UniformUnionLaw({list(self.intervals)})"

    def sample(self, size, rng):
        v = rng.uniform(0.0, self._total, size=size)
        cum = np.concatenate(([0.0], np.cumsum(self._lengths)))
        k = np.clip(np.searchsorted(cum, v, side="right") - 1, 0, len(self.intervals) - 1)
        lo = np.array([a for a, _ in self.intervals])
        return lo[k] + (v - cum[k])

    @property
    def has_density(self):
        return True

    @property
    def has_closed_forms(self):
        return True

    def density(self, x):
        x = np.asarray(x, dtype=float)
        out = np.zeros_like(x)
        for a, b in self.intervals:
            out = out + ((x >= a) & (x <= b)) / self._total
        return out

    def cdf(self, x):
        x = np.asarray(x, dtype=float)
        out = np.zeros_like(x)
        for a, b in self.intervals:
            out = out + (np.clip(x, a, b) - a) / self._total
        return out

    def quadrature_support(self):
        return list(self.intervals)

    def _clip_integral(self, c, power):
        c = np.abs(np.asarray(c, dtype=float))
        out = np.zeros_like(c)
        for a, b in self.intervals:
            lo = np.clip(-c, a, b)
            hi = np.clip(c, a, b)
            out = out + (hi ** (power + 1) - lo ** (power + 1)) / (power + 1)
        return out / self._total

    def cf_minus_one(self, u):
        u = np.asarray(u, dtype=float)
        out = np.zeros(u.shape, dtype=complex)
        small = np.abs(u) * max(abs(a) for iv in self.intervals for a in iv) < 1e-3
        for a, b in self.intervals:
            with np.errstate(divide="ignore", invalid="ignore"):
                piece = (expm1i(u * b) - expm1i(u * a)) / (1j * u) - (b - a)
            out = out + np.where(small, 0.0, piece)
        out = out / self._total
        if np.any(small):
            us = u[small] if u.ndim else u
            m1 = self._clip_integral(np.inf, 1)
            m2 = self._clip_integral(np.inf, 2)
            m3 = self._clip_integral(np.inf, 3)
            m4 = self._clip_integral(np.inf, 4)
            series = 1j * us * m1 - us**2 * m2 / 2 - 1j * us**3 * m3 / 6 + us**4 * m4 / 24
            if u.ndim:
                out[small] = series
            else:
                out = series
        return out

    def partial_mean(self, c):
        return self._clip_integral(c, 1)

    def partial_second(self, c):
        return self._clip_integral(c, 2)

    def tail_prob(self, c):
        return 1.0 - self._clip_integral(c, 0)

    def abs_mean(self):
        total = 0.0
        for a, b in self.intervals:
            if a >= 0:
                total += (b * b - a * a) / 2
            elif b <= 0:
                total += (a * a - b * b) / 2
            else:
                total += (a * a + b * b) / 2
        return total / self._total

    def min_abs(self):
        return min(0.0 if a <= 0 <= b else min(abs(a), abs(b)) for a, b in self.intervals)

    def describe(self):
        return {"family": "uniform", "intervals": [list(iv) for iv in self.intervals]}


class DiscreteLaw(JumpLaw):
    """Finite discrete law with no atom at 0."""

    family = "discrete"

    def __init__(self, values, probs):
        values = np.asarray(values, dtype=float)
        probs = np.asarray(probs, dtype=float)
        if values.shape != probs.shape or values.ndim != 1 or values.size == 0:
            raise ValueError("values and probs must be matching non-empty vectors")
        if np.any(values == 0.0):
            raise ValueError("a jump law must not charge 0")
        if np.any(probs < 0) or abs(probs.sum() - 1.0) > 1e-12:
            raise ValueError("probs must be non-negative and sum to 1")
        self.values, self.probs = values, probs / probs.sum()

    def __repr__(self):
        return f"DiscreteLaw({self.values.tolist()}, {self.probs.tolist()})"

    def sample(self, size, rng):
        return self.values[rng.choice(self.values.size, size=size, p=self.probs)]

    @property
    def has_closed_forms(self):
        return True

    def atoms(self):
        return self.values, self.probs

    def cdf(self, x):
        x = np.asarray(x, dtype=float)
        return np.sum(self.probs * (self.values <= x[..., None]), axis=-1)

    def cf_minus_one(self, u):
        u = np.asarray(u, dtype=float)
        return np.sum(self.probs * expm1i(u[..., None] * self.values), axis=-1)

    def _masked(self, c, power):
        c = np.asarray(c, dtype=float)
        inside = np.abs(self.values) <= c[..., None]
        return np.sum(self.probs * self.values**power * inside, axis=-1)

    def partial_mean(self, c):
        return self._masked(c, 1)

    def partial_second(self, c):
        return self._masked(c, 2)

    def tail_prob(self, c):
        return 1.0 - self._masked(c, 0)

    def abs_mean(self):
        return float(np.sum(self.probs * np.abs(self.values)))

    def min_abs(self):
        return float(np.min(np.abs(self.values)))

    def describe(self):
        return {"family": "discrete", "values": self.values.tolist(), "probs": self.probs.tolist()}


@dataclass(frozen=True)
class ConditionedNormalLaw(JumpLaw):
    """``N(mean, sd^2)`` conditioned on ``|X| >= cut``."""

    mean: float = 0.0
    sd: float = 1.0
    cut: float = 0.0
    family: str = field(default="conditioned_normal", init=False)

    def __post_init__(self):
        if not self.sd > 0 or self.cut < 0:
            raise ValueError("need sd > 0 and cut >= 0")
        if self._mass < 1e-12:
            raise ValueError("conditioning event has negligible probability")

    @property
    def _dist(self):
        return stats.norm(self.mean, self.sd)

    @property
    def _mass(self) -> float:
        d = stats.norm(self.mean, self.sd)
        return float(d.cdf(-self.cut) + d.sf(self.cut))

    def sample(self, size, rng):
        d = self._dist
        lo_mass = float(d.cdf(-self.cut))
        v = rng.uniform(0.0, self._mass, size=size)
        left = v < lo_mass
        # inverse cdf on each branch; upper branch uses the survival function for accuracy
        x_left = d.ppf(np.minimum(v, lo_mass))
        x_right = d.isf(np.maximum(self._mass - v, 0.0))
        x = np.where(left, x_left, x_right)
        if self.cut > 0:
            x = np.where(left, np.minimum(x, -self.cut), np.maximum(x, self.cut))
        x = np.where(x == 0.0, np.nextafter(0.0, 1.0), x)
        return x

    @property
    def has_density(self):
        return True

    def density(self, x):
        x = np.asarray(x, dtype=float)
        return np.where(np.abs(x) >= self.cut, self._dist.pdf(x) / self._mass, 0.0)

    def cdf(self, x):
        x = np.asarray(x, dtype=float)
        d = self._dist
        base = d.cdf(np.minimum(x, -self.cut)) + np.clip(d.cdf(x) - d.cdf(self.cut), 0.0, None)
        return base / self._mass

    def quadrature_support(self):
        lo, hi = self.mean - 12 * self.sd, self.mean + 12 * self.sd
        out = []
        if lo < -self.cut:
            out.append((lo, min(hi, -self.cut)))
        if hi > self.cut:
            out.append((max(lo, self.cut), hi))
        return out

    def abs_mean(self):
        # closed form of E|X| restricted to |X| >= cut, via the normal partial expectation
        m, s, c = self.mean, self.sd, self.cut
        d = self._dist

        def upper(a):  # E[X; X > a]
            return m * d.sf(a) + s * s * d.pdf(a)

        pos = upper(c)
        neg = -(m * d.cdf(-c) - s * s * d.pdf(-c))
        return float((pos + neg) / self._mass)

    def min_abs(self):
        return self.cut

    def describe(self):
        return {"family": "conditioned_normal", "mean": self.mean, "sd": self.sd, "cut": self.cut}


def jump_law_from_spec(spec: dict) -> JumpLaw:
    spec = dict(spec)
    family = spec.pop("family")
    if family == "exponential":
        law = ExponentialLaw(rate=spec.pop("rate", 1.0), symmetric=spec.pop("symmetric", False))
    elif family == "shifted_exponential":
        law = ExponentialLaw(rate=spec.pop("rate", 1.0), shift=spec.pop("shift", 1.0),
                             symmetric=spec.pop("symmetric", False))
    elif family == "uniform":
        if "intervals" in spec:
            law = UniformUnionLaw(spec.pop("intervals"))
        elif spec.pop("symmetric", False):
            law = UniformUnionLaw.symmetric(spec.pop("low"), spec.pop("high"))
        else:
            law = UniformUnionLaw([(spec.pop("low"), spec.pop("high"))])
    elif family == "discrete":
        law = DiscreteLaw(spec.pop("values"), spec.pop("probs"))
    elif family == "conditioned_normal":
        law = ConditionedNormalLaw(spec.pop("mean", 0.0), spec.pop("sd", 1.0), spec.pop("cut", 0.0))
    else:
        raise ValueError(f"unknown jump law family {family!r}")
    if spec:
        raise ValueError(f"unexpected keys for jump law {family}: {sorted(spec)}")
    return law


def beta_order_stat_cdf(k: int, i: int, t: float = 1.0):
    """CDF of the k-th of i uniform order statistics on [0, t] (Beta(k, i-k+1) scaled)."""
    def cdf(x):
        return special.betainc(k, i - k + 1, np.clip(np.asarray(x, dtype=float) / t, 0.0, 1.0))
    return cdf
