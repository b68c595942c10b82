"""Characteristic functions of shot noise series and density recovery.

``charfn`` evaluates

    phi(u) = exp(i a u + rate * int int (e^{iuh} - 1 - iuh 1_{|h|<=1}) dt sigma(dx))

with the centered exponent computed without cancellation for small ``uh``.
Values are computed for ``|u|`` and mirrored, so symmetric grids are exactly
Hermitian and ``phi(0) = 1`` exactly.
"""

from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import special

from .kernels import Kernel, _Integrand, atom_measure, centering_a, integrate_kernel, l2_condition
from .stochastic import JumpLaw

BOUNDARY_LEVEL = 1e-6


class SpectralPreconditionError(ValueError):
    pass


class InversionBoundaryError(ValueError):
    pass


@dataclass
class CharFnGrid:
    u: np.ndarray
    phi: np.ndarray
    err: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.u = np.asarray(self.u, dtype=float)
        self.phi = np.asarray(self.phi, dtype=complex)
        self.err = np.broadcast_to(np.asarray(self.err, dtype=float), self.u.shape).copy()
        if self.u.shape != self.phi.shape:
            raise ValueError("u and phi must have the same shape")
        if np.any(np.diff(self.u) <= 0):
            raise ValueError("u grid must be strictly increasing")

    @property
    def atom(self) -> float | None:
        return self.meta.get("atom")

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["u", "re", "im", "err"])
            for u, p, e in zip(self.u.tolist(), self.phi.tolist(), self.err.tolist()):
                w.writerow([repr(u), repr(p.real), repr(p.imag), repr(e)])

    @classmethod
    def from_csv(cls, path, meta=None) -> CharFnGrid:
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader, None)
            if header != ["u", "re", "im", "err"]:
                raise ValueError(f"{path}: expected header 'u,re,im,err'")
            rows = np.array([[float(v) for v in r] for r in reader]).reshape(-1, 4)
        return cls(rows[:, 0], rows[:, 1] + 1j * rows[:, 2], rows[:, 3], dict(meta or {}))


def _sorted_grid(u_grid) -> np.ndarray:
    u = np.unique(np.asarray(u_grid, dtype=float))
    if u.size == 0 or not np.all(np.isfinite(u)):
        raise ValueError("u grid must be a non-empty list of finite values")
    return u


def _mirror(u: np.ndarray, values_abs: np.ndarray, u_abs: np.ndarray) -> np.ndarray:
    idx = np.searchsorted(u_abs, np.abs(u))
    out = values_abs[idx]
    return np.where(u < 0, np.conj(out), out)


def charfn(k: Kernel, sigma: JumpLaw, rate: float, u_grid, tol: float = 1e-6,
           force_generic: bool = False) -> CharFnGrid:
    """Analytic characteristic function on ``u_grid`` (sorted and deduplicated)."""
    u = _sorted_grid(u_grid)
    l2 = l2_condition(k, sigma, rate, tol=tol, force_generic=force_generic)
    if l2.diverged:
        raise SpectralPreconditionError("the L2 existence integral diverges")
    a = centering_a(k, sigma, rate, tol=tol, force_generic=force_generic)
    if not a.converged:
        raise SpectralPreconditionError(f"centering constant did not converge ({a.status})")
    u_abs = np.unique(np.abs(u))
    pos = u_abs[u_abs > 0]
    phi_abs = np.ones(u_abs.shape, dtype=complex)
    err_abs = np.zeros(u_abs.shape)
    quad_error = 0.0
    if pos.size:
        res = integrate_kernel(k, sigma, rate, _Integrand("cf", pos), tol, force_generic=force_generic)
        exponent = 1j * a.value * pos + res.value
        val = np.exp(exponent)
        # |d exp(z)| <= |exp(z)| |dz|; the centering error enters through u
        quad_error = res.error
        err_abs[u_abs > 0] = np.abs(val) * (res.error + pos * a.error)
        phi_abs[u_abs > 0] = val
    phi = _mirror(u, phi_abs, u_abs)
    err = np.abs(_mirror(u, err_abs.astype(complex), u_abs))
    phi[u == 0] = 1.0 + 0.0j
    atom_rate = atom_measure(k, sigma, rate)
    meta = {
        "kernel": k.describe(),
        "sigma": sigma.describe(),
        "rate": rate,
        "centering": a.value,
        "l2": l2.value,
        "quadrature_error": quad_error,
        "atom": math.exp(-atom_rate) if math.isfinite(atom_rate) else 0.0,
    }
    return CharFnGrid(u, phi, err, meta)


def empirical_charfn(samples, u_grid, chunk: int = 1 << 22) -> CharFnGrid:
    """``(1/n) sum_j exp(i u s_j)`` with exact Hermitian symmetry."""
    s = np.asarray(samples, dtype=float).ravel()
    if s.size == 0:
        raise ValueError("samples must be non-empty")
    u = _sorted_grid(u_grid)
    u_abs = np.unique(np.abs(u))
    re = np.zeros(u_abs.size)
    im = np.zeros(u_abs.size)
    step = max(1, chunk // max(1, u_abs.size))
    for start in range(0, s.size, step):
        arg = np.multiply.outer(s[start:start + step], u_abs)
        re += np.cos(arg).sum(axis=0)
        im += np.sin(arg).sum(axis=0)
    vals = (re + 1j * im) / s.size
    phi = _mirror(u, vals, u_abs)
    phi[u == 0] = 1.0 + 0.0j
    err = np.sqrt(np.maximum(1.0 - np.abs(phi) ** 2, 0.0) / s.size)
    return CharFnGrid(u, phi, err, {"n": int(s.size), "empirical": True})


def estimate_atom(cf: CharFnGrid, fraction: float = 0.5) -> float:
    """Mass at 0 as the average of ``Re phi`` over the top ``fraction`` of the grid."""
    pos = cf.u > 0
    u, phi = cf.u[pos], cf.phi[pos]
    if u.size == 0:
        return 0.0
    top = u >= u[-1] * (1.0 - fraction)
    return float(np.mean(phi[top].real))


@dataclass
class DensityResult:
    x: np.ndarray
    density: np.ndarray
    atom: float
    clipped_points: int
    clipped_mass: float
    mass: float
    boundary_level: float
    warnings: list

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["x", "density"])
            for x, d in zip(self.x.tolist(), self.density.tolist()):
                w.writerow([repr(x), repr(d)])

    def report(self) -> dict:
        return {
            "atom": self.atom,
            "clipped_points": self.clipped_points,
            "clipped_mass": self.clipped_mass,
            "mass": self.mass,
            "boundary_level": self.boundary_level,
            "warnings": list(self.warnings),
        }


def _uniform_positive(cf: CharFnGrid):
    keep = cf.u >= 0
    u, psi = cf.u[keep], cf.phi[keep]
    if u.size < 3 or u[0] != 0.0:
        raise ValueError("inversion needs a grid containing 0 and at least two positive points")
    du = np.diff(u)
    if not np.allclose(du, du[0], rtol=1e-9, atol=1e-12):
        raise ValueError("inversion needs a uniformly spaced u grid")
    return u, psi, float(du[0])


def _weights(n: int, h: float) -> np.ndarray:
    """Simpson weights when ``n`` is odd, trapezoid otherwise."""
    if n % 2 == 1:
        w = np.ones(n)
        w[1:-1:2] = 4.0
        w[2:-1:2] = 2.0
        return w * h / 3.0
    w = np.full(n, h)
    w[0] = w[-1] = 0.5 * h
    return w


def _tail_coefficient(u, psi):
    """Least squares fit ``psi ~ p0 + C/(iu)`` on the top 10% of the grid; returns ``C``."""
    top = u >= 0.9 * u[-1]
    top &= u > 0
    if top.sum() < 2:
        return 0.0 + 0.0j
    A = np.stack((np.ones(top.sum(), dtype=complex), 1.0 / (1j * u[top])), axis=1)
    coef, *_ = np.linalg.lstsq(A, psi[top], rcond=None)
    return complex(coef[1])


def _tail_correction(C: complex, U: float, x: np.ndarray) -> np.ndarray:
    """``(1/pi) int_U^inf Re(e^{-iux} C/(iu)) du``."""
    ax = np.abs(x)
    out = np.zeros_like(x)
    nz = ax > 0
    si, ci = special.sici(U * ax[nz])
    out[nz] = (-C.imag * ci - C.real * np.sign(x[nz]) * (0.5 * np.pi - si)) / np.pi
    return out


def invert_density(cf: CharFnGrid, x_grid, method: str = "gil-pelaez", strict: bool = False,
                   atom: float | None = None, tail_correction: bool = True) -> DensityResult:
    """Density of the continuous part from a characteristic function on ``[0, U]``.

    The atom at 0 (declared in ``cf.meta`` or passed explicitly, otherwise
    estimated from the high-frequency average) is removed first. Negative
    values are clipped to 0 and counted.
    """
    x = np.asarray(x_grid, dtype=float)
    u, phi, du = _uniform_positive(cf)
    if atom is None:
        atom = cf.atom
    if atom is None:
        est = estimate_atom(cf)
        atom = est if est > 1e-3 else 0.0
    psi = phi - atom
    notes = []
    boundary = float(np.max(np.abs(psi[u >= 0.95 * u[-1]])))
    if boundary >= BOUNDARY_LEVEL:
        msg = f"|phi - atom| at the grid boundary is {boundary:.3g} >= {BOUNDARY_LEVEL:g}"
        if strict:
            raise InversionBoundaryError(msg)
        notes.append(msg)
        warnings.warn(msg, RuntimeWarning, stacklevel=2)
    C = _tail_coefficient(u, psi) if tail_correction else 0j
    if method == "gil-pelaez":
        w = _weights(u.size, du)
        dens = np.empty_like(x)
        step = max(1, (1 << 22) // u.size)
        wp = w * psi
        for s in range(0, x.size, step):
            xs = x[s:s + step]
            arg = np.multiply.outer(xs, u)
            dens[s:s + step] = (np.cos(arg) @ wp.real + np.sin(arg) @ wp.imag) / np.pi
    elif method == "fft-grid":
        dens = _fft_density(u, psi, du, x)
    else:
        raise ValueError("method must be 'gil-pelaez' or 'fft-grid'")
    if tail_correction and C != 0:
        dens = dens + _tail_correction(C, u[-1] + (0.5 * du if method == "fft-grid" else 0.0), x)
    neg = dens < 0
    clipped_mass = float(np.trapezoid(np.where(neg, -dens, 0.0), x)) if x.size > 1 else 0.0
    dens = np.where(neg, 0.0, dens)
    mass = float(np.trapezoid(dens, x)) if x.size > 1 else 0.0
    if atom >= 1.0 - 1e-12:
        dens = np.zeros_like(dens)
        mass = 0.0
    return DensityResult(x, dens, float(atom), int(neg.sum()), clipped_mass, mass, boundary, notes)


def _fft_density(u, psi, du, x, pad: int = 8):
    """Riemann-sum inversion on an FFT grid, then linear interpolation onto ``x``."""
    n = u.size
    m = 1 << int(math.ceil(math.log2(n * pad)))
    dx = 2.0 * np.pi / (m * du)
    x0 = float(x.min()) if x.size else 0.0
    w = np.full(n, du)
    w[0] = 0.5 * du
    coeff = np.zeros(m, dtype=complex)
    coeff[:n] = w * psi * np.exp(-1j * u * x0)
    vals = np.fft.fft(coeff).real / np.pi
    xs = x0 + dx * np.arange(m)
    if x.size and x.max() > xs[-1]:
        raise ValueError("x grid is wider than the FFT period 2*pi/du")
    return np.interp(x, xs, vals)

