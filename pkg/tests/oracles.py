"""Independent reference values used by the tests.

Nothing here calls into the package's quadrature or inversion code.
"""

import math

import numpy as np
from scipy import special


def compound_poisson_exp_cf(u, rate=1.0, t=1.0):
    """CF of a rate-``rate`` compound Poisson sum of Exp(1) jumps over ``[0, t]``."""
    u = np.asarray(u, dtype=float)
    return np.exp(rate * t * (1.0 / (1.0 - 1j * u) - 1.0))


def compound_poisson_exp_density(x, rate=1.0, t=1.0):
    """Continuous part of that law: Poisson-weighted Gamma(k, 1) densities, via Bessel I1."""
    x = np.asarray(x, dtype=float)
    m = rate * t
    return np.exp(-m - x) * np.sqrt(m / x) * special.i1(2.0 * np.sqrt(m * x))


def compound_poisson_exp_density_series(x, rate=1.0, t=1.0, terms=80):
    """Same density summed term by term; cross-checks the Bessel form."""
    x = np.asarray(x, dtype=float)
    m = rate * t
    out = np.zeros_like(x)
    for k in range(1, terms):
        out += math.exp(-m) * m ** k / math.factorial(k) * x ** (k - 1) * np.exp(-x) / math.factorial(k - 1)
    return out


def exp_kernel_cf_exp_marks(u, rate=1.0, beta=1.0, t_max=60.0, n=200_001):
    """CF of ``sum x e^{-beta T}`` with Exp(1) marks via ``E e^{iuxg} = 1/(1 - iug)``.

    The time integral is done on a dense trapezoid grid; no centering since
    the kernel is integrable (the compensator is folded back in).
    """
    s = np.linspace(0.0, t_max, n)
    g = np.exp(-beta * s)
    out = []
    for uu in np.atleast_1d(u):
        integrand = 1.0 / (1.0 - 1j * uu * g) - 1.0
        out.append(np.exp(rate * np.trapezoid(integrand, s)))
    return np.array(out)


def l2_exp_kernel_exp_marks(rate=1.0, beta=1.0, n=400_001, t_max=60.0):
    """``rate * int_0^inf E[min(X^2 g^2, 1)] dt`` for ``g = e^{-beta t}``, X ~ Exp(1)."""
    s = np.linspace(0.0, t_max, n)
    g = np.exp(-beta * s)
    # E min(X^2 g^2, 1) = E[X^2 g^2; X < 1/g] + P(X >= 1/g)
    c = 1.0 / g
    second = 2.0 - np.exp(-c) * (c * c + 2.0 * c + 2.0)
    inner = g * g * second + np.exp(-c)
    return rate * np.trapezoid(inner, s)


def tv_exact(a_pairs, b_pairs):
    """TV norm of the difference of two finite measures given as ``{loc: weight}`` dicts."""
    keys = set(a_pairs) | set(b_pairs)
    return math.fsum(abs(a_pairs.get(k, 0.0) - b_pairs.get(k, 0.0)) for k in keys)
