import math

import numpy as np
import pytest

import oracles
from shotnoise.kernels import ConstantKernel, Indicator, ProductKernel, product_exp
from shotnoise.spectral import (CharFnGrid, InversionBoundaryError, SpectralPreconditionError, charfn,
                                empirical_charfn, estimate_atom, invert_density)
from shotnoise.stochastic import ExponentialLaw, UniformUnionLaw

EXP1 = ExponentialLaw(1.0)
WINDOW = ProductKernel(Indicator(1.0), "x")


def test_charfn_at_zero_and_conjugate_symmetry():
    u = np.array([-3.0, -1.0, 0.0, 1.0, 3.0])
    cf = charfn(product_exp(1.0), EXP1, 1.0, u)
    assert cf.phi[2] == 1.0
    np.testing.assert_allclose(cf.phi[0], np.conj(cf.phi[4]), atol=1e-15)
    assert np.all(np.abs(cf.phi) <= 1.0 + 1e-12)


def test_charfn_exp_kernel_oracle():
    u = np.linspace(-15, 15, 31)
    cf = charfn(product_exp(1.0), EXP1, 1.0, u)
    np.testing.assert_allclose(cf.phi, oracles.exp_kernel_cf_exp_marks(u), atol=1e-7)


def test_charfn_generic_route_matches_closed_form():
    u = np.array([-4.0, 0.5, 2.0, 7.0])
    a = charfn(product_exp(1.0), EXP1, 1.0, u)
    b = charfn(product_exp(1.0), EXP1, 1.0, u, force_generic=True)
    np.testing.assert_allclose(a.phi, b.phi, atol=1e-6)


def test_charfn_rate_power():
    u = np.array([0.7, 2.0])
    one = charfn(WINDOW, EXP1, 1.0, u).phi
    three = charfn(WINDOW, EXP1, 3.0, u).phi
    np.testing.assert_allclose(three, one ** 3, atol=1e-12)


def test_charfn_refuses_divergent():
    with pytest.raises(SpectralPreconditionError):
        charfn(ConstantKernel(1.0), EXP1, 1.0, np.array([1.0]))


def test_atom_metadata():
    cf = charfn(WINDOW, EXP1, 2.0, np.array([0.0, 1.0]))
    assert cf.atom == pytest.approx(math.exp(-2.0))
    assert charfn(product_exp(1.0), EXP1, 1.0, np.array([1.0])).atom == 0.0


def test_estimate_atom_from_tail():
    u = np.arange(0, 2001) * 0.5
    cf = charfn(ProductKernel(Indicator(1.0), "x"), UniformUnionLaw([(1.0, 2.0)]), 1.0, u)
    assert estimate_atom(cf) == pytest.approx(math.exp(-1.0), abs=2e-3)


def test_empirical_charfn():
    rng = np.random.default_rng(0)
    x = rng.normal(size=200_000)
    u = np.array([0.0, 0.5, 1.0])
    emp = empirical_charfn(x, u)
    np.testing.assert_allclose(emp.phi, np.exp(-u ** 2 / 2), atol=0.01)


def test_csv_roundtrip(tmp_path):
    cf = charfn(WINDOW, EXP1, 1.0, np.array([-1.0, 0.0, 2.0]))
    cf.to_csv(tmp_path / "cf.csv")
    back = CharFnGrid.from_csv(tmp_path / "cf.csv")
    assert np.array_equal(back.u, cf.u) and np.array_equal(back.phi, cf.phi)


@pytest.mark.parametrize("method, tol", [("gil-pelaez", 1e-4), ("fft-grid", 5e-3)])
def test_density_inversion_compound_poisson(method, tol):
    u = np.arange(0, 40001) * 0.01
    cf = charfn(WINDOW, EXP1, 1.0, u)
    x = np.linspace(0.1, 8.0, 80)
    with pytest.warns(RuntimeWarning):
        res = invert_density(cf, x, method=method, atom=math.exp(-1.0))
    assert np.abs(res.density - oracles.compound_poisson_exp_density(x)).max() < tol
    assert res.atom == pytest.approx(math.exp(-1.0))


def test_density_inversion_gaussian_like():
    # uniform marks on a long window give a smooth density with a fast-decaying CF
    k = ProductKernel(Indicator(20.0), "x")
    law = UniformUnionLaw.symmetric(0.5, 1.0)
    u = np.arange(0, 4001) * 0.005
    cf = charfn(k, law, 1.0, u)
    x = np.linspace(-3, 3, 61)
    res = invert_density(cf, x, strict=True)
    assert res.boundary_level < 1e-6
    assert np.all(res.density >= 0)
    var = 20.0 * (1.0 - 0.125) / (3 * 0.5)   # rate * T * E[X^2]
    peak = 1 / math.sqrt(2 * math.pi * var)
    assert res.density[30] == pytest.approx(peak, rel=0.05)


def test_strict_boundary_raises():
    cf = charfn(WINDOW, EXP1, 1.0, np.arange(0, 101) * 0.1)
    with pytest.raises(InversionBoundaryError):
        invert_density(cf, np.array([1.0]), strict=True, atom=math.exp(-1.0))
