import math

import numpy as np
import pytest

from shotnoise.sde import (AffineDrift, DampedCubicDrift, LogisticDrift, NoJumpError, ScaledDrift,
                           SdeTruncationError, drift_from_spec, finite_difference_derivative,
                           jump_time_derivative, linear, simulate, simulate_from_jumps,
                           terminal_values, tv_convergence_experiment, tv_verdict)
from shotnoise.stochastic import ExponentialLaw, RngStream


def _affine_terminal(c0, c1, x0, times, jumps, t_end=1.0):
    # variation of constants, written independently of the integrator
    x, t = x0, 0.0
    for s, j in list(zip(times, jumps)) + [(t_end, 0.0)]:
        dt = s - t
        x = x * math.exp(c1 * dt) + c0 / c1 * math.expm1(c1 * dt) + j
        t = s
    return x


@pytest.mark.parametrize("c0, c1", [(0.0, -1.0), (0.5, -1.3), (-0.2, 0.8)])
def test_affine_paths_match_closed_form(c0, c1):
    times, jumps = [0.2, 0.55, 0.9], [1.0, -0.4, 2.0]
    path = simulate_from_jumps(AffineDrift(c0, c1), 0.7, times, jumps)
    assert path.terminal == pytest.approx(_affine_terminal(c0, c1, 0.7, times, jumps), abs=1e-10)
    np.testing.assert_allclose(path.post - path.pre, jumps)


def test_linear_derivative_closed_form():
    lam, t1, jump = 2.0, 0.3, 1.5
    path = simulate_from_jumps(linear(lam), 1.0, [t1], [jump])
    exact = lam * jump * math.exp(-lam * (1 - t1))
    assert jump_time_derivative(linear(lam), path) == pytest.approx(exact, rel=1e-10)


@pytest.mark.parametrize("drift", [DampedCubicDrift(1.0), LogisticDrift(-2.0, 1.5), AffineDrift(0.3, 0.5)])
def test_derivative_matches_finite_difference(drift):
    path = simulate_from_jumps(drift, 0.4, [0.25, 0.6], [1.2, -0.7])
    closed = jump_time_derivative(drift, path)
    fd = finite_difference_derivative(drift, path, 1e-5)
    assert closed == pytest.approx(fd, rel=1e-6)


def test_no_jump():
    path = simulate_from_jumps(linear(1.0), 2.0, [], [])
    assert path.terminal == pytest.approx(2.0 * math.exp(-1.0), rel=1e-12)
    with pytest.raises(NoJumpError):
        jump_time_derivative(linear(1.0), path)


def test_jump_time_validation():
    with pytest.raises(ValueError):
        simulate_from_jumps(linear(1.0), 0.0, [0.5, 0.4], [1.0, 1.0])


def test_blow_up_is_reported():
    with pytest.raises(SdeTruncationError):
        simulate_from_jumps(drift_from_spec({"family": "affine", "c0": 0.0, "c1": 50.0}), 1.0, [], [],
                            t_end=1.0, box=(-1e6, 1e6))


def test_terminal_values_threads():
    a = terminal_values(DampedCubicDrift(1.0), 1.0, 5.0, ExponentialLaw(1.0), 1.0, 25_000, RngStream(3))
    b = terminal_values(DampedCubicDrift(1.0), 1.0, 5.0, ExponentialLaw(1.0), 1.0, 25_000, RngStream(3), threads=4)
    assert np.array_equal(a, b)


def test_terminal_mean_linear():
    # E X_1 = x0 e^{-1} + rate * E[J] * (1 - e^{-1})
    x = terminal_values(linear(1.0), 1.0, 3.0, ExponentialLaw(1.0), 1.0, 40_000, RngStream(4))
    expect = math.exp(-1) + 3.0 * (1 - math.exp(-1))
    assert x.mean() == pytest.approx(expect, abs=4 * x.std() / math.sqrt(x.size))


def test_single_path_reproducible(tmp_path):
    p1 = simulate(DampedCubicDrift(1.0), 0.5, 4.0, ExponentialLaw(1.0), stream=RngStream(9))
    p2 = simulate(DampedCubicDrift(1.0), 0.5, 4.0, ExponentialLaw(1.0), stream=RngStream(9))
    assert p1.terminal == p2.terminal
    p1.to_csv(tmp_path / "p.csv")
    lines = (tmp_path / "p.csv").read_text().splitlines()
    assert lines[0] == "t,x,kind"
    assert sum(l.endswith(",pre") for l in lines) == p1.jump_times.size


def test_scaled_drift():
    d = ScaledDrift(linear(1.0), 1.5)
    assert float(d.a(np.array(2.0))) == pytest.approx(-3.0)
    assert float(d.da(np.array(2.0))) == pytest.approx(-1.5)


def test_tv_verdict_rules():
    assert tv_verdict([0.3, 0.1, 0.02], [0.02, 0.02, 0.02])[0] == "pass"
    assert tv_verdict([0.3, 0.1, 0.105], [0.02, 0.02, 0.02])[0] == "fail"
    assert tv_verdict([0.3, 0.02, 0.025], [0.02, 0.02, 0.02])[0] == "pass"
    assert tv_verdict([0.3, 0.1, 0.02], [0.02, 0.02, 0.02], monotone_ok=False)[0] == "fail"


def test_tv_experiment_small():
    table = tv_convergence_experiment([ScaledDrift(linear(1.0), 1.5)], linear(1.0), [1.5], 1.0, 1.0,
                                      20_000, RngStream(5), indices=[2])
    assert table.rows[0]["tv"] > 5 * table.rows[0]["noise_floor"]
    assert table.verdict == "fail"


def test_drift_spec():
    assert drift_from_spec({"family": "linear", "lam": 2.0}) == AffineDrift(0.0, -2.0)
    with pytest.raises(ValueError):
        drift_from_spec({"family": "linear", "lam": 2.0, "x": 1})
