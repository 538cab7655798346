import math

import numpy as np
import pytest

from inertial_sde import (DampingSchedule, DiffusionSchedule, DomainError, MonteCarloError, TimeGrid,
                          builtin_problem, sample_brownian, simulate_first_order, simulate_inertial)
from inertial_sde.analysis import (GapCurve, as_rate_diagnostic, consistency_orders, fit_loglog_rate, gap_curve,
                                   gradient_integral, linear_rate_fit, mc_gap_curve, pl_floor)
from inertial_sde.config import default_config

QUAD = builtin_problem("quadratic", A=[[1.0]])
D4 = DampingSchedule.power(4, 1)


@pytest.mark.parametrize("fun,target", [(lambda t: 7 * t**-2.0, -2.0), (lambda t: 3 / t, -1.0)])
def test_synthetic_power_slopes(fun, target):
    t = np.geomspace(1, 1e4, 200)
    fit = fit_loglog_rate((t, fun(t)), target=target, tolerance=0.01)
    assert fit.slope == pytest.approx(target, abs=1e-10) and fit.verdict


def test_synthetic_exponential_linear_slope():
    t = np.linspace(0, 40, 401)
    fit = linear_rate_fit((t, np.exp(-t / 2)), mu=1.0)
    assert fit.slope == pytest.approx(-0.5, abs=1e-10) and fit.verdict


def test_window_shrinks_on_nonpositive_values():
    t = np.geomspace(1, 1e4, 200)
    y = t**-2.0
    y[-20:] = 0.0
    fit = fit_loglog_rate((t, y))
    assert fit.notes and fit.t_hi < t[-20]
    assert fit.slope == pytest.approx(-2.0, abs=1e-10)
    y[-80:] = 0.0
    with pytest.raises(DomainError):
        fit_loglog_rate((t, y))


def test_noiseless_curve_has_zero_stderr():
    tr = simulate_inertial(QUAD, DiffusionSchedule.zero(), D4, TimeGrid(1, 20, 0.01), x0=1.0, n_paths=4)
    c = gap_curve(tr)
    assert np.all(c.stderr == 0.0) and not c.negative_flag


def test_too_many_aborted_paths():
    tr = simulate_first_order(QUAD, DiffusionSchedule.zero(), TimeGrid(0, 9000, 3.0), x0=1.0, n_paths=2)
    with pytest.raises(MonteCarloError):
        gap_curve(tr)


def small_config():
    cfg = default_config("simulate")
    cfg.grid = {"horizon": "20", "h": "0.01", "stride": "50"}
    cfg.diffusion = {"kind": "power", "c": "0.5", "q": "1"}
    return cfg


def test_disjoint_batches_agree():
    cfg = small_config()
    a = mc_gap_curve(cfg, 64, 3, first_path=0)
    b = mc_gap_curve(cfg, 64, 3, first_path=64)
    se = np.sqrt(a.stderr**2 + b.stderr**2)
    m = se > 0
    # about 0.3% of nodes may exceed 3 SE by chance
    assert np.mean(np.abs(a.mean - b.mean)[m] <= 3 * se[m]) >= 0.9


def test_stderr_halves_with_four_times_paths():
    cfg = small_config()
    a = mc_gap_curve(cfg, 64, 5)
    b = mc_gap_curve(cfg, 256, 5, first_path=64)
    ratio = np.median(b.stderr[5:] / a.stderr[5:])
    assert ratio == pytest.approx(0.5, rel=0.25)


def test_as_rate_deterministic_and_zero():
    tr = simulate_inertial(QUAD, DiffusionSchedule.zero(), D4, TimeGrid(1, 200, 0.01), x0=1.0, stride=10)
    rep = as_rate_diagnostic(tr, None)
    assert rep.median < 0.5 and rep.verdict and not rep.meets_path_minimum
    t = np.linspace(1, 100, 200)
    assert as_rate_diagnostic(t, np.zeros((200, 3))).median == 0.0


def test_gradient_integral_share():
    tr = simulate_inertial(QUAD, DiffusionSchedule.zero(), D4, TimeGrid(1, 200, 0.01), x0=1.0, stride=10)
    rep = gradient_integral(tr, lambda t: t**2)
    assert rep.verdict() and np.all(np.diff(rep.running[:, 0]) >= 0)


def test_linear_fit_deterministic_and_floor_limited():
    d = DampingSchedule.constant(math.sqrt(2.0), 0.0)
    tr = simulate_inertial(QUAD, DiffusionSchedule.zero(), d, TimeGrid(0, 30, 0.01), x0=1.0, stride=10)
    fit = linear_rate_fit(gap_curve(tr), mu=1.0)
    assert fit.slope <= -0.4 and fit.verdict
    t = np.linspace(0, 10, 101)
    sig = DiffusionSchedule.constant(1.0)
    fit = linear_rate_fit((t, np.full_like(t, 0.6)), 1.0, floor=pl_floor(1.0, 1.0, sig, t))
    assert fit.kind == "floor-limited" and fit.verdict is None


def test_consistency_noiseless_order_one():
    rep = consistency_orders(QUAD, D4, DiffusionSchedule.zero(), 5.0, [0.04, 0.02, 0.01], 1, 0)
    np.testing.assert_array_equal(rep.err_sde, rep.err_ode)
    assert rep.order_ode == pytest.approx(1.0, abs=0.1) and rep.monotone


def test_first_order_gradient_decreases():
    p = builtin_problem("quadratic", A=[[2.0, 0.0], [0.0, 1.0]])
    g = TimeGrid(1, 50, 0.01)
    tr = simulate_first_order(p, DiffusionSchedule.power(0.3, 1.0), g, sample_brownian(2, g, 1, 8),
                              x0=[1.0, 1.0], n_paths=8)
    assert np.all(tr.grad_norm[-1] < tr.grad_norm[0] / 10)


def test_gap_curve_csv(tmp_path):
    c = GapCurve(np.array([1.0, 2.0]), np.array([0.5, -1e-3]), np.array([0.1, 1e-4]), 4)
    assert c.negative_flag
    c.write_csv(tmp_path / "g.csv")
    assert (tmp_path / "g.csv").read_text().splitlines()[0].startswith("t,")
