import numpy as np
import pytest

from inertial_sde import (ConfigurationError, DampingSchedule, DiffusionSchedule, TikhonovSchedule, TimeGrid,
                          builtin_problem, simulate_inertial)
from inertial_sde.tikhonov import (R_function, check_tikhonov_conditions, min_norm_convergence_run,
                                   reg_minimizer, regularization_path)

DEGEN = builtin_problem("quadratic", A=[[1.0, 0.0], [0.0, 0.0]], b=[1.0, 0.0])
D4 = DampingSchedule.power(4, 1)
L1 = builtin_problem("l1_least_squares", M=[[1.0, 2.0, 0.0], [3.0, 4.0, 1.0], [0.0, 1.0, 1.0]],
                     y=[1.0, 2.0, 0.5], weight=0.3)


def test_reg_minimizer_closed_form():
    np.testing.assert_allclose(reg_minimizer(DEGEN, 1.0), [0.5, 0.0])
    np.testing.assert_allclose(reg_minimizer(DEGEN, 1e-9), [1.0, 0.0], atol=1e-8)
    np.testing.assert_allclose(DEGEN.min_norm_solution(), [1.0, 0.0])
    with pytest.raises(ConfigurationError):
        reg_minimizer(DEGEN, 0.0)


def test_reg_minimizer_l1_against_ista():
    eps = 0.1
    f, g = L1.f, L1.g
    step = 1.0 / (f.lipschitz_L + eps)
    # oracle: plain proximal gradient iterated to a 1e-10 fixed point
    x = np.zeros(3)
    for _ in range(1_000_000):
        x_new = g.prox(step, x - step * (f.grad(x) + eps * x))
        if np.linalg.norm(x_new - x) <= 1e-10 * step:
            break
        x = x_new
    np.testing.assert_allclose(reg_minimizer(L1, eps), x_new, atol=1e-8)


def test_reg_minimizer_optimality_smoothed():
    for eps in (1.0, 0.1, 0.01):
        x = reg_minimizer(L1, eps, smoothed=True)
        assert np.linalg.norm(L1.drift(x) + eps * x) <= 1e-8


def test_regularization_path_monotone():
    p = builtin_problem("quadratic", A=[[2.0, 1.0, 0.0], [1.0, 1.0, 0.0], [0.0, 0.0, 0.0]], b=[1.0, 1.0, 0.0])
    path = regularization_path(p, np.geomspace(10, 1e-6, 30))
    assert np.all(path.norms <= np.linalg.norm(path.x_star) + 1e-12)
    assert np.all(np.diff(path.norms) >= -1e-12)
    assert np.all(np.diff(path.distances) <= 1e-12)


def test_r_range_examples():
    rep = check_tikhonov_conditions(D4, TikhonovSchedule(0.9, D4, 1.0), DEGEN, 1e3)
    assert rep.r_threshold == pytest.approx(0.8) and rep.r_range_ok
    assert rep.t1_ok and rep.t2_ok and rep.t3_ok
    rep = check_tikhonov_conditions(D4, TikhonovSchedule(0.5, D4, 1.0), DEGEN, 1e3)
    assert not rep.r_range_ok


def test_missing_error_bound_skips_range_check():
    huber = builtin_problem("huber", center=[0.0], delta=1.0)
    rep = check_tikhonov_conditions(D4, TikhonovSchedule(0.9, D4, 1.0), huber, 1e2)
    assert rep.r_range_ok is None and any("skipped" in n for n in rep.notes)


def test_R_trivial_cases():
    ts = TikhonovSchedule(0.5, D4, 1.0)
    assert R_function(D4, ts, DiffusionSchedule.zero(), 2.0, 50.0) == 0.0
    assert R_function(D4, ts, DiffusionSchedule.power(0.5, 3), 2.0, 2.0) == 0.0


def test_R_decay_bound():
    # Gamma sigma^2 = O(theta^-2) for sigma = t^-2.5 with Gamma ~ t/3, theta ~ t^2/6
    ts = TikhonovSchedule(0.5, D4, 1.0)
    sig = DiffusionSchedule.power(1.0, 2.5)
    t = np.geomspace(3, 1000, 12)
    th = D4.theta(t, 1.0)
    R = np.array([R_function(D4, ts, sig, 2.0, s) for s in th])
    assert np.all(R >= 0)
    scaled = R * th ** (2 - 0.5)
    assert scaled.max() < 10 * scaled[-4:].min()
    assert R[-1] < 1e-3 * R[0]


def test_R_no_overflow_at_large_s():
    ts = TikhonovSchedule(0.2, D4, 1.0)
    assert np.isfinite(R_function(D4, ts, DiffusionSchedule.power(1.0, 2.5), 2.0, 1e6))


def test_equilibrium_without_noise_or_tikhonov():
    tr = simulate_inertial(DEGEN, DiffusionSchedule.zero(), D4, TimeGrid(1, 50, 0.01), x0=[1.0, 3.0])
    assert np.all(tr.X == np.array([1.0, 3.0]))


def test_degenerate_fixture_reported():
    p = builtin_problem("quadratic", A=[[1.0, 0.0], [0.0, 2.0]])
    rep = min_norm_convergence_run(p, D4, TikhonovSchedule(0.9), DiffusionSchedule.zero(), TimeGrid(1, 10, 0.01),
                                   2, 0, x0=[1.0, 1.0])
    assert rep.degenerate


def test_min_norm_short_run():
    rep = min_norm_convergence_run(DEGEN, D4, TikhonovSchedule(0.9), DiffusionSchedule.power(0.5, 3),
                                   TimeGrid(1, 200, 0.01), 8, 3, x0=[0.0, 5.0])
    assert rep.sq_dist[-1] < rep.sq_dist_control[-1]
    assert rep.sq_dist_control[-1] > 20.0
