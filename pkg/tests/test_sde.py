import csv
import warnings

import numpy as np
import pytest

from inertial_sde import (ConfigurationError, DampingOvershootWarning, DampingSchedule, DiffusionSchedule, TimeGrid,
                          builtin_problem, sample_brownian, simulate_first_order, simulate_inertial,
                          simulate_scaled_first_order)
from inertial_sde.sde import write_aggregate_csv, write_trajectory_csv

QUAD = builtin_problem("quadratic", A=[[1.0]])


def test_nonfinite_envelope_rejected():
    d = DampingSchedule.power(4, 1)
    g = TimeGrid(1, 2, 0.1)
    with pytest.raises(ConfigurationError):
        # s-time envelope s^-1 is infinite at theta(t0) = s0 = 0
        simulate_scaled_first_order(QUAD, DiffusionSchedule.power(1.0, 1.0), d, g, sample_brownian(1, g, 1), s0=0.0)


def test_grid_node_count():
    g = TimeGrid(1.0, 2.0, 0.3)
    assert g.n_nodes == 4
    assert TimeGrid(0.0, 1.0, 0.1).n_nodes == 11
    with pytest.raises(ConfigurationError):
        TimeGrid(0.0, 1.0, 0.0)


def test_brownian_determinism_and_coarsening():
    g = TimeGrid(0, 1, 0.01)
    a = sample_brownian(2, g, 42, 3)
    b = sample_brownian(2, g, 42, 3)
    assert np.array_equal(a.increments, b.increments)
    c = a.coarsen(2)
    assert np.array_equal(c.increments, a.increments[0::2] + a.increments[1::2])
    assert c.grid.h == pytest.approx(0.02)


def test_path_independent_of_batch():
    g = TimeGrid(0, 1, 0.01)
    batch = sample_brownian(1, g, 5, 4)
    single = sample_brownian(1, g, 5, 1, first_path=2)
    assert np.array_equal(batch.increments[:, 2], single.increments[:, 0])


def test_increment_statistics():
    g = TimeGrid(0, 0.1, 0.01)
    p = sample_brownian(1, g, 7, 10_000)
    inc = p.increments
    assert np.var(inc) == pytest.approx(g.h, rel=0.05)
    N = inc.shape[1]
    band = 4 * np.sqrt(g.h) / np.sqrt(N)
    assert np.all(np.abs(inc.mean(axis=1)) < band)


def test_refine_is_consistent_with_coarse_path():
    g = TimeGrid(0, 1, 0.1)
    p = sample_brownian(2, g, 3, 5)
    r = p.refine(8, seed=11)
    np.testing.assert_allclose(r.coarsen(8).increments, p.increments, atol=1e-14)
    assert r.grid.h == pytest.approx(0.0125)


def test_first_order_linear_recursion():
    tr = simulate_first_order(QUAD, DiffusionSchedule.zero(), TimeGrid(0, 1, 0.1), x0=1.0)
    np.testing.assert_allclose(tr.Z[:, 0, 0], 0.9 ** np.arange(11), rtol=1e-14)


def test_first_order_minimizer_is_fixed():
    p = builtin_problem("quadratic", A=[[1.0, 0.0], [0.0, 2.0]], b=[1.0, 2.0])
    tr = simulate_first_order(p, DiffusionSchedule.zero(), TimeGrid(0, 5, 0.1), x0=[1.0, 1.0])
    assert np.all(tr.Z == 1.0)


def test_scaled_constant_gamma_is_half_step():
    d = DampingSchedule.constant(2.0, 0.0)
    n, h = 50, 0.1
    y = simulate_scaled_first_order(QUAD, DiffusionSchedule.zero(), d, TimeGrid(0, n * h, h), x0=1.0)
    z = simulate_first_order(QUAD, DiffusionSchedule.zero(), TimeGrid(0, n * h / 2, h / 2), x0=1.0)
    np.testing.assert_allclose(y.Z, z.Z, rtol=1e-14)


def test_scaled_matches_rescaled_gradient_flow():
    d = DampingSchedule.power(4, 1)
    h = 1e-3
    y = simulate_scaled_first_order(QUAD, DiffusionSchedule.zero(), d, TimeGrid(1, 4, h), x0=1.0)
    th = d.theta(y.t, 0.0)
    exact_gap = 0.5 * np.exp(-2 * th)  # gradient flow on x^2/2 from 1
    assert np.max(np.abs(y.f_gap[:, 0] - exact_gap)) <= h


def test_scaled_first_order_rate_on_flat_fixture():
    d = DampingSchedule.power(4, 1)
    fp = builtin_problem("flat_power", dim=1, power=20)
    sig1 = DiffusionSchedule.power(1.0, 1.5)
    g = TimeGrid(1, 1000, 1e-2)
    y = simulate_scaled_first_order(fp, sig1, d, g, sample_brownian(1, g, 2, 16), x0=2.0, s0=1.0, stride=100)
    t, gap = y.t, y.f_gap.mean(axis=1)
    m = t >= 10 ** (0.6 * 3)
    slope = np.polyfit(np.log(t[m]), np.log(gap[m]), 1)[0]
    assert -2.4 <= slope <= -1.6


def test_inertial_first_step():
    d = DampingSchedule.power(4, 1)
    tr = simulate_inertial(QUAD, DiffusionSchedule.zero(), d, TimeGrid(1, 1.1, 0.1), x0=1.0, v0=0.0)
    assert tr.beta[0] == pytest.approx(1 / 3)
    assert tr.X[1, 0, 0] == pytest.approx(1.0)
    assert tr.V[1, 0, 0] == pytest.approx(-0.1)


def test_inertial_equilibrium():
    p = builtin_problem("quadratic", A=[[1.0, 0.0], [0.0, 0.0]], b=[2.0, 0.0])
    tr = simulate_inertial(p, DiffusionSchedule.zero(), DampingSchedule.power(3, 1), TimeGrid(1, 20, 0.01),
                           x0=[2.0, -1.0])
    assert np.all(tr.X == np.array([2.0, -1.0])) and np.all(tr.V == 0.0)


def test_overshoot_warning():
    with pytest.warns(DampingOvershootWarning):
        simulate_inertial(QUAD, DiffusionSchedule.zero(), DampingSchedule.power(4, 1), TimeGrid(1, 3, 0.5), x0=1.0)
    with warnings.catch_warnings():
        warnings.simplefilter("error", DampingOvershootWarning)
        simulate_inertial(QUAD, DiffusionSchedule.zero(), DampingSchedule.power(4, 1), TimeGrid(1, 3, 0.1), x0=1.0)


def test_divergent_paths_are_aborted():
    g = TimeGrid(0, 9000, 3.0)  # |1 - h| = 2: geometric blow-up
    tr = simulate_first_order(QUAD, DiffusionSchedule.zero(), g, x0=1.0)
    assert tr.aborted.all()
    k = tr.last_valid[0]
    assert 0 < k < g.n_steps
    assert np.isfinite(tr.Z[k, 0, 0]) and np.isnan(tr.Z[-1, 0, 0])


def test_zero_noise_runs_ignore_seed():
    d = DampingSchedule.power(4, 1)
    g = TimeGrid(1, 20, 0.01)
    runs = [simulate_inertial(QUAD, DiffusionSchedule.zero(), d, g, sample_brownian(1, g, s, 2), x0=1.0)
            for s in (1, 2)]
    assert np.array_equal(runs[0].X, runs[1].X) and np.array_equal(runs[0].V, runs[1].V)


def test_seed_reproducibility():
    d = DampingSchedule.power(4, 1)
    g = TimeGrid(1, 20, 0.01)
    sig = DiffusionSchedule.power(0.5, 2)
    a = simulate_inertial(QUAD, sig, d, g, sample_brownian(1, g, 9, 4), x0=1.0)
    b = simulate_inertial(QUAD, sig, d, g, sample_brownian(1, g, 9, 4), x0=1.0)
    assert np.array_equal(a.X, b.X)


def test_discrete_energy_nonincreasing_up_to_h():
    d = DampingSchedule.constant(0.5, 0.0)
    h = 0.01
    tr = simulate_inertial(QUAD, DiffusionSchedule.zero(), d, TimeGrid(0, 30, h), x0=1.0, v0=0.5)
    E = 0.5 * tr.X[:, 0, 0] ** 2 + 0.5 * tr.V[:, 0, 0] ** 2
    assert np.max(np.diff(E)) <= h * E[0]
    assert E[-1] < 0.01 * E[0]


def test_trajectory_csv(tmp_path):
    d = DampingSchedule.power(4, 1)
    g = TimeGrid(1, 2, 0.1)
    p10 = builtin_problem("quadratic", A=np.eye(10).tolist())
    tr = simulate_inertial(p10, DiffusionSchedule.power(0.1, 1), d, g, sample_brownian(10, g, 1, 3), x0=1.0)
    write_trajectory_csv(tr, tmp_path / "p.csv")
    write_aggregate_csv(tr, tmp_path / "a.csv")
    rows = list(csv.reader(open(tmp_path / "p.csv")))
    assert rows[0] == ["t", "x_norm", "f_gap", "grad_norm"] and len(rows) == g.n_nodes + 1
    rows = list(csv.reader(open(tmp_path / "a.csv")))
    assert rows[0][:3] == ["t", "gap_mean", "gap_stderr"]
    tr1 = simulate_inertial(QUAD, DiffusionSchedule.zero(), d, g, x0=1.0)
    write_trajectory_csv(tr1, tmp_path / "q.csv")
    assert next(csv.reader(open(tmp_path / "q.csv"))) == ["t", "x0", "f_gap", "grad_norm"]
