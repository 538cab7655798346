import math

import numpy as np
import pytest
from scipy import integrate

from inertial_sde import (ConfigurationError, DampingSchedule, DiffusionSchedule, DomainError, TikhonovSchedule,
                          I_transform, big_gamma, exp_neg_A, integrability_class, theta)
from inertial_sde.schedules import saturating_factor


def custom_power(alpha=4.0, t0=1.0):
    return DampingSchedule.custom(lambda t: alpha / t, lambda t: alpha / t, t0)


def test_big_gamma_examples():
    assert big_gamma(DampingSchedule.power(4, 1), 6.0) == pytest.approx(2.0)
    assert big_gamma(DampingSchedule.constant(2.0), 17.0) == pytest.approx(0.5)
    assert big_gamma(custom_power(), 6.0) == pytest.approx(2.0, abs=1e-6)


def test_power_alpha_at_most_one_rejected():
    with pytest.raises(ConfigurationError):
        DampingSchedule.power(1.0, 1.0)


def test_theta_examples():
    assert theta(DampingSchedule.power(4, 1), 0.0, 5.0) == pytest.approx(4.0)
    assert theta(DampingSchedule.constant(2.0, 0.0), 0.0, 4.0) == pytest.approx(2.0)
    assert theta(DampingSchedule.power(4, 1), 0.7, 1.0) == pytest.approx(0.7)
    with pytest.raises(DomainError):
        theta(DampingSchedule.power(4, 1), 0.0, 0.5)


def test_exp_neg_A_examples():
    assert exp_neg_A(DampingSchedule.power(4, 1), 10.0) == pytest.approx(1e-3)
    assert exp_neg_A(DampingSchedule.power(4, 1), 1.0) == pytest.approx(1.0)
    # oracle: A(3) = int_0^3 du / Gamma by quadrature
    d = DampingSchedule.constant(2.0, 0.0)
    A = integrate.quad(lambda u: 1 / big_gamma(d, u), 0, 3)[0]
    assert exp_neg_A(d, 3.0) == pytest.approx(math.exp(-A), rel=1e-12)
    assert exp_neg_A(d, 3.0) == pytest.approx(math.exp(-6.0))


SCHEDULES = [DampingSchedule.power(4, 1), DampingSchedule.power(2.5, 0.5), DampingSchedule.constant(1.3, 0.0),
             custom_power(), DampingSchedule.custom(lambda t: 3 / t + 1 / t**2, lambda t: 3 / t + 1 / t**2, 1.0)]


@pytest.mark.parametrize("d", SCHEDULES, ids=repr)
def test_gamma_ode_relation(d):
    ts = np.geomspace(max(d.t0, 0.1) + 0.05, 200, 50)
    h = 1e-4 * ts
    dG = (d.big_gamma(ts + h) - d.big_gamma(ts - h)) / (2 * h)
    np.testing.assert_allclose(dG, d.gamma(ts) * d.big_gamma(ts) - 1, atol=1e-6)


@pytest.mark.parametrize("d", SCHEDULES[:3], ids=repr)
def test_closed_form_matches_quadrature(d):
    for t in (d.t0 + 0.5, d.t0 + 7.0, d.t0 + 60.0):
        logp = lambda s: integrate.quad(d.gamma, d.t0, s)[0]
        tail = integrate.quad(lambda s: math.exp(-(logp(s) - logp(t))), t, np.inf, limit=400)[0]
        assert d.big_gamma(t) == pytest.approx(tail, rel=1e-4)
        th = integrate.quad(d.big_gamma, d.t0, t)[0]
        assert d.theta(t, 0.0) == pytest.approx(th, rel=1e-4)
        A = integrate.quad(lambda u: 1 / d.big_gamma(u), d.t0, t)[0]
        assert d.A(t) == pytest.approx(A, rel=1e-4)


@pytest.mark.parametrize("d", SCHEDULES, ids=repr)
def test_theta_inverse_and_monotone(d):
    ts = np.linspace(d.t0, d.t0 + 50, 40)
    th = d.theta(ts, 1.0)
    assert np.all(np.diff(th) > 0)
    for t, s in zip(ts, th):
        assert d.theta_inv(s, 1.0) == pytest.approx(t, rel=1e-9, abs=1e-12)


@pytest.mark.parametrize("d", SCHEDULES, ids=repr)
def test_exp_neg_A_times_exp_A(d):
    ts = np.linspace(d.t0, d.t0 + 30, 20)
    np.testing.assert_allclose(d.exp_neg_A(ts) * np.exp(d.A(ts)), 1.0, atol=1e-9)
    assert np.all(np.diff(d.A(ts)) > 0)


def test_I_transform_examples():
    d = DampingSchedule.power(4, 1)
    for t in (2.0, 10.0, 100.0):
        assert I_transform(d, lambda u: 1.0, t) == pytest.approx(1 - float(d.exp_neg_A(t)), abs=1e-9)
        assert I_transform(d, lambda u: 0.0, t) == 0.0
    vals = [I_transform(d, lambda u: 1 / d.theta(u, 1.0), t) * t**2 for t in np.geomspace(10, 1000, 12)]
    assert max(vals) < 2 * min(vals) + 10


def test_I_transform_of_vanishing_input_vanishes():
    d = DampingSchedule.power(3, 1)
    vals = [I_transform(d, lambda u: 1 / math.sqrt(u), t) for t in (10, 100, 1000, 10000)]
    assert np.all(np.diff(vals) < 0) and vals[-1] < 0.05


def test_integrability_examples():
    d = DampingSchedule.power(4, 1)
    r = integrability_class(d, DiffusionSchedule.power(0.5, 3))
    assert r.traj_ok and r.rate_ok and r.fast_ok
    assert r.exponents["critical_q"]["traj_ok"] == 1.5
    r = integrability_class(d, DiffusionSchedule.power(0.5, 2))
    assert r.traj_ok and not r.rate_ok
    assert any("rate_ok requires q > 5/2" in n for n in r.notes)
    r = integrability_class(d, DiffusionSchedule.zero())
    assert r.traj_ok and r.rate_ok and r.fast_ok


def test_diffusion_bound_and_state_factor():
    s = DiffusionSchedule.power(0.5, 1.5, state_factor=saturating_factor, l0=1.0)
    ts = np.linspace(1, 100, 200)
    assert np.all(s.envelope(ts) <= s.bound(1.0) + 1e-15)
    rng = np.random.default_rng(0)
    x, y = rng.normal(size=(2, 500, 3)) * 5
    lhs = np.abs(s.state_factor(x) - s.state_factor(y))
    assert np.all(lhs <= s.l0 * np.linalg.norm(x - y, axis=-1) + 1e-12)


def test_tikhonov_epsilon():
    d = DampingSchedule.power(4, 1)
    ts = TikhonovSchedule(0.9, d, 1.0)
    assert ts.epsilon(1.0) == pytest.approx(1.0)
    assert ts.epsilon(5.0) == pytest.approx(5.0 ** -0.9)
    with pytest.raises(ConfigurationError):
        TikhonovSchedule(1.5)
