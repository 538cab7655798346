"""Tikhonov regularization: viscosity path, condition checks, the R rate function
and minimum-norm convergence runs."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import ConfigurationError, NumericalError
from .problems import CompositeProblem
from .schedules import DampingSchedule, DiffusionSchedule, TikhonovSchedule, _quad
from .sde import TimeGrid, sample_brownian, simulate_inertial

__all__ = [
    "RegularizationPath",
    "TikhonovConditionReport",
    "MinNormReport",
    "reg_minimizer",
    "regularization_path",
    "check_tikhonov_conditions",
    "R_function",
    "min_norm_convergence_run",
]

REG_TOL = 1e-10


def reg_minimizer(problem: CompositeProblem, eps: float, smoothed: bool = False,
                  tol: float = REG_TOL, max_iter: int = 1_000_000, x0=None) -> np.ndarray:
    """Minimizer of ``F(x) + eps/2 |x|^2``.

    Quadratics without a nonsmooth part are solved exactly from
    ``(A + eps I) x = b``.  Otherwise the strongly convex problem is solved by
    accelerated (proximal) gradient until the gradient norm, or the
    fixed-point residual when ``g`` is kept nonsmooth, is below ``tol``.
    ``smoothed=True`` replaces ``g`` by its Moreau envelope, i.e. targets the
    drift used in simulations.
    """
    if not eps > 0:
        raise ConfigurationError(f"eps must be positive, got {eps}")
    f, g = problem.f, problem.g
    if g is None and f.quadratic is not None:
        A, b, _ = f.quadratic
        return np.linalg.solve(A + eps * np.eye(problem.dim), b)
    L = (problem.drift_lipschitz if smoothed else f.lipschitz_L) + eps
    step = 1.0 / L
    q = math.sqrt(eps / L)
    mom = (1.0 - q) / (1.0 + q)
    x = np.zeros(problem.dim) if x0 is None else np.asarray(x0, dtype=float).copy()
    y = x.copy()
    use_prox = g is not None and not smoothed
    for _ in range(max_iter):
        if use_prox:
            grad_y = f.grad(y) + eps * y
            x_new = g.prox(step, y - step * grad_y)
            res = np.linalg.norm(x_new - y) / step
        else:
            grad_y = problem.drift(y) + eps * y
            x_new = y - step * grad_y
            res = np.linalg.norm(grad_y)
        if res <= tol:
            return x_new if use_prox else y
        y = x_new + mom * (x_new - x)
        x = x_new
    raise NumericalError("regularized solve did not converge", {"eps": eps, "residual": float(res)})


@dataclass
class RegularizationPath:
    eps: np.ndarray
    x_eps: np.ndarray
    x_star: np.ndarray

    @property
    def norms(self):
        return np.linalg.norm(self.x_eps, axis=-1)

    @property
    def distances(self):
        return np.linalg.norm(self.x_eps - self.x_star, axis=-1)


def regularization_path(problem: CompositeProblem, eps_values, smoothed: bool = False) -> RegularizationPath:
    eps_values = np.asarray(eps_values, dtype=float)
    xs = np.array([reg_minimizer(problem, e, smoothed=smoothed) for e in eps_values])
    return RegularizationPath(eps_values, xs, problem.min_norm_solution())


# -- conditions -----------------------------------------------------------------------

@dataclass
class TikhonovConditionReport:
    t1_ok: bool
    t2_ok: bool
    t3_ok: Optional[bool]
    r_range_ok: Optional[bool]
    r_threshold: Optional[float]
    values: dict = field(default_factory=dict)
    notes: list = field(default_factory=list)

    @property
    def ok(self):
        return self.t1_ok and self.t2_ok and self.t3_ok is not False and self.r_range_ok is not False


def _decade_edges(t0, horizon):
    lo = max(t0, horizon / 100.0)
    if lo >= horizon / 10.0:
        mid = 0.5 * (t0 + horizon)
        return (t0 + mid) / 2.0, mid, horizon
    return lo, horizon / 10.0, horizon


def check_tikhonov_conditions(d: DampingSchedule, ts: TikhonovSchedule, problem: Optional[CompositeProblem] = None,
                              horizon: float = 1e3, n_samples: int = 200) -> TikhonovConditionReport:
    """Finite-horizon diagnostics for the Tikhonov conditions.

    * limit: ``eps`` is nonincreasing on a sample grid and ``eps(horizon) < eps(t0)``.
    * divergence of ``int eps Gamma``: the last-decade increment is at least
      0.9 times the previous decade's (a convergent power tail shrinks it).
    * saturation of ``int eps Gamma (|x*|^2 - |x_eps|^2)``: last-decade share
      below 10%, with ``x_eps`` from :func:`reg_minimizer`.
    * sufficient range ``r > 2p / (2p + 1)`` when the error-bound exponent is declared.
    """
    if ts.damping is None:
        ts = TikhonovSchedule(ts.r, d, ts.s0)
    t0 = d.t0
    notes = []
    tt = np.geomspace(max(t0, 1e-3) if t0 > 0 else 1e-3, horizon, n_samples)
    tt[0] = max(t0, tt[0])
    eps = ts.epsilon(tt)
    t1 = bool(np.all(np.diff(eps) <= 1e-15) and eps[-1] < eps[0])

    def eg(t):
        return float(ts.epsilon(t) * d.big_gamma(t))

    lo, mid, hi = _decade_edges(t0, horizon)
    prev = _quad(eg, lo, mid, "eps*Gamma partial integral")[0]
    last = _quad(eg, mid, hi, "eps*Gamma partial integral")[0]
    t2_ratio = last / prev
    t2 = bool(t2_ratio >= 0.9)
    values = {"eps_horizon": float(eps[-1]), "t2_decade_ratio": float(t2_ratio)}

    t3 = None
    if problem is not None:
        try:
            xs = problem.min_norm_solution()
        except ConfigurationError:
            notes.append("no solution projector; saturation check skipped")
        else:
            nx = float(xs @ xs)
            grid = np.geomspace(lo, hi, n_samples)
            integrand = np.array([eg(t) * (nx - float(np.sum(reg_minimizer(problem, float(ts.epsilon(t))) ** 2)))
                                  for t in grid])
            # trapezoid in log t
            w = integrand * grid
            seg = 0.5 * (w[1:] + w[:-1]) * np.diff(np.log(grid))
            head = _quad(lambda t: eg(t) * (nx - float(np.sum(reg_minimizer(problem, float(ts.epsilon(t))) ** 2))),
                         t0, lo, "saturation head", epsrel=1e-6)[0] if lo > t0 else 0.0
            total = head + float(seg.sum())
            share = float(seg[grid[1:] > mid].sum()) / total if total > 0 else 0.0
            t3 = bool(share < 0.1)
            values["t3_last_decade_share"] = share

    p = problem.f.eb_exponent_p if problem is not None else None
    if p is None:
        r_ok, thr = None, None
        notes.append("error-bound exponent not declared; sufficient-range check skipped")
    else:
        thr = 2 * p / (2 * p + 1)
        r_ok = bool(ts.r > thr)
    return TikhonovConditionReport(t1, t2, t3, r_ok, thr, values, notes)


def R_function(d: DampingSchedule, ts: TikhonovSchedule, sigma: DiffusionSchedule, s1: float, s: float) -> float:
    """``R(s) = e^{-phi(s)} int_{s1}^s e^{phi(u)} sigma^2(t(u)) Gamma(t(u)) du`` with ``phi(u) = u^{1-r}/(1-r)``.

    ``t(u) = theta^{-1}(u)`` with ``theta(t0) = ts.s0``.  The weight is evaluated
    as ``exp(phi(u) - phi(s)) <= 1`` so large exponents never overflow.
    """
    r = ts.r
    if not 0 < r < 1:
        raise ConfigurationError(f"R needs 0 < r < 1, got {r}")
    s0 = ts.s0
    if not s1 > s0:
        raise ConfigurationError(f"need s1 > s0 = {s0}")
    if s < s1:
        raise ConfigurationError("need s >= s1")
    if s == s1 or sigma.is_zero:
        return 0.0
    phi_s = s ** (1 - r) / (1 - r)

    def integrand(u):
        t = float(d.theta_inv(u, s0))
        w = math.exp(u ** (1 - r) / (1 - r) - phi_s)
        return w * float(sigma.envelope(t)) ** 2 * float(d.big_gamma(t))

    # the weight decays on the scale s^r below s
    width = 50.0 * s ** r
    split = max(s1, s - width)
    val = _quad(integrand, split, s, "R integral", epsabs=0.0, epsrel=1e-8)[0]
    if split > s1:
        val += _quad(integrand, s1, split, "R integral", epsabs=0.0, epsrel=1e-8)[0]
    if not math.isfinite(val):
        raise NumericalError("R integral is not finite", {"s": s, "s1": s1})
    return val


# -- min-norm runs ------------------------------------------------------------------

@dataclass
class MinNormReport:
    t: np.ndarray
    sq_dist: np.ndarray
    sq_dist_control: np.ndarray
    gap: np.ndarray
    gap_control: np.ndarray
    x_star: np.ndarray
    initial_sq_dist: float
    degenerate: bool = False
    excluded: int = 0

    @property
    def final_ratio(self):
        """``E|X - x*|^2`` at the horizon relative to its initial value."""
        return float(self.sq_dist[-1] / self.initial_sq_dist) if self.initial_sq_dist > 0 else 0.0

    @property
    def control_factor(self):
        """Control-run final distance over Tikhonov-run final distance."""
        return float(math.sqrt(self.sq_dist_control[-1] / self.sq_dist[-1])) if self.sq_dist[-1] > 0 else math.inf

    @property
    def below_tenth_of_control(self):
        return self.control_factor >= 10.0

    def write_csv(self, filename):
        with open(filename, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t", "sq_dist", "gap", "sq_dist_control", "gap_control"])
            for row in zip(self.t, self.sq_dist, self.gap, self.sq_dist_control, self.gap_control):
                w.writerow([repr(float(v)) for v in row])


def _nontrivial_solution_set(problem, x_star, seed=0):
    proj = problem.solution_projector
    rng = np.random.default_rng(seed)
    pts = rng.standard_normal((4, problem.dim)) * 10.0
    return any(np.linalg.norm(proj(p) - x_star) > 1e-8 for p in pts)


def min_norm_convergence_run(problem: CompositeProblem, d: DampingSchedule, ts: TikhonovSchedule,
                             sigma: DiffusionSchedule, grid: TimeGrid, n_paths: int, seed: int,
                             x0, v0=0.0, stride: int = 100) -> MinNormReport:
    """Inertial runs with and without Tikhonov on shared noise; ``E|X - x*|^2`` curves."""
    x_star = problem.min_norm_solution()
    x0 = np.asarray(x0, dtype=float)
    init = float(np.sum((x0 - x_star) ** 2))
    if not _nontrivial_solution_set(problem, x_star):
        return MinNormReport(np.array([grid.t_start]), np.array([init]), np.array([init]), np.zeros(1),
                             np.zeros(1), x_star, init, degenerate=True)
    if ts.damping is None:
        ts = TikhonovSchedule(ts.r, d, ts.s0)
    path = None if sigma.is_zero else sample_brownian(problem.dim, grid, seed, n_paths)
    runs = []
    for tik in (ts, None):
        tr = simulate_inertial(problem, sigma, d, grid, path, x0=x0, v0=v0, tikhonov=tik, stride=stride,
                               n_paths=n_paths)
        keep = ~tr.aborted
        sq = np.sum((tr.X[:, keep] - x_star) ** 2, axis=-1).mean(axis=1)
        runs.append((tr, sq, tr.f_gap[:, keep].mean(axis=1), int(tr.aborted.sum())))
    (tr, sq, gap, ex), (_, sq_c, gap_c, ex_c) = runs
    return MinNormReport(tr.t, sq, sq_c, gap, gap_c, x_star, init, excluded=ex + ex_c)
