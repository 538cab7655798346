"""Monte Carlo gap curves, rate fits, per-path tail diagnostics and strong
consistency orders."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import ConfigurationError, DomainError, MonteCarloError, NumericalError
from .problems import CompositeProblem
from .schedules import DampingSchedule, DiffusionSchedule
from .sde import BrownianPath, TimeGrid, sample_brownian, simulate_inertial

__all__ = [
    "GapCurve",
    "RateFit",
    "ASReport",
    "GradientIntegralReport",
    "ConsistencyReport",
    "gap_curve",
    "mc_gap_curve",
    "fit_loglog_rate",
    "as_rate_diagnostic",
    "gradient_integral",
    "pl_floor",
    "linear_rate_fit",
    "consistency_orders",
]

MAX_EXCLUDED = 0.01
MIN_FIT_POINTS = 10


# -- gap curves ---------------------------------------------------------------------

@dataclass
class GapCurve:
    t: np.ndarray
    mean: np.ndarray
    stderr: np.ndarray
    n_paths: int
    excluded: int = 0

    @property
    def negative_flag(self) -> bool:
        """Mean below -3 standard errors somewhere."""
        return bool(np.any(self.mean < -3.0 * self.stderr))

    def write_csv(self, filename):
        with open(filename, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t", "mean", "stderr"])
            for row in zip(self.t, self.mean, self.stderr):
                w.writerow([repr(float(v)) for v in row])


def _curve_from_samples(t, samples, excluded=0):
    n = samples.shape[1]
    mean = samples.mean(axis=1)
    se = samples.std(axis=1, ddof=1) / math.sqrt(n) if n > 1 else np.zeros_like(mean)
    return GapCurve(np.asarray(t, dtype=float), mean, se, n, excluded)


def gap_curve(traj, max_excluded: float = MAX_EXCLUDED) -> GapCurve:
    """Mean gap and standard error over the non-aborted paths of a batch."""
    keep = ~traj.aborted
    excluded = int(traj.aborted.sum())
    if excluded > max_excluded * traj.n_paths:
        raise MonteCarloError(f"{excluded} of {traj.n_paths} paths aborted (limit {max_excluded:.0%})")
    return _curve_from_samples(traj.t, traj.f_gap[:, keep], excluded)


def mc_gap_curve(run_config, n_paths: int, seed: int, first_path: int = 0) -> GapCurve:
    """Gap curve of the system described by a :class:`~inertial_sde.config.RunConfig`.

    Paths ``first_path .. first_path + n_paths - 1`` of ``seed`` are used, so
    disjoint batches give independent estimates.
    """
    from .config import simulate_from_config

    if n_paths < 2:
        raise ConfigurationError("a Monte Carlo gap curve needs at least 2 paths")
    traj = simulate_from_config(run_config, n_paths=n_paths, seed=seed, first_path=first_path)
    return gap_curve(traj)


# -- power-law fits ------------------------------------------------------------------

@dataclass
class RateFit:
    t_lo: float
    t_hi: float
    slope: float
    intercept: float
    r2: float
    target: Optional[float]
    tolerance: Optional[float]
    verdict: Optional[bool]
    n_points: int
    kind: str = "loglog"
    notes: list = field(default_factory=list)

    def summary(self) -> dict:
        return {"slope": self.slope, "target": self.target, "tolerance": self.tolerance,
                "verdict": self.verdict, "window": (self.t_lo, self.t_hi), "r2": self.r2}


def _as_arrays(curve):
    if isinstance(curve, GapCurve):
        return np.asarray(curve.t, dtype=float), np.asarray(curve.mean, dtype=float)
    t, y = curve
    return np.asarray(t, dtype=float), np.asarray(y, dtype=float)


def _linfit(x, y):
    slope, intercept = np.polyfit(x, y, 1)
    resid = y - (slope * x + intercept)
    ss = np.sum((y - y.mean()) ** 2)
    r2 = 1.0 - np.sum(resid**2) / ss if ss > 0 else 1.0
    return float(slope), float(intercept), float(r2)


def fit_loglog_rate(curve, window_fraction: float = 0.4, target: Optional[float] = None,
                    tolerance: Optional[float] = None) -> RateFit:
    """Least-squares slope of ``log gap`` against ``log t`` on the tail window.

    The window is the last ``window_fraction`` of the log-time range.  If it
    holds nonpositive values the window is cut just before the first of them
    and the cut is noted.  ``curve`` is a :class:`GapCurve` or a ``(t, values)`` pair.
    """
    if not 0 < window_fraction < 1:
        raise ConfigurationError("window_fraction must lie in (0, 1)")
    t, y = _as_arrays(curve)
    pos_t = t > 0
    t, y = t[pos_t], y[pos_t]
    if len(t) == 0:
        raise DomainError("no positive times to fit")
    lt = np.log(t)
    lo = lt[-1] - window_fraction * (lt[-1] - lt[0])
    m = lt >= lo
    tw, yw = t[m], y[m]
    notes = []
    bad = np.flatnonzero(~(yw > 0))
    if bad.size:
        tw, yw = tw[: bad[0]], yw[: bad[0]]
        notes.append(f"window shrunk to t <= {tw[-1] if len(tw) else float('nan'):g} (nonpositive values)")
    if len(tw) < MIN_FIT_POINTS:
        raise DomainError(f"fit window has {len(tw)} points, need {MIN_FIT_POINTS}")
    slope, intercept, r2 = _linfit(np.log(tw), np.log(yw))
    verdict = None
    if target is not None and tolerance is not None:
        verdict = bool(abs(slope - target) <= tolerance)
    return RateFit(float(tw[0]), float(tw[-1]), slope, intercept, r2, target, tolerance, verdict, len(tw),
                   notes=notes)


# -- almost-sure surrogates ------------------------------------------------------------

@dataclass
class ASReport:
    ratios: np.ndarray
    median: float
    n_paths: int
    meets_path_minimum: bool

    @property
    def verdict(self) -> bool:
        return self.median < 1.0


def as_rate_diagnostic(t, gaps, weight: Callable[[np.ndarray], np.ndarray] = lambda t: t**2,
                       min_paths: int = 16) -> ASReport:
    """Per path: max of ``w(t) gap(t)`` over the last decade divided by its max over the first.

    ``gaps`` has shape ``(n_nodes, n_paths)``; a trajectory object may be passed
    as ``t`` with ``gaps=None``.  A path whose weighted gap is zero on both
    decades gets ratio 0.  This is a finite-horizon engineering surrogate for
    an almost-sure little-o statement.
    """
    if gaps is None:
        traj = t
        keep = ~traj.aborted
        t, gaps = traj.t, traj.f_gap[:, keep]
    t = np.asarray(t, dtype=float)
    gaps = np.asarray(gaps, dtype=float)
    if gaps.ndim == 1:
        gaps = gaps[:, None]
    start = t[0] if t[0] > 0 else t[1]
    first = (t >= start) & (t <= 10 * start)
    last = t >= t[-1] / 10
    wg = weight(t)[:, None] * np.maximum(gaps, 0.0)
    hi = wg[last].max(axis=0)
    lo = wg[first].max(axis=0)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratios = np.where(lo > 0, hi / lo, np.where(hi > 0, np.inf, 0.0))
    n = gaps.shape[1]
    return ASReport(ratios, float(np.median(ratios)), n, n >= min_paths)


@dataclass
class GradientIntegralReport:
    t: np.ndarray
    running: np.ndarray
    shares: np.ndarray
    median_share: float
    mean_curve_share: float

    def verdict(self, limit: float = 0.2) -> bool:
        return self.median_share < limit


def gradient_integral(traj, weight: Callable[[np.ndarray], np.ndarray]) -> GradientIntegralReport:
    """Running integral of ``w(t) |grad|^2`` along each path and its last-decade share.

    The gradient norm is the one recorded in the trajectory (the look-ahead
    point for inertial runs).  The integral is a trapezoid sum over the
    recorded nodes.
    """
    keep = ~traj.aborted
    t = np.asarray(traj.t, dtype=float)
    g2 = weight(t)[:, None] * traj.grad_norm[:, keep] ** 2
    inc = 0.5 * (g2[1:] + g2[:-1]) * np.diff(t)[:, None]
    running = np.vstack([np.zeros((1, inc.shape[1])), np.cumsum(inc, axis=0)])
    total = running[-1]
    cut = np.searchsorted(t, t[-1] / 10)
    before = running[cut]
    with np.errstate(divide="ignore", invalid="ignore"):
        shares = np.where(total > 0, (total - before) / total, 0.0)
    mean_run = running.mean(axis=1)
    mshare = float((mean_run[-1] - mean_run[cut]) / mean_run[-1]) if mean_run[-1] > 0 else 0.0
    return GradientIntegralReport(t, running, shares, float(np.median(shares)), mshare)


# -- linear rates ------------------------------------------------------------------

def pl_floor(L: float, mu: float, sigma: DiffusionSchedule, t, t0: float = 0.0):
    """Noise floor ``L/(2 mu) * sigma_inf^2((t - t0) / (4 mu))`` of the strongly convex bound."""
    t = np.asarray(t, dtype=float)
    return L / (2 * mu) * sigma.envelope((t - t0) / (4 * mu)) ** 2


def linear_rate_fit(curve, mu: float, floor=None, floor_factor: float = 10.0, t_min: Optional[float] = None) -> RateFit:
    """Slope of ``log gap`` against ``t`` before the noise floor.

    The window runs from ``t_min`` (default: first node) up to the first node
    where the gap drops to ``floor_factor`` times the floor.  Target slope is
    ``-mu/2``; the verdict is ``slope <= -0.8 mu/2``.  With fewer than ten
    pre-floor points the fit is reported as floor-limited with no verdict.
    ``floor`` is an array over the curve's nodes, a callable, or None.
    """
    t, y = _as_arrays(curve)
    if floor is None:
        fl = np.zeros_like(t)
    elif callable(floor):
        fl = np.asarray(floor(t), dtype=float)
    else:
        fl = np.asarray(floor, dtype=float)
    start = 0 if t_min is None else int(np.searchsorted(t, t_min))
    above = (y > floor_factor * fl) & (y > 0)
    above[:start] = True
    below = np.flatnonzero(~above)
    end = below[0] if below.size else len(t)
    tw, yw = t[start:end], y[start:end]
    target = -mu / 2
    post = slice(end, None)
    notes = []
    if end < len(t) and np.any(fl[post] > 0):
        ratio = y[post][fl[post] > 0] / fl[post][fl[post] > 0]
        notes.append(f"post-floor gap/floor in [{ratio.min():.3g}, {ratio.max():.3g}]")
    if len(tw) < MIN_FIT_POINTS:
        return RateFit(float(t[start]), float(t[min(end, len(t) - 1)]), math.nan, math.nan, math.nan,
                       target, 0.2 * mu / 2, None, len(tw), kind="floor-limited", notes=notes)
    slope, intercept, r2 = _linfit(tw, np.log(yw))
    return RateFit(float(tw[0]), float(tw[-1]), slope, intercept, r2, target, 0.2 * mu / 2,
                   bool(slope <= 0.8 * target), len(tw), kind="loglinear", notes=notes)


# -- strong consistency ------------------------------------------------------------------

@dataclass
class ConsistencyReport:
    h: np.ndarray
    err_sde: np.ndarray
    err_ode: np.ndarray
    order_sde: float
    order_ode: float
    n_paths: int
    h_ref: float

    @property
    def monotone(self) -> bool:
        """Each halving of h does not raise the strong error by more than 5%."""
        ok = True
        for e in (self.err_sde, self.err_ode):
            ok &= bool(np.all(e[1:] <= 1.05 * e[:-1]))
        return ok

    def write_csv(self, filename):
        with open(filename, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["h", "err_sde", "err_ode"])
            for row in zip(self.h, self.err_sde, self.err_ode):
                w.writerow([repr(float(v)) for v in row])


def _loglog_order(h, err):
    err = np.asarray(err, dtype=float)
    if np.all(err == 0):
        return math.inf
    if np.any(~(err > 0)):
        return math.nan
    return float(np.polyfit(np.log(h), np.log(err), 1)[0])


def _sup_error(run, ref, stride):
    dx = np.linalg.norm(run.X - ref.X[::stride], axis=-1)
    dv = np.linalg.norm(run.V - ref.V[::stride], axis=-1)
    return float(np.mean(np.max(dx + dv, axis=0)))


def consistency_orders(problem: CompositeProblem, d: DampingSchedule, sigma: DiffusionSchedule, T: float,
                       h_list: Sequence[float], n_paths: int, seed: int, x0=1.0, v0=0.0,
                       ref_factor: int = 64) -> ConsistencyReport:
    """Strong error orders of the inertial scheme against SDE and ODE references.

    The scheme is run in product form: at step ``h`` the diffusion is
    ``sqrt(h) sigma``, so the noise per step is ``sqrt(h) sigma dW``.  For each
    ``h`` the SDE reference is the same product-form equation (diffusion
    ``sqrt(h) sigma``) solved at ``h_list[0] / ref_factor`` on the fine path
    whose block sums drive the coarse run; the ODE reference is the ``sigma = 0``
    run at the fine step.  Errors are ``E sup_k |X_k - X_ref(t_k)| + |V_k - V_ref(t_k)|``.
    """
    h_list = np.asarray(h_list, dtype=float)
    t0 = d.t0
    h_ref = h_list[0] / ref_factor
    fine_grid = TimeGrid(t0, T, h_ref)
    factors = [int(round(h / h_ref)) for h in h_list]
    for h, f in zip(h_list, factors):
        if not math.isclose(f * h_ref, h, rel_tol=1e-9) or fine_grid.n_steps % f:
            raise ConfigurationError(f"step {h} is not a divisor-compatible multiple of the reference step {h_ref}")
    fine = sample_brownian(problem.dim, fine_grid, seed, n_paths)
    ode = simulate_inertial(problem, DiffusionSchedule.zero(), d, fine_grid, None, x0=x0, v0=v0, n_paths=1)
    if ode.aborted.any():
        raise NumericalError("ODE reference is not finite")
    err_sde, err_ode = [], []
    for h, f in zip(h_list, factors):
        grid = TimeGrid(t0, T, h)
        scale = math.sqrt(h)
        ref = simulate_inertial(problem, sigma, d, fine_grid, fine, x0=x0, v0=v0, noise_scale=scale)
        if ref.aborted.any():
            raise NumericalError("SDE reference is not finite", {"h": h})
        run = simulate_inertial(problem, sigma, d, grid, fine.coarsen(f), x0=x0, v0=v0, noise_scale=scale)
        err_sde.append(_sup_error(run, ref, f))
        err_ode.append(_sup_error(run, ode, f))
    err_sde, err_ode = np.asarray(err_sde), np.asarray(err_ode)
    return ConsistencyReport(h_list, err_sde, err_ode, _loglog_order(h_list, err_sde),
                             _loglog_order(h_list, err_ode), n_paths, h_ref)
