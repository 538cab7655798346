"""Time scaling and averaging: second-order trajectories from first-order ones.

A first-order process ``Z(s)`` is moved to the clock ``t`` through
``Y(t) = Z(theta(t))`` and then averaged,

    X(t) = int_{t0}^t Y dmu_t + xi(t),    mu_t = e^{-A(t)} delta_{t0} + a(u) e^{A(u) - A(t)} du,

with ``a = 1/Gamma``.  The recursive form ``dX = a (Y - X) dt`` is used for
the construction; the quadrature form is kept as an oracle.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy import integrate

from .errors import ConfigurationError, DomainError
from .problems import CompositeProblem
from .schedules import DampingSchedule, DiffusionSchedule, I_transform
from .sde import (BrownianPath, TimeGrid, TrajectoryFirstOrder, TrajectorySecondOrder, sample_brownian,
                  simulate_inertial, simulate_scaled_first_order)

__all__ = [
    "AveragingState",
    "TransformReport",
    "time_rescale",
    "average_trajectory",
    "quadrature_average",
    "mu_mass",
    "transform_equivalence_check",
]


@dataclass
class AveragingState:
    """Averaging bookkeeping at one node: position, correction and ``A(t)``."""

    t: float
    X: np.ndarray
    xi: np.ndarray
    A: float


def _diagnostics(problem, states):
    if problem is None:
        shape = states.shape[:2]
        return np.full(shape, np.nan), np.full(shape, np.nan)
    gap = problem.gap(states)
    gn = np.linalg.norm(problem.drift(states), axis=-1)
    return gap, gn


def time_rescale(z: TrajectoryFirstOrder, d: DampingSchedule, s0: float, grid_t: TimeGrid,
                 problem: Optional[CompositeProblem] = None) -> TrajectoryFirstOrder:
    """``Y(t_k) = Z(theta(t_k))`` by piecewise-linear interpolation on the recorded ``s`` nodes.

    ``z.t`` holds the ``s`` nodes.  Diagnostics are recomputed when ``problem``
    is given and left as NaN otherwise.
    """
    s_nodes = np.asarray(z.t, dtype=float)
    s = d.tabulate(grid_t.nodes, s0)["theta"]
    span = max(abs(s_nodes[-1]), 1.0) * 1e-12
    if s[0] < s_nodes[0] - span or s[-1] > s_nodes[-1] + span:
        raise DomainError(f"theta(t) covers [{s[0]:g}, {s[-1]:g}], first-order run covers "
                          f"[{s_nodes[0]:g}, {s_nodes[-1]:g}]")
    s = np.clip(s, s_nodes[0], s_nodes[-1])
    j = np.clip(np.searchsorted(s_nodes, s, side="right") - 1, 0, len(s_nodes) - 2)
    w = (s - s_nodes[j]) / (s_nodes[j + 1] - s_nodes[j])
    w = w[:, None, None]
    Y = (1.0 - w) * z.Z[j] + w * z.Z[j + 1]
    gap, gn = _diagnostics(problem, Y)
    P = Y.shape[1]
    return TrajectoryFirstOrder(grid=grid_t, t=grid_t.nodes, f_gap=gap, grad_norm=gn,
                                aborted=z.aborted.copy(),
                                last_valid=np.full(P, grid_t.n_steps, dtype=int),
                                meta={"scheme": "time_rescaled", "s0": s0}, Z=Y)


def _check_gamma(G):
    if np.any(~(G > 0)):
        raise ConfigurationError("Gamma(t_k) must be positive for averaging")


def average_trajectory(y: TrajectoryFirstOrder, d: DampingSchedule, V0,
                       problem: Optional[CompositeProblem] = None) -> TrajectorySecondOrder:
    """Average ``Y`` into positions ``X`` and recover ``V = (Y - X) / Gamma``.

    ``X_{k+1} = X_k + h a(t_k) (Y_k - X_k)`` from ``X_0 = Y_0 - Gamma(t_0) V0``.
    The correction ``xi(t) = -e^{-A(t)} Gamma(t_0) V0`` and the final
    :class:`AveragingState` are stored in ``meta``.  ``y`` must be recorded at
    every grid node.
    """
    grid = y.grid
    t = np.asarray(y.t, dtype=float)
    if len(t) != grid.n_nodes:
        raise ConfigurationError("averaging needs the first-order trajectory at every grid node (stride 1)")
    tab = d.tabulate(t)
    G = tab["Gamma"]
    _check_gamma(G)
    a = 1.0 / G
    h = grid.h
    Y = y.Z
    V0 = np.broadcast_to(np.asarray(V0, dtype=float), Y.shape[1:])
    X = np.empty_like(Y)
    X[0] = Y[0] - G[0] * V0
    for k in range(len(t) - 1):
        X[k + 1] = X[k] + (h * a[k]) * (Y[k] - X[k])
    V = (Y - X) / G[:, None, None]
    xi = -(d.exp_neg_A(t) * G[0])[:, None, None] * V0
    gap, gn = _diagnostics(problem, X)
    if problem is not None:
        gn = np.linalg.norm(problem.drift(Y), axis=-1)
    state = AveragingState(t=float(t[-1]), X=X[-1].copy(), xi=xi[-1].copy(), A=float(tab["A"][-1]))
    return TrajectorySecondOrder(grid=grid, t=t, f_gap=gap, grad_norm=gn, aborted=y.aborted.copy(),
                                 last_valid=y.last_valid.copy(),
                                 meta={"scheme": "averaged", "xi": xi, "state": state},
                                 X=X, V=V, beta=G)


def quadrature_average(y: TrajectoryFirstOrder, d: DampingSchedule, V0) -> np.ndarray:
    """Oracle: ``X(t_k) = e^{-A(t_k)} Y(t_0) + int a(u) e^{A(u)-A(t_k)} Y(u) du + xi(t_k)``.

    The integral uses the trapezoid rule on the recorded nodes, so the cost
    is quadratic in the number of nodes.
    """
    t = np.asarray(y.t, dtype=float)
    tab = d.tabulate(t)
    G, A = tab["Gamma"], tab["A"]
    Y = y.Z
    V0 = np.broadcast_to(np.asarray(V0, dtype=float), Y.shape[1:])
    X = np.empty_like(Y)
    for k in range(len(t)):
        w = np.exp(A[: k + 1] - A[k]) / G[: k + 1]
        cont = integrate.trapezoid(w[:, None, None] * Y[: k + 1], t[: k + 1], axis=0) if k else 0.0
        X[k] = math.exp(-A[k]) * Y[0] + cont - math.exp(-A[k]) * G[0] * V0
    return X


def mu_mass(d: DampingSchedule, t: float) -> float:
    """Total mass of ``mu_t``: the atom ``e^{-A(t)}`` plus the density integral."""
    return float(d.exp_neg_A(t)) + I_transform(d, lambda u: 1.0, t)


# -- equivalence check ---------------------------------------------------------------

@dataclass
class TransformReport:
    h: np.ndarray
    discrepancy: np.ndarray
    order: float
    exact: bool
    n_paths: int
    meta: dict = field(default_factory=dict)

    def write_csv(self, filename):
        with open(filename, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["h", "sup_discrepancy"])
            for h, e in zip(self.h, self.discrepancy):
                w.writerow([repr(float(h)), repr(float(e))])


def _fit_order(h, err):
    h = np.asarray(h, dtype=float)
    err = np.asarray(err, dtype=float)
    if np.all(err == 0.0):
        return math.inf
    if np.any(~(err > 0)):
        return math.nan
    return float(np.polyfit(np.log(h), np.log(err), 1)[0])


def transform_equivalence_check(problem: CompositeProblem, sigma: DiffusionSchedule, d: DampingSchedule,
                                s0: float, h: float, seed: int, x0=1.0, v0=0.0, t_end: float = 10.0,
                                n_halvings: int = 4, n_paths: int = 1) -> TransformReport:
    """Compare the direct inertial scheme with scaled first-order plus averaging.

    Both runs share one Brownian path per step size: increments are sampled at
    the finest step and summed for coarser ones.  The scaled run sees the
    time-changed increments ``sqrt(Gamma(t_k)) dW_k`` through the diffusion
    ``sigma1(theta(t)) = sqrt(Gamma(t)) sigma(t)``, which makes its noise
    ``Gamma sigma dW``, the noise of ``Y = X + Gamma V`` in the inertial run.
    ``discrepancy[i]`` is the path mean of ``sup_k |X_a(t_k) - X_b(t_k)|``.
    """
    t0 = d.t0
    hs = h / 2.0 ** np.arange(n_halvings + 1)
    finest = TimeGrid(t0, t_end, hs[-1])
    fine = sample_brownian(problem.dim, finest, seed, n_paths)
    sigma1 = sigma.to_s_time(d, s0)
    x0 = np.asarray(x0, dtype=float)
    y0 = x0 + d.big_gamma(t0) * np.asarray(v0, dtype=float)
    disc = []
    for i, hi in enumerate(hs):
        grid = TimeGrid(t0, t_end, hi)
        factor = 2 ** (n_halvings - i)
        n_fine = grid.n_steps * factor
        path = fine if factor == 1 else _truncated(fine, n_fine).coarsen(factor)
        direct = simulate_inertial(problem, sigma, d, grid, path, x0=x0, v0=v0)
        scaled = simulate_scaled_first_order(problem, sigma1, d, grid, path, x0=y0, s0=s0)
        avg = average_trajectory(scaled, d, v0)
        diff = np.linalg.norm(direct.X - avg.X, axis=-1)
        disc.append(float(np.mean(np.max(diff, axis=0))))
    disc = np.asarray(disc)
    return TransformReport(h=hs, discrepancy=disc, order=_fit_order(hs, disc), exact=bool(np.all(disc == 0.0)),
                           n_paths=n_paths, meta={"t_end": t_end, "seed": seed, "sigma": sigma.describe()})


def _truncated(path, n):
    if path.increments.shape[0] == n:
        return path
    grid = TimeGrid(path.grid.t_start, path.grid.t_start + n * path.grid.h, path.grid.h)
    return BrownianPath(grid, path.increments[:n], path.seed, path.dim)
