"""Brownian paths and Euler-Maruyama integrators.

All integrators are batched: states have shape ``(n_paths, dim)`` and the
recorded trajectories ``(n_nodes, n_paths, dim)``.  Path ``i`` of a batch is
driven by the child seed ``SeedSequence(seed, spawn_key=(i,))``, so a path's
noise does not depend on how many other paths are simulated with it.
"""

from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Optional, Union

import numpy as np

from .errors import ConfigurationError, DampingOvershootWarning
from .problems import CompositeProblem
from .schedules import DampingSchedule, DiffusionSchedule, TikhonovSchedule

__all__ = [
    "TimeGrid",
    "BrownianPath",
    "TrajectoryFirstOrder",
    "TrajectorySecondOrder",
    "sample_brownian",
    "simulate_first_order",
    "simulate_scaled_first_order",
    "simulate_inertial",
    "write_trajectory_csv",
    "write_aggregate_csv",
]


@dataclass(frozen=True)
class TimeGrid:
    """Uniform grid ``t_k = t_start + k h`` for ``k = 0..n_steps``."""

    t_start: float
    t_end: float
    h: float

    def __post_init__(self):
        if not self.h > 0:
            raise ConfigurationError(f"step size must be positive, got {self.h}")
        if self.t_end < self.t_start:
            raise ConfigurationError("t_end must be >= t_start")

    @property
    def n_steps(self) -> int:
        return int(math.floor((self.t_end - self.t_start) / self.h + 1e-9))

    @property
    def n_nodes(self) -> int:
        return self.n_steps + 1

    @property
    def nodes(self) -> np.ndarray:
        return self.t_start + self.h * np.arange(self.n_nodes)

    def refined(self, factor: int) -> "TimeGrid":
        return TimeGrid(self.t_start, self.t_end, self.h / factor)

    def coarsened(self, factor: int) -> "TimeGrid":
        return TimeGrid(self.t_start, self.t_end, self.h * factor)


@dataclass
class BrownianPath:
    """Increments ``dW_k = W(t_{k+1}) - W(t_k)`` of shape ``(n_steps, n_paths, dim)``."""

    grid: TimeGrid
    increments: np.ndarray
    seed: Optional[int]
    dim: int

    @property
    def n_paths(self) -> int:
        return self.increments.shape[1]

    @property
    def G(self) -> np.ndarray:
        """Standardized increments ``dW_k / sqrt(h)``."""
        return self.increments / math.sqrt(self.grid.h)

    def values(self) -> np.ndarray:
        """Path values ``W(t_k)`` with ``W(t_0) = 0``."""
        w = np.zeros((self.grid.n_nodes,) + self.increments.shape[1:])
        np.cumsum(self.increments, axis=0, out=w[1:])
        return w

    def coarsen(self, factor: int) -> "BrownianPath":
        """Sum blocks of ``factor`` consecutive increments."""
        factor = int(factor)
        n = self.increments.shape[0]
        if factor < 1 or n % factor:
            raise ConfigurationError(f"cannot coarsen {n} steps by factor {factor}")
        inc = self.increments.reshape((n // factor, factor) + self.increments.shape[1:]).sum(axis=1)
        return BrownianPath(self.grid.coarsened(factor), inc, self.seed, self.dim)

    def refine(self, factor: int, seed: int) -> "BrownianPath":
        """Brownian-bridge refinement consistent with the current increments.

        Each coarse increment is split into ``factor`` Gaussian pieces
        conditioned on their sum, so that ``refine(m).coarsen(m)`` reproduces
        this path up to rounding.
        """
        factor = int(factor)
        n, P, d = self.increments.shape
        hf = self.grid.h / factor
        xi = np.empty((n, factor, P, d))
        for i in range(P):
            rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(i, factor)))
            xi[:, :, i, :] = rng.standard_normal((n, factor, d)) * math.sqrt(hf)
        xi -= (xi.sum(axis=1, keepdims=True) - self.increments[:, None]) / factor
        return BrownianPath(self.grid.refined(factor), xi.reshape(n * factor, P, d), self.seed, d)

    def time_changed(self, scale) -> np.ndarray:
        """Increments ``sqrt(scale_k) dW_k`` of a time-changed Brownian motion.

        With ``scale = Gamma(t_k)`` this is the left-endpoint discretization of
        ``B(theta(t))`` in terms of ``W(t)``.
        """
        scale = np.asarray(scale, dtype=float)[: self.increments.shape[0]]
        return np.sqrt(scale)[:, None, None] * self.increments


def sample_brownian(dim: int, grid: TimeGrid, seed: int, n_paths: int = 1, first_path: int = 0) -> BrownianPath:
    """Seeded Brownian increments on ``grid`` for paths ``first_path .. first_path + n_paths - 1``."""
    if not grid.h > 0:
        raise ConfigurationError("step size must be positive")
    n = grid.n_steps
    inc = np.empty((n, n_paths, dim))
    sq = math.sqrt(grid.h)
    for j in range(n_paths):
        rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(first_path + j,)))
        inc[:, j, :] = rng.standard_normal((n, dim)) * sq
    return BrownianPath(grid, inc, seed, dim)


# -- trajectories ----------------------------------------------------------------

@dataclass
class _TrajectoryBase:
    grid: TimeGrid
    t: np.ndarray
    f_gap: np.ndarray
    grad_norm: np.ndarray
    aborted: np.ndarray
    last_valid: np.ndarray
    meta: dict = field(default_factory=dict)

    @property
    def n_paths(self):
        return self.f_gap.shape[1]

    @property
    def excluded_fraction(self) -> float:
        return float(np.mean(self.aborted))


@dataclass
class TrajectoryFirstOrder(_TrajectoryBase):
    Z: np.ndarray = None

    @property
    def states(self):
        return self.Z


@dataclass
class TrajectorySecondOrder(_TrajectoryBase):
    X: np.ndarray = None
    V: np.ndarray = None
    beta: np.ndarray = None

    @property
    def states(self):
        return self.X


def _initial_batch(x0, dim, n_paths):
    x0 = np.asarray(x0, dtype=float)
    if x0.ndim == 0:
        x0 = np.full(dim, float(x0))
    if x0.shape[-1] != dim:
        raise ConfigurationError(f"initial state has dimension {x0.shape[-1]}, problem has {dim}")
    return np.array(np.broadcast_to(x0, (n_paths, dim)), dtype=float)


def _noise(path: Optional[BrownianPath], grid: TimeGrid, dim: int, n_paths: Optional[int]):
    if path is None:
        return None, (n_paths or 1)
    if path.increments.shape[0] != grid.n_steps or not math.isclose(path.grid.h, grid.h, rel_tol=1e-12):
        raise ConfigurationError(
            f"Brownian path has {path.increments.shape[0]} steps of size {path.grid.h}, "
            f"grid has {grid.n_steps} of size {grid.h}")
    if path.dim != dim:
        raise ConfigurationError(f"Brownian path dimension {path.dim} != problem dimension {dim}")
    return path.increments, path.n_paths


class _Recorder:
    """Stores every ``stride``-th node and tracks aborted paths."""

    def __init__(self, n_steps, stride, n_paths, names_shapes):
        self.stride = max(int(stride), 1)
        idx = np.arange(0, n_steps + 1, self.stride)
        if idx[-1] != n_steps:
            idx = np.append(idx, n_steps)
        self.idx = idx
        self.pos = {int(k): i for i, k in enumerate(idx)}
        self.data = {name: np.empty((len(idx),) + shape) for name, shape in names_shapes.items()}
        self.aborted = np.zeros(n_paths, dtype=bool)
        self.last_valid = np.full(n_paths, n_steps, dtype=int)

    def wants(self, k):
        return k in self.pos

    def put(self, k, **values):
        i = self.pos[k]
        for name, v in values.items():
            self.data[name][i] = v

    def check(self, k, *states):
        ok = np.ones(self.aborted.shape, dtype=bool)
        for s in states:
            ok &= np.isfinite(s).all(axis=-1)
        new = ~ok & ~self.aborted
        if new.any():
            self.aborted |= new
            self.last_valid[new] = k - 1
            for s in states:
                s[new] = np.nan


def _finish(cls, grid, rec, meta, **extra):
    t = grid.nodes[rec.idx]
    data = rec.data
    return cls(grid=grid, t=t, f_gap=data["gap"], grad_norm=data["gn"], aborted=rec.aborted,
               last_valid=rec.last_valid, meta=meta, **extra)


def simulate_first_order(problem: CompositeProblem, sigma: DiffusionSchedule, grid: TimeGrid,
                         path: Optional[BrownianPath] = None, x0=0.0,
                         tikhonov: Optional[TikhonovSchedule] = None, stride: int = 1,
                         n_paths: Optional[int] = None) -> TrajectoryFirstOrder:
    """Euler-Maruyama for ``dZ = -(grad f + grad g_lam + eps Z) dt + sigma(t, Z) dW``.

    ``path=None`` runs without noise.  Paths whose state becomes non-finite are
    frozen at NaN, flagged in ``aborted`` and their last finite node is stored in
    ``last_valid``.
    """
    t = grid.nodes
    return _first_order_loop(problem, grid, path, x0, sigma.envelope(t), sigma.state_factor,
                             np.ones_like(t), tikhonov.epsilon(t) if tikhonov is not None else None,
                             stride, n_paths, sigma.is_zero, {"scheme": "first_order", "sigma": sigma.describe()})


def simulate_scaled_first_order(problem: CompositeProblem, sigma1: DiffusionSchedule, d: DampingSchedule,
                                grid: TimeGrid, path: Optional[BrownianPath] = None, x0=0.0, s0: float = 0.0,
                                tikhonov: Optional[TikhonovSchedule] = None, stride: int = 1,
                                n_paths: Optional[int] = None) -> TrajectoryFirstOrder:
    """First-order system after the time change ``s = theta(t)``, integrated in ``t``.

    ``Y_{k+1} = Y_k - h Gamma_k drift(Y_k) + sqrt(Gamma_k) sigma1(theta(t_k), Y_k) dW_k``
    where ``sigma1`` is a diffusion schedule in ``s``-time.
    """
    t = grid.nodes
    tab = d.tabulate(t, s0)
    G = tab["Gamma"]
    env = np.sqrt(G) * sigma1.envelope(tab["theta"])
    eps = tikhonov.epsilon(t) if tikhonov is not None else None
    meta = {"scheme": "scaled_first_order", "damping": repr(d), "s0": s0}
    return _first_order_loop(problem, grid, path, x0, env, sigma1.state_factor, G, eps,
                             stride, n_paths, sigma1.is_zero, meta)


def _check_envelope(env):
    bad = ~np.isfinite(env)
    if bad.any():
        raise ConfigurationError(f"diffusion envelope is not finite at grid node {int(np.argmax(bad))}")


def _first_order_loop(problem, grid, path, x0, env, factor, speed, eps, stride, n_paths, zero_noise, meta):
    _check_envelope(env)
    dW, P = _noise(path, grid, problem.dim, n_paths)
    h = grid.h
    n = grid.n_steps
    Z = _initial_batch(x0, problem.dim, P)
    rec = _Recorder(n, stride, P, {"Z": (P, problem.dim), "gap": (P,), "gn": (P,)})
    use_noise = dW is not None and not zero_noise
    with np.errstate(over="ignore", invalid="ignore"):
        for k in range(n + 1):
            drift = problem.drift(Z)
            if rec.wants(k):
                rec.put(k, Z=Z, gap=problem.gap(Z), gn=np.linalg.norm(drift, axis=-1))
            if k == n:
                break
            if eps is not None:
                drift = drift + eps[k] * Z
            step = -(h * speed[k]) * drift
            if use_noise:
                step += (env[k] * factor(Z))[:, None] * dW[k]
            Z = Z + step
            rec.check(k + 1, Z)
    return _finish(TrajectoryFirstOrder, grid, rec, meta, Z=rec.data["Z"])


BetaSpec = Union[str, float, Callable[[np.ndarray], np.ndarray]]


def _beta_nodes(beta: BetaSpec, d: DampingSchedule, t: np.ndarray, big_gamma: np.ndarray) -> np.ndarray:
    if isinstance(beta, str):
        if beta != "gamma_linked":
            raise ConfigurationError(f"unknown beta mode {beta!r}")
        return big_gamma
    if callable(beta):
        return np.asarray(np.vectorize(beta, otypes=[float])(t), dtype=float)
    return np.full_like(t, float(beta))


def simulate_inertial(problem: CompositeProblem, sigma: DiffusionSchedule, d: DampingSchedule, grid: TimeGrid,
                      path: Optional[BrownianPath] = None, x0=0.0, v0=0.0, beta: BetaSpec = "gamma_linked",
                      tikhonov: Optional[TikhonovSchedule] = None, stride: int = 1,
                      n_paths: Optional[int] = None, noise_scale: float = 1.0) -> TrajectorySecondOrder:
    """Semi-implicit Euler-Maruyama for the inertial system with Hessian-driven damping.

    With the look-ahead point ``Y_k = X_k + beta_k V_k``::

        X_{k+1} = X_k + h V_k
        V_{k+1} = (1 - gamma_k h) V_k - h [drift(Y_k) + eps_k Y_k] + noise_scale sigma(t_k, Y_k) dW_k

    ``beta="gamma_linked"`` uses ``beta = Gamma``.  ``noise_scale`` multiplies
    the diffusion; the product-form model used for consistency studies passes
    ``sqrt(h)``.  ``grad_norm`` records the drift norm at the look-ahead point.
    """
    dW, P = _noise(path, grid, problem.dim, n_paths)
    h = grid.h
    n = grid.n_steps
    t = grid.nodes
    if t[0] < d.t0:
        raise ConfigurationError(f"grid starts at {t[0]} before the damping origin t0={d.t0}")
    tab = d.tabulate(t)
    gam = tab["gamma"]
    bet = _beta_nodes(beta, d, t, tab["Gamma"])
    if np.max(gam[:-1] * h) >= 1.0:
        warnings.warn(f"gamma(t_k) h reaches {np.max(gam * h):.3g} >= 1; velocity damping overshoots",
                      DampingOvershootWarning, stacklevel=2)
    env = noise_scale * sigma.envelope(t)
    _check_envelope(env)
    eps = tikhonov.epsilon(t) if tikhonov is not None else None
    X = _initial_batch(x0, problem.dim, P)
    V = _initial_batch(v0, problem.dim, P)
    shapes = {"X": (P, problem.dim), "V": (P, problem.dim), "gap": (P,), "gn": (P,)}
    rec = _Recorder(n, stride, P, shapes)
    use_noise = dW is not None and not sigma.is_zero and noise_scale != 0.0
    with np.errstate(over="ignore", invalid="ignore"):
        for k in range(n + 1):
            Y = X + bet[k] * V
            drift = problem.drift(Y)
            if rec.wants(k):
                rec.put(k, X=X, V=V, gap=problem.gap(X), gn=np.linalg.norm(drift, axis=-1))
            if k == n:
                break
            if eps is not None:
                drift = drift + eps[k] * Y
            Vn = (1.0 - gam[k] * h) * V - h * drift
            if use_noise:
                Vn += (env[k] * sigma.state_factor(Y))[:, None] * dW[k]
            X = X + h * V
            V = Vn
            rec.check(k + 1, X, V)
    meta = {"scheme": "inertial", "damping": repr(d), "sigma": sigma.describe(),
            "beta": beta if isinstance(beta, str) else "custom", "noise_scale": noise_scale}
    return _finish(TrajectorySecondOrder, grid, rec, meta, X=rec.data["X"], V=rec.data["V"],
                   beta=bet[rec.idx])


# -- output ------------------------------------------------------------------------

def _state_columns(states, path_index, dim):
    x = states[:, path_index, :]
    if dim <= 8:
        return [f"x{i}" for i in range(dim)], x
    return ["x_norm"], np.linalg.norm(x, axis=-1)[:, None]


def write_trajectory_csv(traj, filename, path_index: int = 0):
    """One path: time, state components (or the norm when dim > 8), gap and gradient norm."""
    states = traj.states
    dim = states.shape[-1]
    names, cols = _state_columns(states, path_index, dim)
    with open(filename, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t"] + names + ["f_gap", "grad_norm"])
        for i, t in enumerate(traj.t):
            w.writerow([repr(float(t))] + [repr(float(v)) for v in cols[i]]
                       + [repr(float(traj.f_gap[i, path_index])), repr(float(traj.grad_norm[i, path_index]))])


def write_aggregate_csv(traj, filename):
    """Mean and standard error of the gap and gradient norm over non-aborted paths."""
    keep = ~traj.aborted
    gap = traj.f_gap[:, keep]
    gn = traj.grad_norm[:, keep]
    m = max(int(keep.sum()), 1)
    with open(filename, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "gap_mean", "gap_stderr", "grad_norm_mean", "grad_norm_stderr", "n_paths"])
        for i, t in enumerate(traj.t):
            se_g = gap[i].std(ddof=1) / math.sqrt(m) if m > 1 else 0.0
            se_n = gn[i].std(ddof=1) / math.sqrt(m) if m > 1 else 0.0
            w.writerow([repr(float(t)), repr(float(gap[i].mean())), repr(float(se_g)),
                        repr(float(gn[i].mean())), repr(float(se_n)), m])
