"""Convex test objectives with exact oracles.

Every oracle accepts arrays of shape ``(..., dim)`` so that a whole batch of
Monte Carlo paths can be evaluated in one call.  Scalar-valued oracles return
arrays of shape ``(...)``.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional

import numpy as np

from .errors import ConfigurationError

Array = np.ndarray

__all__ = [
    "SmoothObjective",
    "NonsmoothTerm",
    "CompositeProblem",
    "moreau_grad",
    "moreau_envelope",
    "builtin_problem",
    "problem_from_config",
    "l1_norm",
    "squared_l2",
    "zero_term",
]


@dataclass(frozen=True)
class SmoothObjective:
    """Convex, continuously differentiable ``f`` with Lipschitz gradient.

    ``solution_projector`` maps a point onto ``argmin f`` and is ``None`` when
    no closed form exists.  ``pl_constant_mu`` and the error-bound pair
    ``(eb_exponent_p, eb_constant_kappa)`` are optional geometry certificates.
    """

    dim: int
    eval: Callable[[Array], Array]
    grad: Callable[[Array], Array]
    lipschitz_L: float
    min_value: float
    solution_projector: Optional[Callable[[Array], Array]] = None
    pl_constant_mu: Optional[float] = None
    eb_exponent_p: Optional[float] = None
    eb_constant_kappa: Optional[float] = None
    name: str = "smooth"
    # set for quadratics f = 1/2 x'Ax - b'x + c; lets regularized solves go exact
    quadratic: Optional[tuple] = None
    min_value_note: str = "exact"


@dataclass(frozen=True)
class NonsmoothTerm:
    """Proper lsc convex ``g`` given through its value and proximal map."""

    eval: Callable[[Array], Array]
    prox: Callable[[float, Array], Array]
    lipschitz_L0: Optional[float] = None
    name: str = "g"


@dataclass(frozen=True)
class CompositeProblem:
    """``F = f + g`` with ``g`` smoothed by its Moreau envelope in simulations."""

    f: SmoothObjective
    g: Optional[NonsmoothTerm] = None
    moreau_lambda: float = 1e-3
    min_value: Optional[float] = None
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.moreau_lambda <= 0:
            raise ConfigurationError("moreau_lambda must be positive")
        if self.min_value is None:
            object.__setattr__(self, "min_value", self.f.min_value)

    @property
    def dim(self) -> int:
        return self.f.dim

    @property
    def drift_lipschitz(self) -> float:
        if self.g is None:
            return self.f.lipschitz_L
        return self.f.lipschitz_L + 1.0 / self.moreau_lambda

    def value(self, x):
        """Objective ``F(x) = f(x) + g(x)``."""
        v = self.f.eval(x)
        if self.g is not None:
            v = v + self.g.eval(x)
        return v

    def smoothed_value(self, x):
        v = self.f.eval(x)
        if self.g is not None:
            v = v + moreau_envelope(self.g, self.moreau_lambda, x)
        return v

    def gap(self, x):
        return self.value(x) - self.min_value

    def drift(self, x):
        """Gradient of the smoothed potential ``f + g_lambda``."""
        d = self.f.grad(x)
        if self.g is not None:
            d = d + moreau_grad(self.g, self.moreau_lambda, x)
        return d

    @property
    def solution_projector(self):
        return self.f.solution_projector if self.g is None else self.metadata.get("projector")

    def min_norm_solution(self) -> Array:
        proj = self.solution_projector
        if proj is None:
            raise ConfigurationError(f"problem {self.f.name!r} has no solution projector")
        return proj(np.zeros(self.dim))


def moreau_grad(g: NonsmoothTerm, lam: float, x) -> Array:
    """Gradient of the Moreau envelope, ``(x - prox_{lam g}(x)) / lam``."""
    if not lam > 0:
        raise ConfigurationError(f"Moreau parameter must be positive, got {lam}")
    x = np.asarray(x, dtype=float)
    return (x - g.prox(lam, x)) / lam


def moreau_envelope(g: NonsmoothTerm, lam: float, x) -> Array:
    if not lam > 0:
        raise ConfigurationError(f"Moreau parameter must be positive, got {lam}")
    x = np.asarray(x, dtype=float)
    p = g.prox(lam, x)
    return g.eval(p) + np.sum((x - p) ** 2, axis=-1) / (2 * lam)


# -- nonsmooth terms ---------------------------------------------------------

def l1_norm(weight: float = 1.0) -> NonsmoothTerm:
    def ev(x):
        return weight * np.sum(np.abs(x), axis=-1)

    def prox(lam, x):
        return np.sign(x) * np.maximum(np.abs(x) - lam * weight, 0.0)

    return NonsmoothTerm(ev, prox, lipschitz_L0=weight, name="l1")


def squared_l2(weight: float = 1.0) -> NonsmoothTerm:
    """``g(x) = weight/2 * ||x||^2``; smooth, but handy as an exact prox check."""

    def ev(x):
        return 0.5 * weight * np.sum(np.asarray(x) ** 2, axis=-1)

    def prox(lam, x):
        return np.asarray(x) / (1.0 + lam * weight)

    return NonsmoothTerm(ev, prox, lipschitz_L0=None, name="squared_l2")


def zero_term() -> NonsmoothTerm:
    return NonsmoothTerm(lambda x: np.zeros(np.shape(x)[:-1]), lambda lam, x: np.asarray(x, float),
                         lipschitz_L0=0.0, name="zero")


# -- smooth objectives -------------------------------------------------------

def _quadratic(A, b=None, c: float = 0.0, name="quadratic", atol=1e-10) -> SmoothObjective:
    A = np.atleast_2d(np.asarray(A, dtype=float))
    n = A.shape[0]
    if A.shape != (n, n):
        raise ConfigurationError(f"quadratic matrix must be square, got shape {A.shape}")
    if not np.allclose(A, A.T, atol=1e-12):
        raise ConfigurationError("quadratic matrix must be symmetric")
    b = np.zeros(n) if b is None else np.asarray(b, dtype=float).reshape(n)
    w, Q = np.linalg.eigh(A)
    scale = max(1.0, np.abs(w).max())
    if w.min() < -atol * scale:
        raise ConfigurationError(f"quadratic matrix is not positive semidefinite (min eigenvalue {w.min():.3e})")
    pos = w > atol * scale
    # particular solution A^+ b and null-space basis
    x_p = Q[:, pos] @ ((Q[:, pos].T @ b) / w[pos])
    if np.linalg.norm(A @ x_p - b) > 1e-8 * max(1.0, np.linalg.norm(b)):
        raise ConfigurationError("linear term is not in the range of the quadratic matrix: f is unbounded below")
    N = Q[:, ~pos]

    def ev(x):
        x = np.asarray(x, dtype=float)
        return 0.5 * np.einsum("...i,ij,...j->...", x, A, x) - x @ b + c

    def grad(x):
        return np.asarray(x, dtype=float) @ A - b

    def proj(x):
        x = np.asarray(x, dtype=float)
        return x_p + (x - x_p) @ N @ N.T

    min_value = float(ev(x_p))
    mu = float(w[pos].min()) if pos.any() else None
    return SmoothObjective(
        dim=n, eval=ev, grad=grad, lipschitz_L=float(max(w.max(), 0.0)), min_value=min_value,
        solution_projector=proj, pl_constant_mu=mu,
        eb_exponent_p=2.0 if mu else None, eb_constant_kappa=0.5 * mu if mu else None,
        name=name, quadratic=(A, b, c),
    )


def _least_squares(M, y, name="least_squares") -> SmoothObjective:
    M = np.atleast_2d(np.asarray(M, dtype=float))
    y = np.asarray(y, dtype=float).reshape(M.shape[0])
    return _quadratic(M.T @ M, M.T @ y, 0.5 * float(y @ y), name=name)


def _huber(center, delta: float = 1.0) -> SmoothObjective:
    center = np.atleast_1d(np.asarray(center, dtype=float))
    if delta <= 0:
        raise ConfigurationError("huber delta must be positive")

    def ev(x):
        r = np.abs(np.asarray(x, float) - center)
        return np.sum(np.where(r <= delta, 0.5 * r**2 / delta, r - 0.5 * delta), axis=-1)

    def grad(x):
        r = np.asarray(x, float) - center
        return np.clip(r / delta, -1.0, 1.0)

    return SmoothObjective(
        dim=center.size, eval=ev, grad=grad, lipschitz_L=1.0 / delta, min_value=0.0,
        solution_projector=lambda x: np.broadcast_to(center, np.shape(x)).copy(),
        name="huber",
    )


def _flat_power(dim: int = 1, power: float = 20.0) -> SmoothObjective:
    """Separable ``sum phi(x_i)`` with ``phi = |x|^p / (p(p-1))`` on ``[-1, 1]``.

    Outside the unit interval ``phi`` continues as its second-order Taylor
    polynomial, so ``phi''`` is bounded by 1 everywhere.  The flat bottom makes
    the sublinear rate bounds nearly tight.
    """
    p = float(power)
    if p < 2:
        raise ConfigurationError("flat_power requires power >= 2")
    c1 = 1.0 / (p * (p - 1.0))
    d1 = 1.0 / (p - 1.0)

    def ev(x):
        a = np.abs(np.asarray(x, float))
        inner = np.minimum(a, 1.0)
        out = np.maximum(a - 1.0, 0.0)
        return np.sum(c1 * inner**p + d1 * out + 0.5 * out**2, axis=-1)

    def grad(x):
        x = np.asarray(x, float)
        a = np.abs(x)
        inner = np.minimum(a, 1.0)
        return np.sign(x) * (d1 * inner ** (p - 1.0) + np.maximum(a - 1.0, 0.0))

    return SmoothObjective(
        dim=dim, eval=ev, grad=grad, lipschitz_L=1.0, min_value=0.0,
        solution_projector=lambda x: np.zeros_like(np.asarray(x, float)),
        eb_exponent_p=p, eb_constant_kappa=c1,
        name="flat_power",
    )


def _logistic(features, labels, reg: float = 0.0):
    Amat = np.atleast_2d(np.asarray(features, dtype=float))
    y = np.asarray(labels, dtype=float).reshape(Amat.shape[0])
    if not np.all(np.isfinite(Amat)):
        raise ConfigurationError("logistic sample matrix must be finite")
    if not np.all(np.isin(y, (-1.0, 1.0))):
        raise ConfigurationError("logistic labels must be +1/-1")
    m, n = Amat.shape
    Ay = Amat * y[:, None]

    def ev(x):
        z = np.asarray(x, float) @ Ay.T
        return np.mean(np.logaddexp(0.0, -z), axis=-1) + 0.5 * reg * np.sum(np.asarray(x) ** 2, axis=-1)

    def grad(x):
        x = np.asarray(x, float)
        z = x @ Ay.T
        s = -np.exp(-np.logaddexp(0.0, z))  # -sigmoid(-z)
        return (s @ Ay) / m + reg * x

    def hess(x):
        z = Ay @ x
        w = np.exp(-np.logaddexp(0.0, z) - np.logaddexp(0.0, -z))
        return (Ay.T * w) @ Ay / m + reg * np.eye(n)

    L = 0.25 * np.linalg.norm(Amat, 2) ** 2 / m + reg
    x_min, info = _newton_minimize(grad, hess, np.zeros(n), tol=1e-12)
    obj = SmoothObjective(
        dim=n, eval=ev, grad=grad, lipschitz_L=float(L), min_value=float(ev(x_min)),
        solution_projector=(lambda x: np.broadcast_to(x_min, np.shape(x)).copy()) if reg > 0 else None,
        name="logistic", min_value_note=f"numerical (Newton, grad norm {info:.1e})",
    )
    return obj, x_min


def _newton_minimize(grad, hess, x0, tol=1e-12, max_iter=200):
    x = np.array(x0, dtype=float)
    for _ in range(max_iter):
        gx = grad(x)
        gn = np.linalg.norm(gx)
        if gn < tol:
            return x, gn
        step = np.linalg.lstsq(hess(x), gx, rcond=None)[0]
        # backtracking on the gradient norm keeps the iteration monotone
        t = 1.0
        while t > 1e-8 and np.linalg.norm(grad(x - t * step)) >= gn:
            t *= 0.5
        x = x - t * step
    gn = np.linalg.norm(grad(x))
    if gn > 1e-8:
        raise ConfigurationError(f"logistic minimum not found (gradient norm {gn:.2e}); data may be separable")
    return x, gn


def _composite_min_value(f: SmoothObjective, g: NonsmoothTerm, tol=1e-12, max_iter=200000):
    """Accelerated proximal gradient with adaptive restart; returns (x, F(x))."""
    step = 1.0 / f.lipschitz_L
    x = np.zeros(f.dim)
    y = x.copy()
    tk = 1.0
    for _ in range(max_iter):
        x_new = g.prox(step, y - step * f.grad(y))
        if np.linalg.norm(x_new - y) <= tol * step:
            x = x_new
            break
        if np.dot(y - x_new, x_new - x) > 0:  # restart
            tk = 1.0
        t_new = 0.5 * (1 + np.sqrt(1 + 4 * tk * tk))
        y = x_new + ((tk - 1) / t_new) * (x_new - x)
        x, tk = x_new, t_new
    return x, float(f.eval(x) + g.eval(x))


def builtin_problem(name: str, moreau_lambda: float = 1e-3, **params) -> CompositeProblem:
    """Build one of the test objectives.

    Parameters
    ----------
    name : {'quadratic', 'least_squares', 'logistic', 'l1_least_squares', 'huber', 'flat_power'}
    moreau_lambda : float
        Smoothing parameter for the nonsmooth part, when there is one.
    **params
        ``quadratic``: ``A``, ``b`` (optional), ``c`` (optional).
        ``least_squares``: ``M``, ``y``.
        ``logistic``: ``features``, ``labels`` (+1/-1), ``reg`` (optional).
        ``l1_least_squares``: ``M``, ``y``, ``weight``.
        ``huber``: ``center``, ``delta``.
        ``flat_power``: ``dim``, ``power``.
    """
    if name == "quadratic":
        f = _quadratic(params["A"], params.get("b"), params.get("c", 0.0))
        return CompositeProblem(f, None, moreau_lambda)
    if name == "least_squares":
        return CompositeProblem(_least_squares(params["M"], params["y"]), None, moreau_lambda)
    if name == "logistic":
        f, x_min = _logistic(params["features"], params["labels"], params.get("reg", 0.0))
        return CompositeProblem(f, None, moreau_lambda, metadata={"argmin_estimate": x_min})
    if name == "l1_least_squares":
        f = _least_squares(params["M"], params["y"], name="l1_least_squares")
        g = l1_norm(params.get("weight", 1.0))
        x_min, fmin = _composite_min_value(f, g)
        return CompositeProblem(f, g, moreau_lambda, min_value=fmin,
                                metadata={"argmin_estimate": x_min, "min_value_note": "numerical (FISTA)"})
    if name == "huber":
        return CompositeProblem(_huber(params["center"], params.get("delta", 1.0)), None, moreau_lambda)
    if name == "flat_power":
        return CompositeProblem(_flat_power(int(params.get("dim", 1)), params.get("power", 20.0)),
                                None, moreau_lambda)
    raise ConfigurationError(f"unknown problem {name!r}")


def _literal(value):
    """Parse a matrix/vector literal such as ``[[1, 0], [0, 2]]`` or a scalar."""
    if isinstance(value, str):
        try:
            return json.loads(value)
        except json.JSONDecodeError as exc:
            raise ConfigurationError(f"cannot parse literal {value!r}: {exc}") from None
    return value


def _read_csv(path) -> np.ndarray:
    with open(path, newline="") as fh:
        rows = [[float(v) for v in row] for row in csv.reader(fh) if row and not row[0].startswith("#")]
    return np.asarray(rows, dtype=float)


def problem_from_config(section: dict, base_dir=None) -> CompositeProblem:
    """Build a problem from a ``[problem]`` config section of string values.

    Array-valued keys take JSON literals.  ``data_csv`` names a CSV file whose
    last column is the target (labels for ``logistic``) and the rest are the
    feature matrix; relative paths resolve against ``base_dir``.
    """
    section = dict(section)
    name = section.pop("name", None)
    if name is None:
        raise ConfigurationError("[problem] needs a 'name' key")
    lam = float(section.pop("moreau_lambda", 1e-3))
    params = {k: _literal(v) for k, v in section.items() if k != "data_csv"}
    if "data_csv" in section:
        path = Path(section["data_csv"])
        if base_dir is not None and not path.is_absolute():
            path = Path(base_dir) / path
        data = _read_csv(path)
        feats, target = data[:, :-1], data[:, -1]
        if name == "logistic":
            params.setdefault("features", feats)
            params.setdefault("labels", target)
        else:
            params.setdefault("M", feats)
            params.setdefault("y", target)
    try:
        return builtin_problem(name, moreau_lambda=lam, **params)
    except KeyError as exc:
        raise ConfigurationError(f"[problem] {name} is missing key {exc.args[0]!r}") from None
    except TypeError as exc:
        raise ConfigurationError(f"[problem] {name}: {exc}") from None
