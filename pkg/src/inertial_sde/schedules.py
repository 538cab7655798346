"""Damping, diffusion and Tikhonov schedules and their derived time scales.

For a viscous damping ``gamma`` on ``[t0, inf)`` the derived scales are

    p(t)     = exp(int_{t0}^t gamma)
    Gamma(t) = p(t) int_t^inf ds / p(s)          (solves Gamma' = gamma Gamma - 1)
    theta(t) = s0 + int_{t0}^t Gamma             (time change, s = theta(t))
    A(t)     = int_{t0}^t du / Gamma(u)          (averaging exponent)

Builtin kinds use closed forms; custom kinds go through quadrature or a
memoized table built by integrating the Gamma ODE backward from a far
horizon, where it is stable.
"""

from __future__ import annotations

import math
import warnings
from fractions import Fraction
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy import integrate, optimize

from .errors import ConfigurationError, DomainError, NumericalError

__all__ = [
    "DampingSchedule",
    "DiffusionSchedule",
    "TikhonovSchedule",
    "IntegrabilityReport",
    "big_gamma",
    "theta",
    "exp_neg_A",
    "I_transform",
    "integrability_class",
]

QUAD_EPSABS = 1e-9
QUAD_EPSREL = 1e-7
TAIL_FACTOR = 1e3


def _quad(func, a, b, what, epsabs=QUAD_EPSABS, epsrel=QUAD_EPSREL, limit=400, points=None):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", integrate.IntegrationWarning)
        res = integrate.quad(func, a, b, epsabs=epsabs, epsrel=epsrel, limit=limit,
                             points=points, full_output=1)
    val, err, info = res[0], res[1], res[2]
    if len(res) > 3 and err > max(epsabs, epsrel * abs(val)) * 100:
        raise NumericalError(
            f"quadrature for {what} did not converge on [{a}, {b}]",
            {"value": val, "abserr": err, "neval": info.get("neval"), "message": res[3]},
        )
    return val, err


class DampingSchedule:
    """Viscous damping ``gamma(t)`` for ``t >= t0``.

    Use the constructors :meth:`power`, :meth:`constant` or :meth:`custom`.
    """

    def __init__(self, kind, t0, alpha=None, c=None, gamma_fn=None, upper_bound=None):
        self.kind = kind
        self.t0 = float(t0)
        self.alpha = alpha
        self.c = c
        self._gamma_fn = gamma_fn
        self.upper_bound = upper_bound
        self._table = None

    @classmethod
    def power(cls, alpha: float, t0: float = 1.0) -> "DampingSchedule":
        """``gamma(t) = alpha / t``; needs ``alpha > 1`` for a finite tail integral."""
        if not alpha > 1:
            raise ConfigurationError(f"power damping needs alpha > 1 (tail integral of 1/p diverges), got {alpha}")
        if not t0 > 0:
            raise ConfigurationError("power damping needs t0 > 0")
        return cls("power", t0, alpha=float(alpha))

    @classmethod
    def constant(cls, c: float, t0: float = 0.0) -> "DampingSchedule":
        if not c > 0:
            raise ConfigurationError(f"constant damping needs c > 0, got {c}")
        return cls("constant", t0, c=float(c))

    @classmethod
    def custom(cls, gamma_fn: Callable[[float], float], upper_bound: Callable[[float], float],
               t0: float = 1.0) -> "DampingSchedule":
        """User damping with a declared non-increasing upper bound."""
        if upper_bound is None:
            raise ConfigurationError("custom damping must declare a non-increasing upper bound")
        return cls("custom", t0, gamma_fn=gamma_fn, upper_bound=upper_bound)

    def __repr__(self):
        if self.kind == "power":
            return f"DampingSchedule.power(alpha={self.alpha}, t0={self.t0})"
        if self.kind == "constant":
            return f"DampingSchedule.constant(c={self.c}, t0={self.t0})"
        return f"DampingSchedule.custom(t0={self.t0})"

    def _check_t(self, t):
        t = np.asarray(t, dtype=float)
        if np.any(t < self.t0 - 1e-12 * max(1.0, abs(self.t0))):
            raise DomainError(f"t must be >= t0 = {self.t0}")
        return t

    def gamma(self, t):
        t = np.asarray(t, dtype=float)
        if self.kind == "power":
            return self.alpha / t
        if self.kind == "constant":
            return np.full_like(t, self.c)
        return np.vectorize(self._gamma_fn, otypes=[float])(t)

    # -- log p and Gamma ------------------------------------------------------

    def log_p(self, t):
        t = self._check_t(t)
        if self.kind == "power":
            return self.alpha * np.log(t / self.t0)
        if self.kind == "constant":
            return self.c * (t - self.t0)
        return np.vectorize(lambda x: _quad(self._gamma_fn, self.t0, x, "log p")[0], otypes=[float])(t)

    def big_gamma(self, t):
        """``Gamma(t) = p(t) int_t^inf ds/p(s)``."""
        t = self._check_t(t)
        if self.kind == "power":
            return t / (self.alpha - 1.0)
        if self.kind == "constant":
            return np.full_like(t, 1.0 / self.c)
        return np.vectorize(self._big_gamma_quad, otypes=[float])(t)

    def _big_gamma_quad(self, t):
        # int_t^T exp(-int_t^s gamma) ds plus an estimate of the tail beyond T
        T = TAIL_FACTOR * max(t, 1.0)
        sol = integrate.solve_ivp(lambda s, y: [self._gamma_fn(s)], (t, T), [0.0],
                                  dense_output=True, rtol=1e-11, atol=1e-13, method="DOP853")
        if not sol.success:
            raise NumericalError("log p integration failed", {"message": sol.message})
        # break points on a log grid keep quad from missing the early mass
        pts = list(np.geomspace(t, T, 12)[1:-1]) if t > 0 else None
        val, _ = _quad(lambda s: math.exp(-sol.sol(s)[0]), t, T, "Gamma", epsabs=1e-12, epsrel=1e-10,
                       points=pts)
        gT = self._gamma_fn(T)
        tail = math.exp(-sol.sol(T)[0]) / gT if gT > 0 else math.inf
        if not math.isfinite(tail) or tail > 1e-3 * max(val, 1e-300):
            raise NumericalError(
                f"tail of int ds/p(s) beyond {T:g} is not negligible; (H_gamma) may fail",
                {"truncated_value": val, "tail_estimate": tail},
            )
        return val + tail

    # -- theta, A ---------------------------------------------------------------

    def theta(self, t, s0: float = 0.0):
        """``theta(t) = s0 + int_{t0}^t Gamma``."""
        t = self._check_t(t)
        if self.kind == "power":
            return s0 + (t**2 - self.t0**2) / (2.0 * (self.alpha - 1.0))
        if self.kind == "constant":
            return s0 + (t - self.t0) / self.c
        return s0 + self._table_eval(t, "theta")

    def theta_inv(self, s, s0: float = 0.0):
        s = np.asarray(s, dtype=float)
        if np.any(s < s0 - 1e-12 * max(1.0, abs(s0))):
            raise DomainError(f"s must be >= s0 = {s0}")
        ds = np.maximum(s - s0, 0.0)
        if self.kind == "power":
            return np.sqrt(self.t0**2 + 2.0 * (self.alpha - 1.0) * ds)
        if self.kind == "constant":
            return self.t0 + self.c * ds
        return np.vectorize(lambda x: self._theta_inv_root(x, s0), otypes=[float])(s)

    def _theta_inv_root(self, s, s0):
        if s == s0:
            return self.t0
        hi = self.t0 + 1.0
        while self.theta(hi, s0) < s:
            hi = self.t0 + 2.0 * (hi - self.t0)
            if hi > 1e12:
                raise NumericalError("theta_inv bracket search failed", {"s": s})
        return optimize.brentq(lambda t: float(self.theta(t, s0)) - s, self.t0, hi,
                               xtol=1e-14, rtol=1e-12)

    def A(self, t):
        """``A(t) = int_{t0}^t du / Gamma(u)``."""
        t = self._check_t(t)
        if self.kind == "power":
            return (self.alpha - 1.0) * np.log(t / self.t0)
        if self.kind == "constant":
            return self.c * (t - self.t0)
        return self._table_eval(t, "A")

    def exp_neg_A(self, t):
        t = self._check_t(t)
        if self.kind == "power":
            return (self.t0 / t) ** (self.alpha - 1.0)
        return np.exp(-self.A(t))

    def averaging_density(self, u, t):
        """Density ``a(u) exp(A(u) - A(t))`` of the averaging measure on ``[t0, t]``."""
        u = self._check_t(u)
        if self.kind == "power":
            return (self.alpha - 1.0) / u * (u / t) ** (self.alpha - 1.0)
        if self.kind == "constant":
            return self.c * np.exp(self.c * (u - t))
        return np.exp(self.A(u) - self.A(t)) / self._table_eval(u, "Gamma")

    def tabulate(self, t_nodes, s0: float = 0.0) -> dict:
        """Vectorized ``gamma, Gamma, theta, A`` at the given nodes."""
        t = self._check_t(t_nodes)
        if self.kind == "custom":
            return {
                "gamma": self.gamma(t),
                "Gamma": self._table_eval(t, "Gamma"),
                "theta": s0 + self._table_eval(t, "theta"),
                "A": self._table_eval(t, "A"),
            }
        return {"gamma": self.gamma(t), "Gamma": self.big_gamma(t), "theta": self.theta(t, s0), "A": self.A(t)}

    # -- custom-kind table ----------------------------------------------------

    def _table_eval(self, t, key):
        t = np.asarray(t, dtype=float)
        tmax = float(np.max(t)) if t.size else self.t0
        if self._table is None or tmax > self._table["t_hi"]:
            self._build_table(max(2.0 * tmax, self.t0 + 1.0))
        return self._table[key](t)

    def _build_table(self, t_hi):
        t0 = self.t0
        T = TAIL_FACTOR * max(t_hi, 1.0)
        GT = float(self._big_gamma_quad(T))
        back = integrate.solve_ivp(lambda s, y: [self._gamma_fn(s) * y[0] - 1.0], (T, t0), [GT],
                                   dense_output=True, rtol=1e-11, atol=1e-13, method="DOP853")
        if not back.success:
            raise NumericalError("backward Gamma integration failed", {"message": back.message})
        Gsol = back.sol

        def rhs(s, y):
            g = Gsol(s)[0]
            return [g, 1.0 / g]

        fwd = integrate.solve_ivp(rhs, (t0, t_hi), [0.0, 0.0], dense_output=True,
                                  rtol=1e-11, atol=1e-13, method="DOP853")
        if not fwd.success:
            raise NumericalError("theta/A integration failed", {"message": fwd.message})
        self._table = {
            "t_hi": t_hi,
            "Gamma": lambda x: Gsol(x)[0],
            "theta": lambda x: fwd.sol(x)[0],
            "A": lambda x: fwd.sol(x)[1],
        }

    # -- hypotheses -----------------------------------------------------------

    def check_hypothesis(self, horizon: float = 1e3) -> dict:
        """Report on the damping hypothesis: bounded by a non-increasing function and
        ``int ds/p(s) < inf``.  Builtin kinds are decided analytically."""
        if self.kind == "power":
            return {"ok": self.alpha > 1, "heuristic": False, "detail": f"alpha = {self.alpha} > 1"}
        if self.kind == "constant":
            return {"ok": True, "heuristic": False, "detail": "constant damping"}
        ts = np.geomspace(max(self.t0, 1e-6), max(horizon, self.t0 * 10 + 1), 200)
        ts[0] = self.t0
        ub = np.array([self.upper_bound(x) for x in ts])
        g = self.gamma(ts)
        monotone = bool(np.all(np.diff(ub) <= 1e-12 * np.maximum(1.0, np.abs(ub[:-1]))))
        dominated = bool(np.all(g <= ub + 1e-12) and np.all(g >= 0))
        try:
            self._big_gamma_quad(self.t0)
            tail_ok = True
        except NumericalError:
            tail_ok = False
        return {"ok": monotone and dominated and tail_ok, "heuristic": True,
                "detail": f"bound non-increasing={monotone}, gamma<=bound={dominated}, tail finite={tail_ok}"}


def big_gamma(d: DampingSchedule, t):
    return d.big_gamma(t)


def theta(d: DampingSchedule, s0, t):
    return d.theta(t, s0)


def exp_neg_A(d: DampingSchedule, t):
    return d.exp_neg_A(t)


def I_transform(d: DampingSchedule, h: Callable[[float], float], t: float) -> float:
    """``I[h](t) = exp(-A(t)) int_{t0}^t h(u) exp(A(u)) / Gamma(u) du``."""
    t = float(t)
    if t < d.t0:
        raise DomainError(f"t must be >= t0 = {d.t0}")
    if t == d.t0:
        return 0.0
    if d.kind == "custom":
        # keep the table lookups vectorizable inside quad
        At = float(d.A(t))

        def integrand(u):
            return h(u) * math.exp(float(d.A(u)) - At) / float(d._table_eval(u, "Gamma"))
    else:
        def integrand(u):
            return h(u) * float(d.averaging_density(u, t))

    pts = list(np.geomspace(d.t0, t, 8)[1:-1]) if d.t0 > 0 else None
    val, _ = _quad(integrand, d.t0, t, "I[h]", epsabs=1e-13, epsrel=1e-10, points=pts)
    return val


# -- diffusion ---------------------------------------------------------------

def _unit_factor(x):
    return np.ones(np.shape(x)[:-1])


def saturating_factor(x):
    """``D(x) = 1 / (1 + ||x||)``: bounded by 1 and 1-Lipschitz."""
    return 1.0 / (1.0 + np.linalg.norm(x, axis=-1))


@dataclass
class DiffusionSchedule:
    """Noise ``sigma(t, x) = envelope(t) * D(x) * I``.

    ``envelope`` is the per-coordinate amplitude; the Hilbert-Schmidt norm of
    ``sigma`` is ``sqrt(dim) * envelope(t) * |D(x)|``.
    """

    kind: str = "zero"
    c: float = 0.0
    q: float = 0.0
    rate: float = 0.0
    envelope_fn: Optional[Callable[[float], float]] = None
    state_factor: Callable = field(default=_unit_factor)
    l0: float = 0.0
    sigma_star: Optional[float] = None
    factor_name: str = "unit"

    def __post_init__(self):
        if self.kind not in ("zero", "constant", "power", "exponential", "custom"):
            raise ConfigurationError(f"unknown diffusion kind {self.kind!r}")
        if self.kind == "custom" and self.envelope_fn is None:
            raise ConfigurationError("custom diffusion needs envelope_fn")
        if self.c < 0:
            raise ConfigurationError("diffusion amplitude must be nonnegative")

    @classmethod
    def zero(cls):
        return cls("zero")

    @classmethod
    def constant(cls, c, **kw):
        return cls("constant", c=float(c), **kw)

    @classmethod
    def power(cls, c, q, **kw):
        """``c * t^(-q)``."""
        return cls("power", c=float(c), q=float(q), **kw)

    @classmethod
    def exponential(cls, c, rate, **kw):
        """``c * exp(-rate * t)``."""
        return cls("exponential", c=float(c), rate=float(rate), **kw)

    @classmethod
    def custom(cls, envelope_fn, sigma_star=None, **kw):
        return cls("custom", envelope_fn=envelope_fn, sigma_star=sigma_star, **kw)

    @property
    def is_zero(self):
        return self.kind == "zero" or (self.kind != "custom" and self.c == 0.0)

    def envelope(self, t):
        t = np.asarray(t, dtype=float)
        if self.kind == "zero":
            return np.zeros_like(t)
        if self.kind == "constant":
            return np.full_like(t, self.c)
        if self.kind == "power":
            with np.errstate(divide="ignore"):
                return self.c * t ** (-self.q)
        if self.kind == "exponential":
            return self.c * np.exp(-self.rate * t)
        return np.vectorize(self.envelope_fn, otypes=[float])(t)

    def amplitude(self, t, x):
        """Scalar noise amplitude ``envelope(t) * D(x)`` for each point of a batch."""
        return self.envelope(t) * self.state_factor(x)

    def bound(self, t0):
        """``sigma_star``: sup of the envelope over ``[t0, inf)``."""
        if self.sigma_star is not None:
            return self.sigma_star
        if self.kind == "zero":
            return 0.0
        if self.kind == "constant":
            return self.c
        if self.kind == "power":
            if self.q < 0:
                return math.inf
            return self.c * t0 ** (-self.q) if t0 > 0 else (math.inf if self.q > 0 else self.c)
        if self.kind == "exponential":
            return self.c * math.exp(-self.rate * t0) if self.rate >= 0 else math.inf
        ts = t0 + np.geomspace(1e-9, 1e6, 400)
        return float(np.max(self.envelope(ts)))

    def to_s_time(self, d: DampingSchedule, s0: float = 0.0) -> "DiffusionSchedule":
        """Diffusion of the first-order system in ``s = theta(t)``.

        Its envelope is ``sqrt(Gamma(t)) * envelope(t)`` at ``t = theta^{-1}(s)``,
        so that the scaled first-order system reproduces this schedule in the
        velocity equation of the inertial system.
        """
        base = self

        def env(s):
            t = d.theta_inv(s, s0)
            return float(np.sqrt(d.big_gamma(t)) * base.envelope(t))

        return DiffusionSchedule.custom(env, state_factor=self.state_factor, l0=self.l0,
                                        factor_name=self.factor_name)

    def describe(self):
        if self.kind == "power":
            return f"{self.c:g}*t^-{self.q:g}"
        if self.kind == "exponential":
            return f"{self.c:g}*exp(-{self.rate:g} t)"
        if self.kind == "constant":
            return f"{self.c:g}"
        return self.kind


@dataclass
class TikhonovSchedule:
    """``eps(t) = theta(t)^(-r)``; with no damping attached ``theta(t) = t``."""

    r: float
    damping: Optional[DampingSchedule] = None
    s0: float = 1.0

    def __post_init__(self):
        if not 0 < self.r <= 1:
            raise ConfigurationError(f"Tikhonov exponent r must lie in (0, 1], got {self.r}")
        if self.damping is not None and not self.s0 > 0:
            raise ConfigurationError("Tikhonov schedule needs s0 > 0 so that theta(t0) > 0")

    def time_scale(self, t):
        if self.damping is None:
            return np.asarray(t, dtype=float)
        return self.damping.theta(t, self.s0)

    def epsilon(self, t):
        return self.time_scale(t) ** (-self.r)


# -- integrability classes -----------------------------------------------------

@dataclass
class IntegrabilityReport:
    traj_ok: bool
    rate_ok: bool
    fast_ok: bool
    first_order_ok: bool
    exponents: dict
    heuristic: bool = False
    notes: list = field(default_factory=list)

    def failed(self, required):
        return [name for name in required if not getattr(self, name)]


_THRESHOLD_TEXT = {
    "traj_ok": "Gamma*sigma_inf in L^2",
    "rate_ok": "sqrt(theta)*Gamma*sigma_inf in L^2",
    "fast_ok": "t^2*sigma_inf in L^2",
    "first_order_ok": "t*sigma_inf^2 in L^1",
}


def _fraction(v):
    fr = Fraction(v).limit_denominator(8)
    return str(fr) if abs(float(fr) - v) < 1e-12 else f"{v:g}"


def integrability_class(d: DampingSchedule, sigma: DiffusionSchedule, horizon: float = 1e4) -> IntegrabilityReport:
    """Classify the noise envelope against the integrability conditions.

    ``traj_ok``: ``Gamma sigma_inf`` square integrable (trajectory convergence).
    ``rate_ok``: ``sqrt(theta) Gamma sigma_inf`` square integrable (value rates).
    ``fast_ok``: ``t^2 sigma_inf`` square integrable (the ``t^-2`` rate for ``alpha/t``).
    ``first_order_ok``: ``t sigma_inf^2`` integrable (first-order ``1/t`` rate).
    Builtin kinds are decided from power exponents, custom ones by a finite-horizon
    tail test marked heuristic.
    """
    growth = {"power": (1.0, 2.0), "constant": (0.0, 1.0)}.get(d.kind)
    notes = []
    if sigma.is_zero:
        return IntegrabilityReport(True, True, True, True, {"q": math.inf}, notes=["zero diffusion"])
    if growth is not None and sigma.kind in ("power", "exponential", "constant"):
        g_exp, th_exp = growth
        if sigma.kind == "exponential" and sigma.rate > 0:
            q = math.inf
        elif sigma.kind == "constant" or (sigma.kind == "exponential" and sigma.rate == 0):
            q = 0.0
        elif sigma.kind == "exponential":
            q = -math.inf
        else:
            q = sigma.q
        # int t^{2(e - q)} dt < inf  iff  e - q < -1/2
        crit = {
            "traj_ok": g_exp + 0.5,
            "rate_ok": g_exp + th_exp / 2 + 0.5,
            "fast_ok": 2.5,
            "first_order_ok": 1.0,
        }
        flags = {k: q > v for k, v in crit.items()}
        exps = {"q": q, "critical_q": crit}
        notes += [f"{k} requires q > {_fraction(v)} ({_THRESHOLD_TEXT[k]})" for k, v in crit.items() if not flags[k]]
        return IntegrabilityReport(exponents=exps, notes=notes, **flags)
    # custom: partial integrals over a finite horizon, last-decade share as divergence proxy
    t0 = d.t0 if d.t0 > 0 else 1e-3
    ts = np.geomspace(t0, horizon, 4000)
    G = d.tabulate(ts)["Gamma"]
    th = d.theta(ts, 0.0)
    env = sigma.envelope(ts)
    integrands = {
        "traj_ok": (G * env) ** 2,
        "rate_ok": th * (G * env) ** 2,
        "fast_ok": (ts**2 * env) ** 2,
        "first_order_ok": ts * env**2,
    }
    flags, shares = {}, {}
    tail = ts >= horizon / 10
    for k, f in integrands.items():
        total = integrate.trapezoid(f, ts)
        last = integrate.trapezoid(f[tail], ts[tail])
        share = last / total if total > 0 else 0.0
        shares[k] = share
        flags[k] = bool(np.isfinite(total) and share < 0.1)
    return IntegrabilityReport(exponents={"last_decade_share": shares}, heuristic=True,
                               notes=["custom schedule: finite-horizon tail test"], **flags)
