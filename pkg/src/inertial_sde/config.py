"""Run configuration: a sectioned key-value file, and builders for the objects it names.

Example::

    [run]
    scenario = rates
    seed = 1
    n_paths = 64

    [problem]
    name = quadratic
    A = [[1.0]]

    [damping]
    kind = power
    alpha = 4
    t0 = 1

    [diffusion]
    kind = power
    c = 0.5
    q = 3

    [grid]
    horizon = 1000
    h = 0.01
    stride = 100

Matrices and vectors are JSON literals.  The seed can be overridden with the
``INERTIAL_SDE_SEED`` environment variable.
"""

from __future__ import annotations

import configparser
import io
import json
import math
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .errors import ConfigurationError
from .problems import CompositeProblem, problem_from_config
from .schedules import DampingSchedule, DiffusionSchedule, TikhonovSchedule, saturating_factor
from .sde import TimeGrid, sample_brownian, simulate_first_order, simulate_inertial, simulate_scaled_first_order

SEED_ENV = "INERTIAL_SDE_SEED"
SCENARIOS = ("simulate", "rates", "consistency", "transform-check", "tikhonov", "pl")
SECTIONS = ("problem", "damping", "diffusion", "tikhonov", "grid", "initial", "check")
RUN_KEYS = ("scenario", "seed", "n_paths", "out_dir")


@dataclass
class RunConfig:
    scenario: str = "simulate"
    seed: int = 0
    n_paths: int = 16
    out_dir: str = "runs"
    problem: dict = field(default_factory=dict)
    damping: dict = field(default_factory=dict)
    diffusion: dict = field(default_factory=dict)
    tikhonov: dict = field(default_factory=dict)
    grid: dict = field(default_factory=dict)
    initial: dict = field(default_factory=dict)
    check: dict = field(default_factory=dict)
    base_dir: Optional[str] = field(default=None, compare=False)

    def __post_init__(self):
        if self.scenario not in SCENARIOS:
            raise ConfigurationError(f"[run] scenario: unknown scenario {self.scenario!r}")
        for name in SECTIONS:
            sec = getattr(self, name)
            setattr(self, name, {str(k): _to_text(v) for k, v in sec.items()})

    def option(self, key, default=None, cast=float):
        """Typed value from the ``[check]`` section."""
        if key not in self.check:
            return default
        try:
            return cast(self.check[key])
        except (TypeError, ValueError):
            raise ConfigurationError(f"[check] {key}: cannot read {self.check[key]!r}") from None


def _to_text(v):
    if isinstance(v, str):
        return v
    if isinstance(v, np.ndarray):
        v = v.tolist()
    if isinstance(v, (list, tuple)):
        return json.dumps(v)
    return repr(v) if isinstance(v, float) else str(v)


def _int(section, key, value):
    try:
        return int(value)
    except (TypeError, ValueError):
        raise ConfigurationError(f"[{section}] {key}: expected an integer, got {value!r}") from None


def parse_config(text: str, base_dir=None) -> RunConfig:
    cp = configparser.ConfigParser(interpolation=None)
    cp.optionxform = str
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigurationError(f"cannot parse config: {exc}") from None
    unknown = [s for s in cp.sections() if s != "run" and s not in SECTIONS]
    if unknown:
        raise ConfigurationError(f"unknown config section [{unknown[0]}]")
    run = dict(cp["run"]) if cp.has_section("run") else {}
    bad = [k for k in run if k not in RUN_KEYS]
    if bad:
        raise ConfigurationError(f"[run] {bad[0]}: unknown key")
    kw = {name: dict(cp[name]) for name in SECTIONS if cp.has_section(name)}
    return RunConfig(scenario=run.get("scenario", "simulate"),
                     seed=_int("run", "seed", run.get("seed", 0)),
                     n_paths=_int("run", "n_paths", run.get("n_paths", 16)),
                     out_dir=run.get("out_dir", "runs"), base_dir=base_dir, **kw)


def load_config(path) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigurationError(f"cannot read config {path}: {exc}") from None
    return parse_config(text, base_dir=str(path.parent))


def serialize_config(cfg: RunConfig) -> str:
    cp = configparser.ConfigParser(interpolation=None)
    cp.optionxform = str
    cp["run"] = {"scenario": cfg.scenario, "seed": str(cfg.seed), "n_paths": str(cfg.n_paths),
                 "out_dir": cfg.out_dir}
    for name in SECTIONS:
        sec = getattr(cfg, name)
        if sec:
            cp[name] = sec
    buf = io.StringIO()
    cp.write(buf)
    return buf.getvalue()


def resolve_seed(cfg: RunConfig, cli_seed: Optional[int] = None) -> int:
    """Command-line seed, then the environment variable, then the config file."""
    if cli_seed is not None:
        return int(cli_seed)
    env = os.environ.get(SEED_ENV)
    if env not in (None, ""):
        return _int("env", SEED_ENV, env)
    return cfg.seed


# -- builders ------------------------------------------------------------------------

def _float(section, sec, key, default=None):
    if key not in sec:
        if default is None:
            raise ConfigurationError(f"[{section}] {key}: missing")
        return default
    try:
        return float(sec[key])
    except ValueError:
        raise ConfigurationError(f"[{section}] {key}: expected a number, got {sec[key]!r}") from None


def build_problem(cfg: RunConfig) -> CompositeProblem:
    if not cfg.problem:
        raise ConfigurationError("[problem] section missing")
    try:
        return problem_from_config(cfg.problem, cfg.base_dir)
    except KeyError as exc:
        raise ConfigurationError(f"[problem] {exc.args[0]}: missing") from None


def build_damping(cfg: RunConfig) -> DampingSchedule:
    sec = cfg.damping
    kind = sec.get("kind", "power")
    if kind == "power":
        return DampingSchedule.power(_float("damping", sec, "alpha"), _float("damping", sec, "t0", 1.0))
    if kind == "constant":
        return DampingSchedule.constant(_float("damping", sec, "c"), _float("damping", sec, "t0", 0.0))
    raise ConfigurationError(f"[damping] kind: unknown kind {kind!r} (power or constant)")


def build_diffusion(cfg: RunConfig) -> DiffusionSchedule:
    sec = cfg.diffusion
    kind = sec.get("kind", "zero")
    factor = sec.get("factor", "unit")
    if factor not in ("unit", "saturating"):
        raise ConfigurationError(f"[diffusion] factor: unknown state factor {factor!r}")
    kw = {}
    if factor == "saturating":
        kw = {"state_factor": saturating_factor, "l0": 1.0, "factor_name": "saturating"}
    if kind == "zero":
        return DiffusionSchedule.zero()
    if kind == "constant":
        return DiffusionSchedule.constant(_float("diffusion", sec, "c"), **kw)
    if kind == "power":
        return DiffusionSchedule.power(_float("diffusion", sec, "c"), _float("diffusion", sec, "q"), **kw)
    if kind == "exponential":
        return DiffusionSchedule.exponential(_float("diffusion", sec, "c"), _float("diffusion", sec, "rate"), **kw)
    raise ConfigurationError(f"[diffusion] kind: unknown kind {kind!r}")


def build_tikhonov(cfg: RunConfig, d: DampingSchedule) -> Optional[TikhonovSchedule]:
    sec = cfg.tikhonov
    if not sec:
        return None
    return TikhonovSchedule(_float("tikhonov", sec, "r"), d, _float("tikhonov", sec, "s0", 1.0))


def build_grid(cfg: RunConfig, d: DampingSchedule) -> TimeGrid:
    sec = cfg.grid
    return TimeGrid(d.t0, _float("grid", sec, "horizon"), _float("grid", sec, "h"))


def grid_stride(cfg: RunConfig) -> int:
    return _int("grid", "stride", cfg.grid.get("stride", 1))


def initial_state(cfg: RunConfig, key: str, dim: int, default=0.0) -> np.ndarray:
    raw = cfg.initial.get(key)
    if raw is None:
        return np.full(dim, default)
    try:
        val = np.asarray(json.loads(raw), dtype=float)
    except (json.JSONDecodeError, TypeError, ValueError):
        raise ConfigurationError(f"[initial] {key}: cannot read {raw!r}") from None
    return np.broadcast_to(val, (dim,)).copy() if val.ndim == 0 else val


def system_kind(cfg: RunConfig) -> str:
    kind = cfg.check.get("system", "inertial")
    if kind not in ("inertial", "first_order", "scaled_first_order"):
        raise ConfigurationError(f"[check] system: unknown system {kind!r}")
    return kind


def simulate_from_config(cfg: RunConfig, n_paths: Optional[int] = None, seed: Optional[int] = None,
                         first_path: int = 0):
    """Simulate the system the config describes over its grid."""
    n_paths = cfg.n_paths if n_paths is None else n_paths
    seed = cfg.seed if seed is None else seed
    problem = build_problem(cfg)
    d = build_damping(cfg)
    sigma = build_diffusion(cfg)
    grid = build_grid(cfg, d)
    tik = build_tikhonov(cfg, d)
    stride = grid_stride(cfg)
    x0 = initial_state(cfg, "x0", problem.dim)
    path = None if sigma.is_zero else sample_brownian(problem.dim, grid, seed, n_paths, first_path)
    kind = system_kind(cfg)
    if kind == "first_order":
        return simulate_first_order(problem, sigma, grid, path, x0=x0, tikhonov=tik, stride=stride, n_paths=n_paths)
    if kind == "scaled_first_order":
        s0 = float(cfg.check.get("s0", 0.0))
        return simulate_scaled_first_order(problem, sigma.to_s_time(d, s0), d, grid, path, x0=x0, s0=s0,
                                           tikhonov=tik, stride=stride, n_paths=n_paths)
    beta = cfg.check.get("beta", "gamma_linked")
    if beta != "gamma_linked":
        beta = float(beta)
    v0 = initial_state(cfg, "v0", problem.dim)
    return simulate_inertial(problem, sigma, d, grid, path, x0=x0, v0=v0, beta=beta, tikhonov=tik,
                             stride=stride, n_paths=n_paths)


# -- defaults --------------------------------------------------------------------------

_DEFAULTS = {
    "simulate": dict(n_paths=16, problem={"name": "quadratic", "A": "[[1.0]]"},
                     damping={"kind": "power", "alpha": "4", "t0": "1"},
                     diffusion={"kind": "power", "c": "0.5", "q": "3"},
                     grid={"horizon": "100", "h": "0.01", "stride": "10"}, initial={"x0": "1.0"}),
    "rates": dict(n_paths=64, problem={"name": "flat_power", "dim": "1", "power": "20"},
                  damping={"kind": "power", "alpha": "4", "t0": "1"},
                  diffusion={"kind": "power", "c": "0.5", "q": "3"},
                  grid={"horizon": "1000", "h": "0.01", "stride": "100"}, initial={"x0": "2.0"},
                  check={"system": "inertial", "target": "-2", "tolerance": "0.3"}),
    "consistency": dict(n_paths=32, problem={"name": "quadratic", "A": "[[1.0]]"},
                        damping={"kind": "power", "alpha": "4", "t0": "1"},
                        diffusion={"kind": "power", "c": "0.5", "q": "2"},
                        grid={"horizon": "5", "h": "0.01"}, initial={"x0": "1.0"},
                        check={"n_halvings": "3", "ref_factor": "64"}),
    "transform-check": dict(n_paths=8, problem={"name": "quadratic", "A": "[[1.0]]"},
                            damping={"kind": "power", "alpha": "4", "t0": "1"},
                            diffusion={"kind": "power", "c": "0.5", "q": "3"},
                            grid={"horizon": "10", "h": "0.02"}, initial={"x0": "1.0", "v0": "0.5"},
                            check={"n_halvings": "4", "s0": "0"}),
    "tikhonov": dict(n_paths=32, problem={"name": "quadratic", "A": "[[1.0, 0.0], [0.0, 0.0]]", "b": "[1.0, 0.0]"},
                     damping={"kind": "power", "alpha": "4", "t0": "1"},
                     diffusion={"kind": "power", "c": "0.5", "q": "3"},
                     tikhonov={"r": "0.9", "s0": "1"},
                     grid={"horizon": "1000", "h": "0.005", "stride": "200"}, initial={"x0": "[0.0, 5.0]"}),
    "pl": dict(n_paths=64, problem={"name": "quadratic", "A": "[[1.0]]"},
               damping={"kind": "constant", "c": repr(math.sqrt(2.0)), "t0": "0"},
               diffusion={"kind": "exponential", "c": "0.1", "rate": "1"},
               grid={"horizon": "40", "h": "0.01", "stride": "10"}, initial={"x0": "1.0"}),
}


def default_config(scenario: str) -> RunConfig:
    """The built-in fixture for a scenario."""
    if scenario not in _DEFAULTS:
        raise ConfigurationError(f"unknown scenario {scenario!r}")
    kw = {k: (dict(v) if isinstance(v, dict) else v) for k, v in _DEFAULTS[scenario].items()}
    return RunConfig(scenario=scenario, seed=1, **kw)
