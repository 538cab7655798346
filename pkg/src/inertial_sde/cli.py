"""Command-line experiment runner.

Every scenario writes CSV files, the resolved config and a ``summary.txt`` of
``key = value`` lines into ``<out>/<scenario>_<seed>_<timestamp>/``.  The exit
status is 0 when every verdict passes, 1 when one fails and 2 when the config
is refused.
"""

from __future__ import annotations

import argparse
import datetime
import math
import shutil
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import analysis, tikhonov as tk, transform
from .config import (SCENARIOS, SEED_ENV, RunConfig, build_damping, build_diffusion, build_grid, build_problem,
                     build_tikhonov, default_config, grid_stride, initial_state, load_config, resolve_seed,
                     serialize_config, simulate_from_config, system_kind)
from .errors import ConfigurationError, HypothesisViolation, InertialSDEError, MonteCarloError
from .schedules import integrability_class
from .sde import write_aggregate_csv, write_trajectory_csv

EXIT_PASS, EXIT_FAIL, EXIT_REFUSED = 0, 1, 2


class Summary:
    """Ordered ``key = value`` lines plus verdicts."""

    def __init__(self):
        self.lines = []
        self.verdicts = {}

    def add(self, key, value):
        if isinstance(value, float):
            value = repr(value)
        elif isinstance(value, np.floating):
            value = repr(float(value))
        self.lines.append(f"{key} = {value}")

    def verdict(self, name, ok, claim):
        self.verdicts[name] = bool(ok)
        self.lines.append(f"verdict.{name} = {'pass' if ok else 'fail'}")
        self.lines.append(f"claim.{name} = {claim}")

    @property
    def passed(self):
        return all(self.verdicts.values())

    def text(self):
        return "\n".join(self.lines + [f"status = {'pass' if self.passed else 'fail'}"]) + "\n"


def _require(report, names):
    failed = report.failed(names)
    if failed:
        reason = next((n for n in report.notes if n.startswith(failed[0])), f"{failed[0]} false")
        raise HypothesisViolation(failed[0], f"refused: {reason}")


def _out_dir(cfg, seed, out):
    stamp = datetime.datetime.now(datetime.timezone.utc).strftime("%Y%m%dT%H%M%S")
    base = Path(out) / f"{cfg.scenario}_{seed}_{stamp}"
    path, i = base, 1
    while path.exists():
        path = base.with_name(f"{base.name}_{i}")
        i += 1
    path.mkdir(parents=True)
    return path


# -- scenarios ------------------------------------------------------------------------

def _simulate(cfg, out, s):
    traj = simulate_from_config(cfg)
    write_aggregate_csv(traj, out / "aggregate.csv")
    write_trajectory_csv(traj, out / "path_0.csv", 0)
    s.add("n_paths", traj.n_paths)
    s.add("excluded_paths", int(traj.aborted.sum()))
    keep = ~traj.aborted
    s.add("final_mean_gap", float(np.mean(traj.f_gap[-1, keep])) if keep.any() else math.nan)
    s.verdict("excluded_fraction", traj.excluded_fraction <= analysis.MAX_EXCLUDED,
              "aborted paths at most 1% of the batch")


def _rates(cfg, out, s):
    d, sigma = build_damping(cfg), build_diffusion(cfg)
    kind = system_kind(cfg)
    _require(integrability_class(d, sigma), ["first_order_ok"] if kind == "first_order" else ["rate_ok"])
    traj = simulate_from_config(cfg)
    curve = analysis.gap_curve(traj)
    curve.write_csv(out / "gap_curve.csv")
    default_target = -1.0 if kind == "first_order" else -2.0
    fit = analysis.fit_loglog_rate(curve, cfg.option("window_fraction", 0.4), cfg.option("target", default_target),
                                   cfg.option("tolerance", 0.3))
    s.add("slope", fit.slope)
    s.add("target", fit.target)
    s.add("tolerance", fit.tolerance)
    s.add("window", f"{fit.t_lo:g} {fit.t_hi:g}")
    s.add("excluded_paths", curve.excluded)
    for note in fit.notes:
        s.add("note", note)
    claim = "E[f(X(t)) - min f] = O(t^-1)" if kind == "first_order" else "E[f(X(t)) - min f] = O(t^-2)"
    s.verdict("rate", fit.verdict, claim)
    if kind == "inertial" and d.kind == "power":
        asr = analysis.as_rate_diagnostic(traj, None)
        s.add("as_median_ratio", asr.median)
        s.verdict("as_tail", asr.verdict, "f(X(t)) - min f = o(t^-2) almost surely (median tail surrogate)")
        gi = analysis.gradient_integral(traj, lambda t: t**3)
        s.add("gradient_integral_median_share", gi.median_share)
        s.verdict("gradient_integral", gi.verdict(0.2), "int t^3 |grad f(X + beta V)|^2 dt < inf")


def _consistency(cfg, out, s):
    problem, d, sigma = build_problem(cfg), build_damping(cfg), build_diffusion(cfg)
    h0 = float(cfg.grid.get("h", 1e-2))
    n = int(cfg.option("n_halvings", 3, int))
    T = float(cfg.grid.get("horizon", 5.0))
    h_list = h0 / 2.0 ** np.arange(n + 1)
    rep = analysis.consistency_orders(problem, d, sigma, T, h_list, cfg.n_paths, cfg.seed,
                                      x0=initial_state(cfg, "x0", problem.dim),
                                      v0=initial_state(cfg, "v0", problem.dim),
                                      ref_factor=int(cfg.option("ref_factor", 64, int)))
    rep.write_csv(out / "consistency.csv")
    s.add("order_sde", rep.order_sde)
    s.add("order_ode", rep.order_ode)
    lo, hi = cfg.option("sde_order_min", 0.8), cfg.option("sde_order_max", 1.2)
    s.verdict("order_sde", lo <= rep.order_sde <= hi, "E sup |X_k - X(t_k)| + |V_k - V(t_k)| = O(h)")
    if not sigma.is_zero:
        lo, hi = cfg.option("ode_order_min", 0.35), cfg.option("ode_order_max", 0.65)
        s.verdict("order_ode", lo <= rep.order_ode <= hi,
                  "E sup |X_k - x(t_k)| + |V_k - v(t_k)| = O(sqrt(h)) against the noiseless flow")
    s.verdict("monotone_errors", rep.monotone, "strong error does not grow under step halving")


def _transform(cfg, out, s):
    problem, d, sigma = build_problem(cfg), build_damping(cfg), build_diffusion(cfg)
    rep = transform.transform_equivalence_check(
        problem, sigma, d, float(cfg.option("s0", 0.0)), float(cfg.grid.get("h", 0.02)), cfg.seed,
        x0=initial_state(cfg, "x0", problem.dim), v0=initial_state(cfg, "v0", problem.dim),
        t_end=float(cfg.grid.get("horizon", 10.0)), n_halvings=int(cfg.option("n_halvings", 4, int)),
        n_paths=cfg.n_paths)
    rep.write_csv(out / "transform_check.csv")
    s.add("order", rep.order)
    s.add("exact", rep.exact)
    need = cfg.option("min_order", 0.9 if sigma.is_zero else 0.4)
    s.verdict("transform_order", rep.exact or rep.order >= need,
              "time-scaled and averaged first-order process equals the inertial process with beta = Gamma")


def _tikhonov(cfg, out, s):
    problem, d, sigma = build_problem(cfg), build_damping(cfg), build_diffusion(cfg)
    _require(integrability_class(d, sigma), ["traj_ok"])
    ts = build_tikhonov(cfg, d)
    if ts is None:
        raise ConfigurationError("[tikhonov] section missing")
    grid = build_grid(cfg, d)
    cond = tk.check_tikhonov_conditions(d, ts, problem, grid.t_end)
    s.add("eps_to_zero", cond.t1_ok)
    s.add("eps_gamma_divergent_trend", cond.t2_ok)
    s.add("eps_gamma_gap_saturates", cond.t3_ok)
    s.add("r_threshold", cond.r_threshold)
    s.add("r_range_ok", cond.r_range_ok)
    rep = tk.min_norm_convergence_run(problem, d, ts, sigma, grid, cfg.n_paths, cfg.seed,
                                      x0=initial_state(cfg, "x0", problem.dim),
                                      v0=initial_state(cfg, "v0", problem.dim), stride=grid_stride(cfg))
    if rep.degenerate:
        s.add("note", "degenerate fixture")
        s.verdict("nontrivial_solution_set", False, "solution set with more than one point")
        return
    rep.write_csv(out / "tikhonov.csv")
    s.add("final_sq_dist_ratio", rep.final_ratio)
    s.add("control_factor", rep.control_factor)
    s.verdict("min_norm", rep.final_ratio < cfg.option("max_ratio", 0.01),
              "X(t) -> minimum norm solution")
    s.verdict("control_separation", rep.control_factor >= cfg.option("min_control_factor", 5.0),
              "without Tikhonov the limit is some minimizer, not the minimum norm one")


def _pl(cfg, out, s):
    problem, d, sigma = build_problem(cfg), build_damping(cfg), build_diffusion(cfg)
    mu = problem.f.pl_constant_mu
    if mu is None:
        raise ConfigurationError("[problem] needs a PL constant (use a quadratic with a positive eigenvalue)")
    if d.kind != "constant":
        raise HypothesisViolation("constant_damping", "refused: pl scenario requires constant damping")
    traj = simulate_from_config(cfg)
    curve = analysis.gap_curve(traj)
    curve.write_csv(out / "gap_curve.csv")
    L = problem.f.lipschitz_L
    fit = analysis.linear_rate_fit(curve, mu, floor=lambda t: analysis.pl_floor(L, mu, sigma, t, d.t0))
    s.add("slope", fit.slope)
    s.add("target", fit.target)
    s.add("fit_kind", fit.kind)
    for note in fit.notes:
        s.add("note", note)
    s.verdict("linear_rate", bool(fit.verdict), "E[f(X(t)) - min f] <= K exp(-mu (t - t0) / 2) + noise floor")


_RUNNERS = {"simulate": _simulate, "rates": _rates, "consistency": _consistency,
            "transform-check": _transform, "tikhonov": _tikhonov, "pl": _pl}


def run_scenario(name: str, cfg: RunConfig, out=None):
    """Run a scenario; returns ``(exit_status, output_dir)``.

    Hypothesis violations and config errors propagate to the caller.
    """
    if name not in _RUNNERS:
        raise ConfigurationError(f"unknown scenario {name!r}")
    cfg = replace(cfg, scenario=name)
    out_dir = _out_dir(cfg, cfg.seed, out or cfg.out_dir)
    (out_dir / "config.ini").write_text(serialize_config(cfg))
    s = Summary()
    s.add("scenario", name)
    s.add("seed", cfg.seed)
    try:
        _RUNNERS[name](cfg, out_dir, s)
    except (HypothesisViolation, ConfigurationError):
        shutil.rmtree(out_dir)
        raise
    except MonteCarloError as exc:
        s.add("error", str(exc))
        s.verdict("monte_carlo", False, "aborted paths at most 1% of the batch")
    (out_dir / "summary.txt").write_text(s.text())
    return (EXIT_PASS if s.passed else EXIT_FAIL), out_dir


def build_parser():
    p = argparse.ArgumentParser(prog="inertial-sde", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="scenario", required=True)
    for name in SCENARIOS:
        sp = sub.add_parser(name, help=f"run the {name} scenario")
        sp.add_argument("--config", type=Path, help="config file (default: built-in fixture)")
        sp.add_argument("--seed", type=int, help=f"overrides {SEED_ENV} and the config seed")
        sp.add_argument("--paths", type=int, help="number of Monte Carlo paths")
        sp.add_argument("--out", type=Path, help="parent directory for the run output")
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config) if args.config else default_config(args.scenario)
        cfg = replace(cfg, seed=resolve_seed(cfg, args.seed))
        if args.paths is not None:
            if args.paths < 1:
                raise ConfigurationError("--paths must be positive")
            cfg = replace(cfg, n_paths=args.paths)
        status, out_dir = run_scenario(args.scenario, cfg, args.out)
    except HypothesisViolation as exc:
        print(f"inertial-sde: {exc}", file=sys.stderr)
        return EXIT_REFUSED
    except ConfigurationError as exc:
        print(f"inertial-sde: invalid config: {exc}", file=sys.stderr)
        return EXIT_REFUSED
    except InertialSDEError as exc:
        print(f"inertial-sde: {exc}", file=sys.stderr)
        return EXIT_FAIL
    print((out_dir / "summary.txt").read_text(), end="")
    print(f"output: {out_dir}")
    return status


if __name__ == "__main__":
    sys.exit(main())
