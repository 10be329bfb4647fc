"""``msk-tap`` command line interface.

    msk-tap <subcommand> --config PATH [--seed S] [--threads T] [--out PATH] [--json]

Each subcommand writes one CSV table preceded by ``#`` metadata lines
(version, seed, config hash, scalar results).  ``--json`` additionally writes
the full run report, including the resolved config, which re-runs to the same
numbers.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import math
import sys
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Callable

import numpy as np

from . import __version__, rng
from .config import ExperimentConfig, config_hash, load_config
from .errors import MSKError
from .mcmc import ChainConfig, estimate
from .model import build_layout, sample_disorder
from .oracle import concentration_bound_check, enumerate_gibbs, magnetizations, max_gamma
from .order_params import critical_temperatures, gauss_hermite_rule, q_sensitivity, solve_q
from .parallel import default_threads
from .tap import cavity_study, mcmc_residuals, plan_scaling_jobs, scaling_study, tap_iterate, tap_residuals

log = logging.getLogger("msk_tap")


@dataclass
class Table:
    columns: list[str]
    rows: list[list[Any]]
    meta: dict[str, Any] = field(default_factory=dict)


@dataclass
class RunReport:
    command: str
    config: dict[str, Any]
    version: str
    wall_clock_s: float
    seeds: dict[str, int]
    table: Table

    def to_dict(self) -> dict[str, Any]:
        return _jsonable(asdict(self))


def _jsonable(x):
    if isinstance(x, dict):
        return {k: _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return _jsonable(x.tolist())
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (np.floating, float)):
        v = float(x)
        return v if math.isfinite(v) else str(v)
    if isinstance(x, np.bool_):
        return bool(x)
    return x


def _species_list(cfg: ExperimentConfig) -> list[int]:
    s = cfg.params["species"]
    return list(range(cfg.model.m)) if s is None else [s]


def _default_gamma(spec) -> float:
    c = critical_temperatures(spec)
    return (c.beta_c**2 - 4 * c.alpha * spec.beta**2) / 4


def cmd_beta_c(cfg: ExperimentConfig, seed: int, threads: int) -> Table:
    c = critical_temperatures(cfg.model)
    return Table(["beta_c", "alpha", "beta_0", "rho"], [[c.beta_c, c.alpha, c.beta_0, c.beta_c**-2]])


def cmd_solve_q(cfg: ExperimentConfig, seed: int, threads: int) -> Table:
    p = cfg.params
    op = solve_q(cfg.model, gauss_hermite_rule(p["n_nodes"]), p["damping"], p["tol"], p["max_iter"])
    rows = [[s, float(op.q[s])] for s in range(cfg.model.m)]
    meta = {"iterations": op.iterations, "residual": op.residual, "outside_proven_regime": op.outside_proven_regime,
            "beta": cfg.model.beta, "beta_0": op.beta_0}
    return Table(["species", "q"], rows, meta)


def cmd_sensitivity(cfg: ExperimentConfig, seed: int, threads: int) -> Table:
    p = cfg.params
    rule = gauss_hermite_rule(p["n_nodes"])
    op = solve_q(cfg.model, rule, p["damping"], p["tol"], p["max_iter"])
    dq = q_sensitivity(cfg.model, op, rule)
    return Table(["species", "q", "dq_dbeta"], [[s, float(op.q[s]), float(dq[s])] for s in range(cfg.model.m)])


def _instance(cfg: ExperimentConfig, seed: int):
    layout = build_layout(cfg.model)
    return layout, sample_disorder(cfg.model, layout, seed)


def cmd_oracle(cfg: ExperimentConfig, seed: int, threads: int) -> Table:
    layout, disorder = _instance(cfg, seed)
    table = enumerate_gibbs(cfg.model, layout, disorder)
    mags = magnetizations(table)
    rows = [[i, int(layout.species_of[i]), float(mags[i])] for i in range(cfg.model.n)]
    return Table(["spin", "species", "magnetization"], rows, {"log_z": table.log_z})


def _chain(cfg: ExperimentConfig, seed: int) -> ChainConfig:
    return cfg.chain(ChainConfig(n_sweeps=2000), seed)


def cmd_mcmc(cfg: ExperimentConfig, seed: int, threads: int) -> Table:
    layout, disorder = _instance(cfg, seed)
    est = estimate(cfg.model, layout, disorder, _chain(cfg, seed), threads)
    rows = [[i, int(layout.species_of[i]), float(est.magnetizations[i]), float(est.magnetization_se[i])]
            for i in range(cfg.model.n)]
    meta = {"overlap_mean": est.overlap_mean, "overlap_se": est.overlap_se, "overlap_var": est.overlap_var,
            "flip_rate": est.flip_rate, "burn_in_sweeps": est.burn_in_sweeps,
            "burn_in_converged": est.burn_in_converged, "outside_proven_regime": est.outside_proven_regime}
    return Table(["spin", "species", "magnetization", "stderr"], rows, meta)


def cmd_tap_check(cfg: ExperimentConfig, seed: int, threads: int) -> Table:
    spec = cfg.model
    layout, disorder = _instance(cfg, seed)
    q = solve_q(spec).q
    if cfg.params["estimator"] == "exact":
        mags = magnetizations(enumerate_gibbs(spec, layout, disorder))
        rep = tap_residuals(spec, layout, disorder, mags, q)
    else:
        est = estimate(spec, layout, disorder, _chain(cfg, seed), threads)
        rep = mcmc_residuals(spec, layout, disorder, est, q)
        mags = est.replica_rb_magnetizations.mean(axis=0)
    rows = [[i, int(layout.species_of[i]), float(mags[i]), float(rep.residuals[i])] for i in range(spec.n)]
    meta = {"onsager": rep.onsager, "moment_2": rep.moment_2, "moment_4": rep.moment_4,
            "beta_over_beta0": rep.beta_over_beta0, "estimator": cfg.params["estimator"]}
    return Table(["spin", "species", "magnetization", "residual"], rows, meta)


def cmd_tap_iterate(cfg: ExperimentConfig, seed: int, threads: int) -> Table:
    spec = cfg.model
    layout, disorder = _instance(cfg, seed)
    it = tap_iterate(spec, layout, disorder, solve_q(spec).q, cfg.params["tap_max_iter"], cfg.params["tap_tol"])
    rows = [[i, int(layout.species_of[i]), float(it.magnetizations[i])] for i in range(spec.n)]
    meta = {"converged": it.converged, "iterations": it.iterations, "last_step": it.last_step, "residual": it.residual}
    return Table(["spin", "species", "magnetization"], rows, meta)


def cmd_cavity_check(cfg: ExperimentConfig, seed: int, threads: int) -> Table:
    p = cfg.params
    n_list = p["n_list"] or [cfg.model.n]
    rows = []
    for s in _species_list(cfg):
        for r in cavity_study(cfg.model, n_list, s, p["k"], p["n_eta"], p["n_disorder"], seed, threads):
            rows.append([r.n, r.species, r.moment_field, r.moment_field_se, r.moment_onsager, r.moment_onsager_se])
    cols = ["n", "species", "moment_field", "moment_field_se", "moment_onsager", "moment_onsager_se"]
    return Table(cols, rows, {"k": p["k"], "n_eta": p["n_eta"], "n_disorder": p["n_disorder"]})


def cmd_concentration(cfg: ExperimentConfig, seed: int, threads: int) -> Table:
    p = cfg.params
    gamma = _default_gamma(cfg.model) if p["gamma"] is None else p["gamma"]
    op = solve_q(cfg.model)
    seeds = p["seeds"] or [seed]
    rows = []
    for n in p["n_list"] or [cfg.model.n]:
        spec = cfg.model.replace(n=n)
        for sd in seeds:
            r = concentration_bound_check(spec, build_layout(spec), op, gamma, p["n_disorder"], sd, threads)
            rows.append([n, sd, r.mean, r.stderr, r.bound, bool(r.passed)])
    meta = {"gamma": gamma, "gamma_max": max_gamma(cfg.model), "n_disorder": p["n_disorder"]}
    return Table(["n", "seed", "mean", "stderr", "bound", "passed"], rows, meta)


def cmd_scaling_study(cfg: ExperimentConfig, seed: int, threads: int, dry_run: bool = False) -> Table:
    p = cfg.params
    n_list = p["n_list"] or [128, 256, 512, 1024]
    chain = cfg.chain(ChainConfig(n_sweeps=2000, burn_in_sweeps=200), seed)
    if dry_run:
        jobs = plan_scaling_jobs(cfg.model, n_list, p["n_disorder"], seed)
        return Table(["n", "draw", "seed"], [list(j) for j in jobs], {"dry_run": True, "estimator": p["estimator"]})
    t = scaling_study(cfg.model, n_list, p["n_disorder"], p["estimator"], seed, chain, threads)
    cols = ["n", "moment_2", "moment_2_se", "moment_4", "moment_4_se", "debiased_moment_2", "debiased_moment_2_se"]
    rows = [[r.n, r.moment_2, r.moment_2_se, r.moment_4, r.moment_4_se, r.debiased_moment_2, r.debiased_moment_2_se]
            for r in t.rows]
    slope = "undefined" if t.slope is None else t.slope
    plugin = "undefined" if t.plugin_slope is None else t.plugin_slope
    return Table(cols, rows, {"slope": slope, "plugin_slope": plugin, "q": t.q, "estimator": t.estimator})


COMMANDS: dict[str, Callable[..., Table]] = {
    "beta-c": cmd_beta_c,
    "solve-q": cmd_solve_q,
    "sensitivity": cmd_sensitivity,
    "oracle": cmd_oracle,
    "mcmc": cmd_mcmc,
    "tap-check": cmd_tap_check,
    "tap-iterate": cmd_tap_iterate,
    "cavity-check": cmd_cavity_check,
    "concentration": cmd_concentration,
    "scaling-study": cmd_scaling_study,
}


def run(command: str, cfg: ExperimentConfig, seed: int | None = None, threads: int | None = None,
        dry_run: bool = False) -> RunReport:
    """Execute one subcommand and return its report."""
    if command not in COMMANDS:
        raise ValueError(f"unknown command {command!r}")
    if seed is None:
        seed = cfg.seed if cfg.seed is not None else rng.entropy_seed()
    seed = rng.check_seed(seed)
    threads = threads or default_threads()
    t0 = time.perf_counter()
    if command == "scaling-study":
        table = cmd_scaling_study(cfg, seed, threads, dry_run)
    else:
        table = COMMANDS[command](cfg, seed, threads)
    return RunReport(command, cfg.echo(seed), __version__, time.perf_counter() - t0, {"seed": seed}, table)


def format_csv(report: RunReport) -> str:
    buf = io.StringIO()
    buf.write(f"# msk-tap {report.version} {report.command}\n")
    buf.write(f"# seed: {report.seeds['seed']}\n")
    buf.write(f"# config_hash: {config_hash(report.config)}\n")
    for k, v in _jsonable(report.table.meta).items():
        buf.write(f"# {k}: {json.dumps(v)}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(report.table.columns)
    for row in report.table.rows:
        w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])
    return buf.getvalue()


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="msk-tap", description="Multi-species SK model: order parameters, Gibbs averages and TAP checks.")
    ap.add_argument("command", choices=sorted(COMMANDS))
    ap.add_argument("--config", required=True, help="JSON experiment config")
    ap.add_argument("--seed", type=int, default=None, help="overrides the config seed; random if neither is given")
    ap.add_argument("--threads", type=int, default=None, help="worker pool size (default: logical cores)")
    ap.add_argument("--out", default=None, help="CSV output path (default: config output, else stdout)")
    ap.add_argument("--json", action="store_true", help="also write the JSON run report (to OUT.json, or stdout)")
    ap.add_argument("--dry-run", action="store_true", help="scaling-study: print the planned jobs only")
    ap.add_argument("-v", "--verbose", action="store_true")
    return ap


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config)
        report = run(args.command, cfg, args.seed, args.threads, args.dry_run)
    except (MSKError, ValueError, KeyError) as exc:
        print(f"msk-tap: error: {exc}", file=sys.stderr)
        return 1
    text = format_csv(report)
    out = args.out or cfg.output
    if out:
        Path(out).write_text(text)
        if args.json:
            Path(out).with_suffix(Path(out).suffix + ".json").write_text(json.dumps(report.to_dict(), indent=2))
    elif args.json:
        print(json.dumps(report.to_dict(), indent=2))
    else:
        sys.stdout.write(text)
    return 0


if __name__ == "__main__":
    sys.exit(main())
