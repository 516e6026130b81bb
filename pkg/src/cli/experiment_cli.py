"""
Experiment CLI - Command-line front end for analytic, simulation and optimization runs

Usage:
    python main.py analytic --discipline fcfs --a 1 --b 1 --lambda-s 1 --lambda-t 2 --mu-bar 4
    python main.py optimize --discipline lcfs --a 1 --b 1 --mu-bar 2
    python main.py sweep --config experiment.json --out results/
    python main.py check --suite appendix-a
"""

import argparse
import logging
import os
import sys
import time
from typing import Dict, List, Optional, Tuple

from ..core.error_laws import average_error
from ..core.errors import (ConfigError, FieldStatusError, InfeasibleGridError, RaggedGridError,
                           StabilityError)
from ..core.field_model import Discipline, SystemConfig, validate
from ..core.field_simulator import simulate_field_error
from ..core.random_streams import fresh_seed
from ..core.rate_optimizer import INFEASIBLE, optimize_fcfs, optimize_lcfs, sweep
from ..utils.config import RUN_KINDS, Config, ExperimentConfig
from .check_suites import SUITES
from .result_writer import ResultRow, emit_surface, package_versions, write_manifest, write_results

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_INFEASIBLE = 3
EXIT_CHECK_FAILED = 4

# flag destination -> dotted config path
FLAG_PATHS = {
    "a": "model.a",
    "b": "model.b",
    "lambda_s": "model.lambda_s",
    "lambda_t": "model.lambda_t",
    "mu_bar": "model.mu_bar",
    "mu": "model.mu",
    "length": "model.length",
    "discipline": "model.discipline",
    "scheduler": "model.scheduler",
    "seed": "simulation.seed",
    "horizon": "simulation.horizon",
    "warmup": "simulation.warmup",
    "probes": "simulation.probes",
    "replications": "simulation.replications",
    "sim_length": "simulation.sim_length",
    "channel_mode": "simulation.channel_mode",
    "workers": "simulation.workers",
    "suite": "check.suite",
    "out": "output.out_dir",
}


def build_parser() -> argparse.ArgumentParser:
    shared = argparse.ArgumentParser(add_help=False)
    shared.add_argument("--config", help="JSON experiment configuration file")
    shared.add_argument("--out", help="Output directory")
    shared.add_argument("--verbose", action="store_true", help="Debug logging")

    model = shared.add_argument_group("model")
    model.add_argument("--a", type=float, help="Temporal decay rate of the correlation (1/s)")
    model.add_argument("--b", type=float, help="Spatial decay rate of the correlation (1/m)")
    model.add_argument("--lambda-s", dest="lambda_s", type=float, help="Spatial sampling density (1/m)")
    model.add_argument("--lambda-t", dest="lambda_t", type=float, help="Per-point sampling rate (1/s)")
    service = model.add_mutually_exclusive_group()
    service.add_argument("--mu-bar", dest="mu_bar", type=float, help="Normalized service rate (1/(s*m))")
    service.add_argument("--mu", type=float, help="Channel service rate (1/s); needs --length")
    model.add_argument("--length", type=float, help="Region length L for --mu (m)")
    model.add_argument("--discipline", choices=["fcfs", "lcfs"])
    model.add_argument("--scheduler", choices=["ur", "rr"])

    simulation = shared.add_argument_group("simulation")
    simulation.add_argument("--seed", type=int)
    simulation.add_argument("--horizon", type=float)
    simulation.add_argument("--warmup", type=float)
    simulation.add_argument("--probes", type=int)
    simulation.add_argument("--replications", type=int)
    simulation.add_argument("--sim-length", dest="sim_length", type=float)
    simulation.add_argument("--channel-mode", dest="channel_mode", choices=["decoupled", "channel"])
    simulation.add_argument("--workers", type=int)

    parser = argparse.ArgumentParser(prog="field-status",
                                     description="Remote estimation error of a sampled random field")
    subparsers = parser.add_subparsers(dest="kind")
    for kind in RUN_KINDS:
        sub = subparsers.add_parser(kind, parents=[shared])
        if kind == "check":
            sub.add_argument("--suite", choices=sorted(SUITES))
    return parser


def load_config(args: argparse.Namespace) -> Config:
    """Defaults, then the config file, then command-line flags."""
    config = Config(args.config)
    if args.kind:
        config.set("run.kind", args.kind)
    for dest, path in FLAG_PATHS.items():
        value = getattr(args, dest, None)
        if value is not None:
            config.set(path, value)
    if args.mu is not None:
        config.set("model.mu_bar", None)
    if args.mu_bar is not None:
        config.set("model.mu", None)
    config.validate_config()
    return config


def _feasibility_line(config: SystemConfig) -> str:
    derived = validate(config, require_stability=False)
    line = f"mu0 = {derived.mu0:.6g}, rho0 = {derived.rho0:.6g}"
    if config.discipline is Discipline.FCFS:
        line += f", FCFS margin 1 - rho0 = {derived.fcfs_margin:.6g}"
    return line


def run_analytic(experiment: ExperimentConfig, out_dir: str) -> Tuple[int, List[ResultRow], Dict]:
    config, params = experiment.system_config(), experiment.correlation()
    print(_feasibility_line(config))
    row = ResultRow(config.lambda_s, config.lambda_t, None, None, None, config.discipline.value,
                    config.scheduler.value, None, None)
    try:
        summary = average_error(config, params)
    except StabilityError as e:
        print(f"Infeasible: {e} (FCFS needs lambda_s * lambda_t < mu_bar)")
        row.status = INFEASIBLE
        return EXIT_INFEASIBLE, [row], {}
    row.eps_analytic = summary.eps_bar
    if summary.diagnostics:
        row.status = "warned"
    print(f"eps = {summary.eps_bar:.10f} ({summary.method})")
    for name, value in summary.cross_checks.items():
        print(f"  {name}: {value:.10f}")
    return EXIT_OK, [row], {"method": summary.method, "diagnostics": summary.diagnostics}


def _analytic_or_none(config: SystemConfig, params, sim_length: float) -> Optional[float]:
    try:
        return average_error(config.with_rates(region_length=sim_length, mu=None), params).eps_bar
    except FieldStatusError as e:
        logger.info(f"No analytic value at lambda_s={config.lambda_s:g}, lambda_t={config.lambda_t:g}: {e}")
        return None


def run_simulate(experiment: ExperimentConfig, out_dir: str) -> Tuple[int, List[ResultRow], Dict]:
    template, params = experiment.system_config(), experiment.correlation()
    sim = experiment.simulation
    spatial, temporal = experiment.sweep_axes()
    rows, runs = [], []
    for lambda_s in spatial or [template.lambda_s]:
        for lambda_t in temporal or [template.lambda_t]:
            config = template.with_rates(lambda_s=lambda_s, lambda_t=lambda_t)
            row = ResultRow(lambda_s, lambda_t, None, None, None, config.discipline.value,
                            config.scheduler.value, sim.seed, sim.replications)
            if not validate(config, require_stability=False).stable:
                row.status = INFEASIBLE
                rows.append(row)
                continue
            result = simulate_field_error(
                config, params, sim.sim_length, probes=sim.probes, horizon=sim.horizon, warmup=sim.warmup,
                replications=sim.replications, seed=sim.seed, channel_mode=sim.channel_mode,
                edge_mode=sim.edge_mode, workers=sim.workers, s_values=sim.lst_points,
            )
            row.eps_analytic = _analytic_or_none(config, params, sim.sim_length)
            row.eps_sim_mean, row.eps_sim_ci95 = result.eps_hat, result.ci95
            row.status = "warned" if result.warnings else "ok"
            print(f"lambda_s={lambda_s:g} lambda_t={lambda_t:g}: eps_sim = {result.eps_hat:.6f} "
                  f"+/- {result.ci95:.6f}" + ("" if row.eps_analytic is None else
                                              f", eps_analytic = {row.eps_analytic:.6f}"))
            rows.append(row)
            runs.append(result.manifest)
    return EXIT_OK, rows, {"simulations": runs}


def run_optimize(experiment: ExperimentConfig, out_dir: str) -> Tuple[int, List[ResultRow], Dict]:
    template, params = experiment.system_config(), experiment.correlation()
    try:
        if template.discipline is Discipline.FCFS:
            result = optimize_fcfs(params, template.mu_bar, experiment.search_options())
        else:
            result = optimize_lcfs(params, template.mu_bar, experiment.optimize.within)
    except InfeasibleGridError as e:
        print(f"Infeasible: {e}")
        return EXIT_INFEASIBLE, [], {}
    lambda_t = "inf" if result.unbounded_lambda_t else f"{result.lambda_t_star:.6g}"
    print(f"lambda_s* = {result.lambda_s_star:.6g}, lambda_t* = {lambda_t}, eps* = {result.eps_star:.10f} "
          f"({result.method}, {result.evaluations} evaluations)")
    if result.practical_lambda_t is not None:
        print(f"practical lambda_t (within {experiment.optimize.within:.0%} of eps*) = "
              f"{result.practical_lambda_t:.6g}")
    for lambda_s, lambda_t_min, eps in result.local_minima[1:]:
        print(f"  other local minimum: lambda_s={lambda_s:.6g}, lambda_t={lambda_t_min:.6g}, eps={eps:.10f}")
    row = ResultRow(result.lambda_s_star, result.lambda_t_star, result.eps_star, None, None,
                    template.discipline.value, template.scheduler.value, None, None)
    return EXIT_OK, [row], {"optimum": result.to_dict()}


def run_sweep(experiment: ExperimentConfig, out_dir: str) -> Tuple[int, List[ResultRow], Dict]:
    template, params = experiment.system_config(), experiment.correlation()
    spatial, temporal = experiment.sweep_axes()
    points = sweep(template, params, spatial, temporal)
    surface = emit_surface(points, os.path.join(out_dir, "surface.csv"))
    rows = [ResultRow(p.lambda_s, p.lambda_t, p.eps, None, None, template.discipline.value,
                      template.scheduler.value, None, None, p.status) for p in points]
    print(f"{len(points)} nodes written to {surface}")
    return EXIT_OK, rows, {"surface": surface}


def run_check(experiment: ExperimentConfig, out_dir: str) -> Tuple[int, List[ResultRow], Dict]:
    suite = experiment.check.suite
    if suite == "identities":
        report = SUITES[suite](experiment.simulation.seed or 0)
    else:
        report = SUITES[suite](experiment.check.seeds, experiment.check.horizon)
    for outcome in report.outcomes:
        print(f"[{'PASS' if outcome.passed else 'FAIL'}] {outcome.name}: {outcome.detail}")
    details = {"suite": suite, "checks": [vars(outcome) for outcome in report.outcomes]}
    return (EXIT_OK if report.passed else EXIT_CHECK_FAILED), [], details


HANDLERS = {
    "analytic": run_analytic,
    "simulate": run_simulate,
    "optimize": run_optimize,
    "sweep": run_sweep,
    "check": run_check,
}


def run(argv: Optional[List[str]] = None) -> int:
    """
    Execute one experiment and write its artifacts.

    Returns:
        Exit status: 0 ok, 2 configuration error, 3 infeasible request,
        4 failed check
    """
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if getattr(args, "verbose", False) else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.kind is None:
        parser.print_help()
        return EXIT_CONFIG
    try:
        config = load_config(args)
        experiment = config.experiment()
        kind = experiment.run.kind
        if kind == "simulate" and experiment.simulation.seed is None:
            seed = fresh_seed()
            config.set("simulation.seed", seed)
            experiment = config.experiment()
            print(f"*** No seed given; using seed {seed} ***")

        out_dir = experiment.output.out_dir
        started = time.time()
        status, rows, details = HANDLERS[kind](experiment, out_dir)
        wall_time = time.time() - started

        os.makedirs(out_dir, exist_ok=True)
        outputs = []
        if rows:
            outputs.append(write_results(rows, os.path.join(out_dir, "results.csv")))
        config_path = os.path.join(out_dir, "config.json")
        config.export_config(config_path)
        outputs.append(config_path)
        write_manifest(os.path.join(out_dir, "manifest.json"), {
            "kind": kind,
            "exit_status": status,
            "config": config.settings,
            "seed": experiment.simulation.seed,
            "versions": package_versions(),
            "wall_time_s": wall_time,
            "outputs": outputs,
            "details": details,
        })
        return status
    except (ConfigError, RaggedGridError) as e:
        print(f"Configuration error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except (StabilityError, InfeasibleGridError) as e:
        print(f"Infeasible: {e}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except FieldStatusError as e:
        print(f"Error: {e}", file=sys.stderr)
        return EXIT_CONFIG


def main():
    """Console entry point."""
    sys.exit(run())
