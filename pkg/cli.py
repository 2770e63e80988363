"""
Command-line entry point for the MesoClosure Engine.

    python cli.py close --config experiment.json --out results/
    python cli.py sweep-eta --config sweep.json --workers 4
"""

import argparse
import logging
import sys
from typing import List, Optional

import pandas as pd

from closure_engine.chain_dynamics import export_energy, export_trajectory
from closure_engine.config import ExperimentConfig, config
from closure_engine.errors import ClosureEngineError, ConfigError
from closure_engine.experiment_runner import ExperimentRunner
from closure_engine.regularization import singular_value_table
from closure_engine.report_generator import ReportGenerator

logger = logging.getLogger("closure_engine.cli")

EXIT_OK = 0
EXIT_RUN_FAILED = 1
EXIT_CONFIG_ERROR = 2


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="closure-engine",
        description="Regularized deconvolution closure for a periodic Lennard-Jones chain",
    )
    parser.add_argument("--config", help="experiment configuration (JSON)")
    parser.add_argument("--out", help="output directory for CSV files and the manifest")
    parser.add_argument("--workers", type=int, help="concurrent runs in sweeps")
    parser.add_argument("--log-level", default=None, help="override LOG_LEVEL")

    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("simulate", help="run molecular dynamics and export the trajectory")
    close = sub.add_parser("close", help="run the closure pipeline for one configuration")
    close.add_argument("--fields", action="store_true", help="also export per-snapshot field tables")
    sub.add_parser("sweep-window", help="one run per window function")
    sub.add_parser("sweep-eta", help="one run per resolution parameter")
    sub.add_parser("sweep-n", help="one run per particle count")
    spectra = sub.add_parser("spectra", help="exact vs reconstructed Fourier spectra")
    spectra.add_argument("--time", type=float, default=0.9, help="snapshot time (default 0.9)")
    bounds = sub.add_parser("bounds", help="error bounds next to observed errors")
    bounds.add_argument("--p", type=float, default=2.0, help="norm exponent p")
    bounds.add_argument("--q", type=float, default=2.0, help="Holder exponent q")
    return parser


def load_experiment(args: argparse.Namespace) -> ExperimentConfig:
    experiment = ExperimentConfig.from_json(args.config) if args.config else ExperimentConfig()
    overrides = {}
    if args.out:
        overrides["output_dir"] = args.out
    if args.workers is not None:
        overrides["workers"] = args.workers
    return experiment.with_overrides(**overrides) if overrides else experiment


def _single_runs(experiment: ExperimentConfig) -> List[ExperimentConfig]:
    return experiment.expand() if experiment.is_sweep else [experiment]


def run_command(args: argparse.Namespace, experiment: ExperimentConfig) -> int:
    runner = ExperimentRunner(keep_fields=getattr(args, "fields", False))
    generator = ReportGenerator(experiment.output_path())
    resolved = experiment.resolved()

    if args.command == "simulate":
        output = experiment.output_path()
        output.mkdir(parents=True, exist_ok=True)
        runs = {run.N: run for run in _single_runs(experiment)}
        for n, run in runs.items():
            trajectory = runner.trajectory(run)
            export_trajectory(trajectory, output / f"trajectory_{run.test_case}_N{n}.csv")
            export_energy(trajectory, output / f"energy_{run.test_case}_N{n}.csv")
            absolute, relative = trajectory.energy_deviation()
            logger.info(f"N={n}: energy deviation {absolute:.3e} ({relative:.2e} relative)")
        generator.emit_reports([], resolved)
        return EXIT_OK

    if args.command == "close":
        runs = _single_runs(experiment)
        reports = runner.run_all(runs)
        spectrum = pd.DataFrame(singular_value_table(runner.system(runs[0])), columns=["j", "sigma"])
        generator.emit_reports(reports, resolved, {"singular_values": spectrum})
    elif args.command in ("sweep-window", "sweep-eta", "sweep-n"):
        method = {
            "sweep-window": runner.sweep_window,
            "sweep-eta": runner.sweep_eta,
            "sweep-n": runner.sweep_scale,
        }[args.command]
        reports = method(experiment)
        generator.emit_reports(reports, resolved)
    elif args.command == "spectra":
        result = runner.spectra_report(_single_runs(experiment)[0], args.time)
        frames = {f"spectrum_{name}_t{result.t:g}": frame for name, frame in result.frames.items()}
        frames["singular_values"] = pd.DataFrame(result.singular_values, columns=["j", "sigma"])
        manifest = generator.emit_reports([], resolved, frames)
        manifest["k_match"] = result.k_match
        generator.write_manifest(manifest)
        logger.info(f"Matched modes at t={result.t:g}: {result.k_match}")
        return EXIT_OK
    else:
        frame = runner.bounds_report(_single_runs(experiment)[0], p=args.p, q=args.q)
        generator.emit_reports([], resolved, {"bounds": frame})
        return EXIT_OK

    failed = [r for r in reports if r.error]
    for report in failed:
        logger.error(f"Run {report.label} failed: {report.error}")
    return EXIT_RUN_FAILED if failed else EXIT_OK


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    level = (args.log_level or config.log_level).upper()
    logging.basicConfig(level=getattr(logging, level, logging.INFO), format=config.log_format)
    logger.info(f"Closure engine configuration: {config.to_dict()}")

    try:
        experiment = load_experiment(args)
    except ConfigError as e:
        logger.error(f"Configuration error: {str(e)}")
        return EXIT_CONFIG_ERROR

    try:
        return run_command(args, experiment)
    except ConfigError as e:
        logger.error(f"Configuration error: {str(e)}")
        return EXIT_CONFIG_ERROR
    except ClosureEngineError as e:
        logger.error(f"Command {args.command} failed: {str(e)}")
        return EXIT_RUN_FAILED


if __name__ == "__main__":
    sys.exit(main())
