#!/usr/bin/env python3
"""
iKnap Simulator Command Line

Subcommands:
    run        one trial per requested scheme, printed as JSON
    sweep      one or more sweep files (JSON), written as CSV + SVG
    oracle     brute-force verification suites, JSON report, non-zero exit on failure
    calibrate  empirical kappa normaliser from seeded IKNAP trials

Every ScenarioConfig field is also a flag (--n-agents, --bandwidth-limit, ...)
and overrides the scenario file and IKNAP_<FIELD> environment variables.
"""

import os
import sys
import json
import time
import logging
import argparse
import dataclasses
from datetime import datetime
from typing import Any, Dict, List, Optional

from config_loader import ConfigError, ScenarioConfig, load_config

# Set up logging
logging.basicConfig(
    level=logging.INFO,
    format='%(asctime)s - %(name)s - %(levelname)s - %(message)s'
)
logger = logging.getLogger('run_experiments')

DEFAULT_OUT = "results"
LOG_NAME = "iknap_sim.log"


def attach_file_log(out_dir: str):
    """Mirror every log record into <out_dir>/iknap_sim.log"""
    os.makedirs(out_dir, exist_ok=True)
    handler = logging.FileHandler(os.path.join(out_dir, LOG_NAME))
    handler.setFormatter(logging.Formatter('%(asctime)s - %(name)s - %(levelname)s - %(message)s'))
    logging.getLogger().addHandler(handler)
    return handler


def record_error(out_dir: str, message: str):
    try:
        os.makedirs(out_dir, exist_ok=True)
        with open(os.path.join(out_dir, "error_log.txt"), "a") as f:
            f.write(f"Error on {datetime.now().strftime('%Y-%m-%d %H:%M:%S')}: {message}\n")
    except OSError as e:
        logger.error(f"Could not record error in {out_dir}: {str(e)}")


def record_success(out_dir: str, command: str, details: List[str]):
    with open(os.path.join(out_dir, "last_successful_run.txt"), "w") as f:
        f.write(f"Last successful run: {datetime.now().strftime('%Y-%m-%d %H:%M:%S')}\n")
        f.write(f"Command: {command}\n")
        for line in details:
            f.write(f"{line}\n")


def config_overrides(args: argparse.Namespace) -> Dict[str, Any]:
    overrides = {}
    for f in dataclasses.fields(ScenarioConfig):
        value = getattr(args, f.name, None)
        if value is not None:
            overrides[f.name] = value
    if getattr(args, "pairwise_bandwidth_range", None):
        overrides["pairwise_bandwidth_range"] = args.pairwise_bandwidth_range
    return overrides


def scenario_config(args: argparse.Namespace) -> ScenarioConfig:
    return load_config(args.config, overrides=config_overrides(args), use_env=not args.no_env)


def run_single(args: argparse.Namespace) -> bool:
    """Run one trial per scheme and print the results rows"""
    from comms_infrastructure import SchemeKind
    from experiment_harness import run_trial
    from results_writer import TRIAL_COLUMNS, write_results

    config = scenario_config(args)
    schemes = list(SchemeKind) if args.scheme.lower() == "all" else [SchemeKind.parse(args.scheme)]
    results = []
    for scheme in schemes:
        logger.info(f"Running {scheme.name} trial with seed {config.seed}")
        result = run_trial(config, scheme)
        results.append(result)
        row = {c: getattr(result, c) for c in TRIAL_COLUMNS}
        row["mean_optimizer_time"] = result.mean_optimizer_time
        print(json.dumps(row, indent=2))

    write_results(results, args.out, charts=False)
    record_success(args.out, "run", [f"Seed: {config.seed}"] +
                   [f"{r.scheme}: makespan {r.makespan:.2f} s, deliveries {r.total_deliveries}" for r in results])
    return True


def run_sweeps(args: argparse.Namespace) -> bool:
    """Run every sweep file and write one results directory per sweep"""
    from experiment_harness import SweepSpec, paired_improvement, run_sweep
    from results_writer import audit_epochs, write_results

    overrides = config_overrides(args)
    summary = []
    for path in args.sweep_files:
        spec = SweepSpec.from_file(path, fast=args.fast)
        if overrides:
            spec = dataclasses.replace(spec, base_config=spec.base_config.with_updates(**overrides))
        results = run_sweep(spec, workers=args.workers)
        target = os.path.join(args.out, spec.name)
        paths = write_results(results, target, charts=not args.no_charts)

        checked, violations = audit_epochs(paths["epochs"])
        if violations:
            raise AssertionError(f"{len(violations)} epochs of sweep '{spec.name}' exceed the bandwidth limit")

        names = {s.name for s in spec.schemes}
        if {"IKNAP", "NO_COMM"} <= names:
            for value_index, gain in paired_improvement(results, "IKNAP", "NO_COMM").items():
                logger.info(f"{spec.name}[{spec.values[value_index]}]: IKNAP vs NO_COMM paired makespan "
                            f"reduction {100.0 * gain:.1f}%")
        failed = sum(1 for r in results if not r.ok)
        summary.append(f"Sweep {spec.name}: {len(results)} trials ({failed} failed), {checked} epochs audited -> {target}")
        logger.info(summary[-1])

    record_success(args.out, "sweep", summary)
    return True


def run_oracle(args: argparse.Namespace) -> bool:
    """Run the oracle suites; the return value is the overall verdict"""
    from oracle_suite import run_oracles

    report = run_oracles(args.suite, fast=args.fast)
    text = json.dumps(report, indent=2)
    print(text)
    with open(os.path.join(args.out, "oracle_report.json"), "w", encoding="utf-8") as f:
        f.write(text)
    if report["passed"]:
        record_success(args.out, "oracle", [f"{s['name']}: PASS" for s in report["suites"]])
    else:
        failed = [s["name"] for s in report["suites"] if not s["passed"]]
        record_error(args.out, f"Oracle suites failed: {', '.join(failed)}")
    return report["passed"]


def run_calibration(args: argparse.Namespace) -> bool:
    """Print the empirical kappa_scale for the current configuration"""
    from experiment_harness import calibrate_kappa_scale

    config = scenario_config(args)
    scale = calibrate_kappa_scale(config, trials=args.trials, base_seed=config.seed)
    print(f"kappa_scale={scale!r}")
    record_success(args.out, "calibrate", [f"kappa_scale={scale!r}", f"Trials: {args.trials}"])
    return True


def _add_config_flags(parser: argparse.ArgumentParser):
    group = parser.add_argument_group("scenario overrides")
    for f in dataclasses.fields(ScenarioConfig):
        kind = int if f.type in (int, "int") else float
        group.add_argument(f"--{f.name.replace('_', '-')}", dest=f.name, type=kind, default=None,
                           help=f"{f.name} (default {f.default})")
    group.add_argument("--pairwise-bandwidth-range", dest="pairwise_bandwidth_range", default=None,
                       help="LOW,HIGH integer cost range (sets bandwidth_min and bandwidth_max)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(description="Bandwidth-constrained observation sharing simulator")
    subparsers = parser.add_subparsers(dest="command", required=True)

    def common(sub: argparse.ArgumentParser):
        sub.add_argument("--config", default=None, help="scenario file (key=value)")
        sub.add_argument("--out", default=DEFAULT_OUT, help="output directory")
        sub.add_argument("--no-env", action="store_true", help="ignore IKNAP_<FIELD> environment variables")
        _add_config_flags(sub)

    run = subparsers.add_parser("run", help="run a single trial")
    run.add_argument("--scheme", default="IKNAP", help="IKNAP, BROADCAST_BASELINE, NO_COMM or all")
    common(run)

    sweep = subparsers.add_parser("sweep", help="run sweep files")
    sweep.add_argument("sweep_files", nargs="+", help="JSON sweep specifications")
    sweep.add_argument("--fast", action="store_true", help="cap trials per value at 20")
    sweep.add_argument("--workers", type=int, default=1, help="worker processes")
    sweep.add_argument("--no-charts", action="store_true", help="skip SVG charts")
    common(sweep)

    oracle = subparsers.add_parser("oracle", help="run verification suites")
    oracle.add_argument("--suite", action="append", default=None, help="suite name (repeatable)")
    oracle.add_argument("--fast", action="store_true", help="reduced suite sizes")
    oracle.add_argument("--out", default=DEFAULT_OUT, help="output directory")

    calibrate = subparsers.add_parser("calibrate", help="estimate kappa_scale")
    calibrate.add_argument("--trials", type=int, default=20, help="number of seeded trials")
    common(calibrate)
    return parser


COMMANDS = {
    "run": run_single,
    "sweep": run_sweeps,
    "oracle": run_oracle,
    "calibrate": run_calibration,
}


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    handler = attach_file_log(args.out)
    start_time = time.time()
    logger.info(f"Starting '{args.command}'")
    try:
        ok = COMMANDS[args.command](args)
        elapsed_time = time.time() - start_time
        logger.info(f"'{args.command}' finished in {elapsed_time:.2f} seconds")
        return 0 if ok else 1
    except ConfigError as e:
        logger.error(f"Configuration error: {str(e)}")
        record_error(args.out, str(e))
        return 2
    except Exception as e:
        logger.error(f"Error in '{args.command}': {str(e)}")
        record_error(args.out, str(e))
        return 1
    finally:
        logging.getLogger().removeHandler(handler)
        handler.close()


if __name__ == "__main__":
    sys.exit(main())
