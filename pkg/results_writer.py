#!/usr/bin/env python3
"""
Results Writer for the iKnap Simulator

Writes sweep results as CSV files (floats in repr form so they parse back
exactly) plus optional SVG charts, reads them back, and audits the epoch
logs for bandwidth violations.

Files in the output directory:
    trials.csv             one row per trial, deterministic columns only
    runtimes.csv           wall-clock optimizer times per trial
    epochs.csv             one row per communication epoch
    aggregate.csv          per (value, scheme) means computed from trials.csv
    runtime_aggregate.csv  per (value, scheme) optimizer time statistics
    <parameter>.svg        mean +/- standard error per scheme
"""

import os
import csv
import logging
from typing import Any, Dict, List, Sequence, Tuple

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt

from comms_infrastructure import EpochLog
from experiment_harness import TrialResult, aggregate, runtime_aggregate

# Set up logging
logging.basicConfig(
    level=logging.INFO,
    format='%(asctime)s - %(name)s - %(levelname)s - %(message)s'
)
logger = logging.getLogger('results_writer')

KEY_COLUMNS = ["parameter", "value", "value_index", "scheme", "trial_index", "seed"]
TRIAL_COLUMNS = KEY_COLUMNS + [
    "config_digest", "status", "error", "makespan", "timed_out", "agents_finished",
    "agent_subject_collisions", "agent_agent_collisions", "epochs", "mean_bandwidth_used",
    "max_bandwidth_used", "bandwidth_limit", "total_deliveries", "delivered_utility",
]
RUNTIME_COLUMNS = KEY_COLUMNS + ["mean_optimizer_time", "max_optimizer_time"]
EPOCH_COLUMNS = KEY_COLUMNS + [
    "time", "candidate_count", "chosen_count", "deliveries", "bandwidth_used",
    "bandwidth_limit", "optimizer_time", "delivered_utility",
]
AGGREGATE_COLUMNS = [
    "parameter", "value", "value_index", "scheme", "trials", "failed", "completion_rate",
    "mean_makespan", "stderr_makespan", "mean_completed_makespan", "mean_agent_subject_collisions",
    "mean_agent_agent_collisions", "mean_bandwidth_used", "mean_deliveries",
]
RUNTIME_AGGREGATE_COLUMNS = [
    "parameter", "value", "value_index", "scheme", "trials",
    "mean_optimizer_time", "stderr_optimizer_time", "max_optimizer_time",
]

INT_FIELDS = {
    "value_index", "trial_index", "seed", "agents_finished", "agent_subject_collisions",
    "agent_agent_collisions", "epochs", "max_bandwidth_used", "bandwidth_limit", "total_deliveries",
    "candidate_count", "chosen_count", "deliveries", "bandwidth_used",
}
FLOAT_FIELDS = {
    "makespan", "mean_bandwidth_used", "delivered_utility", "mean_optimizer_time",
    "max_optimizer_time", "time", "optimizer_time",
}


def format_cell(value: Any) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _parse_value(text: str) -> Any:
    """Sweep values come back as int, float or plain text"""
    for kind in (int, float):
        try:
            return kind(text)
        except ValueError:
            continue
    return text


def _parse(name: str, text: str) -> Any:
    if name in INT_FIELDS:
        return int(text)
    if name in FLOAT_FIELDS:
        return float(text)
    if name == "timed_out":
        return text == "true"
    if name == "value":
        return _parse_value(text)
    return text


def _ordered(results: Sequence[TrialResult]) -> List[TrialResult]:
    return sorted(results, key=lambda r: (r.value_index, r.scheme, r.trial_index))


def _write_csv(path: str, columns: List[str], rows: List[Dict[str, Any]]):
    try:
        with open(path, "w", newline="", encoding="utf-8") as f:
            writer = csv.writer(f, lineterminator="\n")
            writer.writerow(columns)
            for row in rows:
                writer.writerow([format_cell(row[c]) for c in columns])
    except OSError as e:
        raise OSError(f"Cannot write results file {path}: {str(e)}") from e
    logger.info(f"Wrote {len(rows)} rows to {path}")


def _read_csv(path: str) -> List[Dict[str, str]]:
    try:
        with open(path, "r", newline="", encoding="utf-8") as f:
            return list(csv.DictReader(f))
    except OSError as e:
        raise OSError(f"Cannot read results file {path}: {str(e)}") from e


def _key_row(result: TrialResult) -> Dict[str, Any]:
    return {c: getattr(result, c) for c in KEY_COLUMNS}


def write_chart(parameter: str, rows: List[Dict[str, Any]], runtime_rows: List[Dict[str, Any]], path: str):
    """Makespan and optimizer time per scheme against the swept value, as SVG"""
    numeric = all(isinstance(r["value"], (int, float)) for r in rows)
    fig, (ax_makespan, ax_runtime) = plt.subplots(1, 2, figsize=(10, 4))
    for panel, data, column, label in ((ax_makespan, rows, "makespan", "makespan (s)"),
                                       (ax_runtime, runtime_rows, "optimizer_time", "optimizer time (s)")):
        for scheme in sorted({r["scheme"] for r in data}):
            points = [r for r in data if r["scheme"] == scheme]
            xs = [r["value"] if numeric else r["value_index"] for r in points]
            panel.errorbar(xs, [r[f"mean_{column}"] for r in points],
                           yerr=[r[f"stderr_{column}"] for r in points],
                           marker="o", capsize=3, label=scheme)
        panel.set_xlabel(parameter)
        panel.set_ylabel(label)
        panel.grid(True, alpha=0.3)
    ax_makespan.legend()
    if not numeric:
        labels = [str(r["value"]) for r in rows if r["scheme"] == rows[0]["scheme"]]
        for panel in (ax_makespan, ax_runtime):
            panel.set_xticks(range(len(labels)))
            panel.set_xticklabels(labels)
    fig.tight_layout()
    try:
        fig.savefig(path, format="svg")
    except OSError as e:
        raise OSError(f"Cannot write chart {path}: {str(e)}") from e
    finally:
        plt.close(fig)
    logger.info(f"Saved chart to {path}")


def write_results(results: Sequence[TrialResult], out_dir: str, charts: bool = True) -> Dict[str, str]:
    """
    Write every results file for a list of trials

    Args:
        results (list): TrialResult rows, any order
        out_dir (str): output directory, created if missing
        charts (bool): also draw <parameter>.svg

    Returns:
        dict: file kind -> path written

    Raises:
        OSError: with the offending path when a file cannot be written
    """
    try:
        os.makedirs(out_dir, exist_ok=True)
    except OSError as e:
        raise OSError(f"Cannot create output directory {out_dir}: {str(e)}") from e

    ordered = _ordered(results)
    paths = {
        "trials": os.path.join(out_dir, "trials.csv"),
        "runtimes": os.path.join(out_dir, "runtimes.csv"),
        "epochs": os.path.join(out_dir, "epochs.csv"),
        "aggregate": os.path.join(out_dir, "aggregate.csv"),
        "runtime_aggregate": os.path.join(out_dir, "runtime_aggregate.csv"),
    }

    _write_csv(paths["trials"], TRIAL_COLUMNS, [{c: getattr(r, c) for c in TRIAL_COLUMNS} for r in ordered])
    _write_csv(paths["runtimes"], RUNTIME_COLUMNS, [{c: getattr(r, c) for c in RUNTIME_COLUMNS} for r in ordered])
    epoch_rows = []
    for r in ordered:
        for log in r.epoch_logs:
            row = _key_row(r)
            row.update({c: getattr(log, c) for c in EPOCH_COLUMNS if c not in KEY_COLUMNS})
            epoch_rows.append(row)
    _write_csv(paths["epochs"], EPOCH_COLUMNS, epoch_rows)

    summary = aggregate(ordered)
    runtime_summary = runtime_aggregate(ordered)
    _write_csv(paths["aggregate"], AGGREGATE_COLUMNS, summary)
    _write_csv(paths["runtime_aggregate"], RUNTIME_AGGREGATE_COLUMNS, runtime_summary)

    if charts and summary:
        parameter = summary[0]["parameter"] or "trial"
        paths["chart"] = os.path.join(out_dir, f"{parameter}.svg")
        write_chart(parameter, summary, runtime_summary, paths["chart"])
    return paths


def read_results(out_dir: str) -> List[TrialResult]:
    """
    Parse trials.csv, runtimes.csv and epochs.csv back into TrialResult rows

    Returns:
        list: rows in file order, with epoch logs attached
    """
    results = []
    for row in _read_csv(os.path.join(out_dir, "trials.csv")):
        results.append(TrialResult(**{c: _parse(c, row[c]) for c in TRIAL_COLUMNS}))
    index = {(r.value_index, r.scheme, r.trial_index): r for r in results}

    runtimes_path = os.path.join(out_dir, "runtimes.csv")
    if os.path.exists(runtimes_path):
        for row in _read_csv(runtimes_path):
            target = index[(int(row["value_index"]), row["scheme"], int(row["trial_index"]))]
            target.mean_optimizer_time = float(row["mean_optimizer_time"])
            target.max_optimizer_time = float(row["max_optimizer_time"])

    epochs_path = os.path.join(out_dir, "epochs.csv")
    if os.path.exists(epochs_path):
        for row in _read_csv(epochs_path):
            target = index[(int(row["value_index"]), row["scheme"], int(row["trial_index"]))]
            target.epoch_logs.append(EpochLog(
                scheme=row["scheme"],
                **{c: _parse(c, row[c]) for c in EPOCH_COLUMNS if c not in KEY_COLUMNS},
            ))
    return results


def audit_epochs(path: str) -> Tuple[int, List[Dict[str, str]]]:
    """
    Re-check the bandwidth budget of every logged epoch

    Args:
        path (str): an epochs.csv file

    Returns:
        tuple: (epochs checked, rows where bandwidth_used > bandwidth_limit)
    """
    rows = _read_csv(path)
    violations = [r for r in rows if int(r["bandwidth_used"]) > int(r["bandwidth_limit"])]
    if violations:
        logger.error(f"{len(violations)} of {len(rows)} epochs in {path} exceed the bandwidth limit")
    else:
        logger.info(f"All {len(rows)} epochs in {path} respect the bandwidth limit")
    return len(rows), violations


if __name__ == "__main__":
    import sys
    target = sys.argv[1] if len(sys.argv) > 1 else "results"
    try:
        table = read_results(target)
        checked, bad = audit_epochs(os.path.join(target, "epochs.csv"))
        print(f"{len(table)} trials, {checked} epochs, {len(bad)} bandwidth violations")
    except OSError as e:
        print(f"Error: {str(e)}")
