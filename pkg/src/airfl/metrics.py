"""Run artifacts: per-round metrics CSV, result summary JSON, checkpoints.

Floats are written with 17 significant digits so parsing the CSV back
reproduces the in-memory values exactly.
"""

from __future__ import annotations

import csv
import json

import numpy as np

from .config import config_to_dict
from .model import load_params, save_params  # noqa: F401  (checkpoint round-trip lives here)
from .orchestrator import ExperimentResult

BASE_COLUMNS = (
    "t",
    "test_accuracy",
    "train_loss",
    "scheduled_fraction",
    "max_cumulative_energy",
    "mean_gradient_power",
)


def _fmt(x: float) -> str:
    return f"{x:.17g}"


def write_metrics_csv(result: ExperimentResult, path: str,
                      include_queues: bool = False) -> None:
    n = result.config.num_workers
    header = list(BASE_COLUMNS)
    if include_queues:
        header += [f"q_{w}" for w in range(n)]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for rec in result.records:
            row = [
                str(rec.round),
                _fmt(rec.test_accuracy),
                _fmt(rec.train_loss),
                _fmt(rec.scheduled_fraction),
                _fmt(float(rec.cumulative_energy.max())),
                _fmt(rec.mean_gradient_power),
            ]
            if include_queues:
                row += [_fmt(float(q)) for q in rec.queue]
            writer.writerow(row)


def read_metrics_csv(path: str) -> dict[str, np.ndarray]:
    """Columns by name; 't' as int64, everything else float64."""
    with open(path, "r", newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        rows = list(reader)
    out: dict[str, np.ndarray] = {}
    for j, name in enumerate(header):
        values = [row[j] for row in rows]
        if name == "t":
            out[name] = np.array(values, dtype=np.int64)
        else:
            out[name] = np.array(values, dtype=np.float64)
    return out


def write_metrics_schema(path: str, num_workers: int, include_queues: bool) -> None:
    columns = [
        {"name": "t", "type": "int", "description": "round index"},
        {"name": "test_accuracy", "type": "float",
         "description": "test-set accuracy after the round's update; NaN on rounds skipped by eval_stride"},
        {"name": "train_loss", "type": "float",
         "description": "mean minibatch cross-entropy across workers"},
        {"name": "scheduled_fraction", "type": "float",
         "description": "fraction of workers that transmitted"},
        {"name": "max_cumulative_energy", "type": "float",
         "description": "max over workers of total transmit energy through this round, Joules"},
        {"name": "mean_gradient_power", "type": "float",
         "description": "mean over workers of the squared gradient norm"},
    ]
    if include_queues:
        columns += [
            {"name": f"q_{w}", "type": "float",
             "description": f"pre-decision virtual queue of worker {w}"}
            for w in range(num_workers)
        ]
    with open(path, "w", encoding="utf-8") as fh:
        json.dump({"columns": columns, "float_format": "%.17g"}, fh, indent=2)
        fh.write("\n")


def result_summary(result: ExperimentResult) -> dict:
    skips = sum(1 for r in result.records if r.update_skipped)
    return {
        "final_accuracy": result.final_accuracy,
        "final_train_loss": result.records[-1].train_loss,
        "mean_scheduled_fraction": result.mean_scheduled_fraction,
        "total_energy_per_worker": result.total_energy().tolist(),
        "rounds_without_update": skips,
        "duration_seconds": result.duration_seconds,
    }


def write_result_json(result: ExperimentResult, path: str) -> None:
    payload = {
        "config": config_to_dict(result.config),
        "summary": result_summary(result),
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2)
        fh.write("\n")
