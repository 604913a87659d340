"""Command-line front end.

    airfl run           --config cfg.json --out results/
    airfl sweep         --config cfg.json --axis redundancy --values 1,2,3 --out sweep/
    airfl verify-bounds --instances 100 --seed 7

Exit codes: 0 success, 1 bound/assertion failure, 2 usage or I/O error.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys

import numpy as np

from . import metrics, oracle
from .config import ConfigError, ExperimentConfig, ModelSpec, load_config
from .data import DatasetError
from .orchestrator import run_experiment


def _apply_overrides(cfg: ExperimentConfig, args: argparse.Namespace) -> ExperimentConfig:
    updates = {}
    if getattr(args, "seed", None) is not None:
        updates["master_seed"] = args.seed
    if getattr(args, "eval_stride", None) is not None:
        updates["eval_stride"] = args.eval_stride
    return dataclasses.replace(cfg, **updates) if updates else cfg


def _run_one(cfg: ExperimentConfig, out_dir: str, threads: int,
             include_queues: bool) -> dict:
    os.makedirs(out_dir, exist_ok=True)
    result = run_experiment(cfg, threads=threads)
    metrics.write_metrics_csv(result, os.path.join(out_dir, "metrics.csv"),
                              include_queues=include_queues)
    metrics.write_metrics_schema(os.path.join(out_dir, "metrics.schema.json"),
                                 cfg.num_workers, include_queues)
    metrics.write_result_json(result, os.path.join(out_dir, "result.json"))
    metrics.save_params(result.final_params, os.path.join(out_dir, "checkpoint.bin"))
    return metrics.result_summary(result)


def cmd_run(args: argparse.Namespace) -> int:
    try:
        cfg = _apply_overrides(load_config(args.config), args)
        summary = _run_one(cfg, args.out, args.threads, args.queues)
    except (ConfigError, DatasetError, FileNotFoundError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    print(f"final_accuracy={summary['final_accuracy']:.4f} "
          f"mean_scheduled_fraction={summary['mean_scheduled_fraction']:.4f} "
          f"out={args.out}")
    return 0


_AXES = {
    "redundancy": ("redundancy", int),
    "budget": ("energy_budget", float),
    "policy": ("policy", str),
}


def cmd_sweep(args: argparse.Namespace) -> int:
    field_name, cast = _AXES[args.axis]
    values = [cast(v) for v in args.values.split(",") if v != ""]
    if not values:
        print("error: empty sweep axis", file=sys.stderr)
        return 2
    try:
        base = _apply_overrides(load_config(args.config), args)
        os.makedirs(args.out, exist_ok=True)
        rows = []
        for value in values:
            cfg = dataclasses.replace(base, **{field_name: value})
            sub = os.path.join(args.out, f"{args.axis}_{value}")
            summary = _run_one(cfg, sub, args.threads, args.queues)
            rows.append({"value": value, **summary})
    except (ConfigError, DatasetError, FileNotFoundError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2

    with open(os.path.join(args.out, "sweep_summary.json"), "w", encoding="utf-8") as fh:
        json.dump({"axis": args.axis, "points": rows}, fh, indent=2)
        fh.write("\n")
    print(f"{args.axis:>12}  final_accuracy  mean_scheduled_fraction")
    for row in rows:
        print(f"{row['value']!s:>12}  {row['final_accuracy']:14.4f}  "
              f"{row['mean_scheduled_fraction']:23.4f}")
    return 0


def _verification_config(rng: np.random.Generator, seed: int) -> ExperimentConfig:
    """A tiny randomized run that produces realistic energy traces fast."""
    num_workers = int(rng.integers(1, 4))
    return ExperimentConfig(
        num_workers=num_workers,
        num_subchannels=int(rng.integers(2, 5)),
        num_rounds=int(rng.integers(8, 17)),
        redundancy=1,
        energy_budget=float(np.exp(rng.normal(np.log(0.2), 1.0))),
        queue_floor=0.0,
        policy="Dynamic",
        data_mode="IID",
        master_seed=seed,
        model_spec=ModelSpec(layer_sizes=(6, 4, 3), dropout_p=0.0, momentum=0.0),
        dataset="blobs",
        shard_size=12,
        sample_fraction=1.0,
    )


def cmd_verify_bounds(args: argparse.Namespace) -> int:
    rng = np.random.default_rng(args.seed)
    weights = (1.0, 10.0, 100.0, 1000.0)
    reports = []
    failures = []
    for i in range(args.instances):
        base = _verification_config(rng, seed=int(rng.integers(0, 2 ** 32)))
        for weight in weights:
            cfg = dataclasses.replace(base, scheduling_weight=weight)
            result = run_experiment(cfg)
            report = oracle.check_bounds(result)
            reports.append({"instance": i, **report.to_dict()})
            status = "ok" if report.satisfied else "VIOLATED"
            print(f"instance {i:3d} V={weight:<7g} "
                  f"utility_slack={report.utility_slack:.6g} "
                  f"min_energy_slack={report.energy_slack.min() if len(report.energy_slack) else 0.0:.6g} "
                  f"{status}")
            if not report.satisfied:
                failures.append({
                    "instance": i,
                    "scheduling_weight": weight,
                    "config": dataclasses.asdict(cfg),
                    "energies": result.energy_matrix().tolist(),
                    "betas": result.beta_matrix().tolist(),
                    "report": report.to_dict(),
                })
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            json.dump({"reports": reports, "failures": failures}, fh, indent=2)
            fh.write("\n")
    if failures:
        print(f"{len(failures)} bound violation(s):", file=sys.stderr)
        for f in failures:
            print(json.dumps(f), file=sys.stderr)
        return 1
    print(f"{len(reports)} reports, all bounds satisfied")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="airfl")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run one experiment from a config file")
    run.add_argument("--config", required=True)
    run.add_argument("--out", default="out")
    run.add_argument("--seed", type=int, default=None, help="override master_seed")
    run.add_argument("--threads", type=int, default=1,
                     help="worker pool size (speed only, never results)")
    run.add_argument("--eval-stride", type=int, default=None, dest="eval_stride")
    run.add_argument("--queues", action="store_true",
                     help="include per-worker queue columns in metrics.csv")
    run.set_defaults(func=cmd_run)

    sweep = sub.add_parser("sweep", help="run a grid along one axis with a shared seed")
    sweep.add_argument("--config", required=True)
    sweep.add_argument("--axis", required=True, choices=sorted(_AXES))
    sweep.add_argument("--values", required=True,
                       help="comma-separated axis values, e.g. 1,2,3")
    sweep.add_argument("--out", default="sweep")
    sweep.add_argument("--seed", type=int, default=None)
    sweep.add_argument("--threads", type=int, default=1)
    sweep.add_argument("--eval-stride", type=int, default=None, dest="eval_stride")
    sweep.add_argument("--queues", action="store_true")
    sweep.set_defaults(func=cmd_sweep)

    verify = sub.add_parser("verify-bounds",
                            help="check the dynamic policy's deviation bounds on random instances")
    verify.add_argument("--instances", type=int, default=100)
    verify.add_argument("--seed", type=int, default=0)
    verify.add_argument("--out", default=None, help="write all reports to this JSON file")
    verify.set_defaults(func=cmd_verify_bounds)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
