"""Experiment configuration: every knob of a run, with strict validation.

Configs are immutable after construction. ``validate`` checks the full set
of invariants and reports *all* violations at once, each tagged with the
offending field name. The JSON config file mirrors the dataclass field
names exactly (snake_case); unknown keys are an error.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field

import numpy as np

POLICIES = ("AlwaysOn", "Myopic", "Dynamic")
DATA_MODES = ("IID", "NonIIDByLabel")
DATASETS = ("mnist", "digits", "blobs")


class ConfigError(ValueError):
    """Raised when a config violates one or more invariants.

    ``errors`` holds one message per violation.
    """

    def __init__(self, errors: list[str]):
        self.errors = list(errors)
        super().__init__("; ".join(self.errors))


@dataclass(frozen=True)
class ModelSpec:
    """Fully-connected classifier: ReLU hidden layers, softmax output."""

    layer_sizes: tuple[int, ...] = (784, 64, 10)
    dropout_p: float = 0.5
    momentum: float = 0.5

    @property
    def param_count(self) -> int:
        sizes = self.layer_sizes
        return sum(sizes[i] * sizes[i + 1] + sizes[i + 1] for i in range(len(sizes) - 1))


@dataclass(frozen=True)
class GammaPiece:
    """One affine piece of the round-weight schedule.

    gamma(t) = base + slope * (t - start_round) for start_round <= t < end_round.
    end_round None means open-ended.
    """

    start_round: int
    end_round: int | None
    base: float
    slope: float = 0.0


# Default schedule: weight 2 for the first ten rounds, ramp down 0.2/round
# over rounds 10..14, then 1 from round 15 on.
DEFAULT_GAMMA = (
    GammaPiece(0, 10, 2.0, 0.0),
    GammaPiece(10, 15, 1.8, -0.2),
    GammaPiece(15, None, 1.0, 0.0),
)


@dataclass(frozen=True)
class ExperimentConfig:
    num_workers: int = 50
    num_subchannels: int = 100
    num_rounds: int = 100
    redundancy: int = 2
    num_shards: int | None = None          # None -> num_workers
    power_scalar: float = 1.0
    energy_budget: float | tuple[float, ...] = 5.0   # Joules/round, scalar or per worker
    scheduling_weight: float = 1500.0      # V: utility vs. queue-drift trade-off
    queue_floor: float = 0.3
    learning_rate: float = 0.05
    gamma_schedule: tuple[GammaPiece, ...] = DEFAULT_GAMMA
    policy: str = "Dynamic"
    data_mode: str = "NonIIDByLabel"
    noise_enabled: bool = True
    master_seed: int = 0
    model_spec: ModelSpec = field(default_factory=ModelSpec)
    dataset: str = "digits"
    data_dir: str | None = None            # IDX file root for dataset="mnist"
    shard_size: int | None = None          # D; None -> num_samples // K
    sample_fraction: float | None = None   # minibatch fraction; None -> 1/redundancy
    eval_stride: int = 1

    # -- derived views -------------------------------------------------

    def resolved_num_shards(self) -> int:
        return self.num_workers if self.num_shards is None else self.num_shards

    def energy_budgets(self) -> np.ndarray:
        """Per-worker budget vector, shape (num_workers,)."""
        e = self.energy_budget
        if isinstance(e, (int, float)):
            return np.full(self.num_workers, float(e))
        return np.asarray(e, dtype=float)

    def resolved_sample_fraction(self) -> float:
        if self.sample_fraction is None:
            return 1.0 / self.redundancy
        return self.sample_fraction


def gamma_value(schedule: tuple[GammaPiece, ...], t: int) -> float:
    """Evaluate the round-weight schedule at round t."""
    if t < 0:
        raise ValueError(f"round index {t} out of range")
    for piece in schedule:
        if t >= piece.start_round and (piece.end_round is None or t < piece.end_round):
            return piece.base + piece.slope * (t - piece.start_round)
    raise ValueError(f"round index {t} not covered by gamma schedule")


def validation_errors(cfg: ExperimentConfig) -> list[str]:
    """All invariant violations of cfg; empty list means valid."""
    errs: list[str] = []
    if cfg.num_workers < 1:
        errs.append("num_workers must be positive")
    if cfg.num_subchannels < 1:
        errs.append("num_subchannels must be positive")
    if cfg.num_rounds < 1:
        errs.append("num_rounds must be positive")

    k = cfg.resolved_num_shards()
    if k < 1:
        errs.append("num_shards must be positive")
    if not (1 <= cfg.redundancy <= max(k, 1)):
        errs.append("redundancy out of range (must satisfy 1 <= redundancy <= num_shards)")

    if cfg.power_scalar <= 0:
        errs.append("power_scalar must be positive")
    if cfg.scheduling_weight <= 0:
        errs.append("scheduling_weight must be positive")
    if cfg.queue_floor < 0:
        errs.append("queue_floor must be non-negative")
    if cfg.learning_rate <= 0:
        errs.append("learning_rate must be positive")

    budgets = cfg.energy_budget
    if isinstance(budgets, (int, float)):
        if budgets <= 0:
            errs.append("energy_budget must be positive")
    else:
        if len(budgets) != cfg.num_workers:
            errs.append("energy_budget list length must equal num_workers")
        if any(b <= 0 for b in budgets):
            errs.append("energy_budget entries must be positive")

    spec = cfg.model_spec
    if len(spec.layer_sizes) < 2:
        errs.append("model_spec.layer_sizes needs at least input and output layers")
    elif any(n < 1 for n in spec.layer_sizes):
        errs.append("model_spec.layer_sizes entries must be positive")
    elif cfg.num_subchannels > spec.param_count:
        errs.append("num_subchannels exceeds parameter count (empty segments)")
    if not (0 <= spec.dropout_p < 1):
        errs.append("model_spec.dropout_p must be in [0, 1)")
    if not (0 <= spec.momentum < 1):
        errs.append("model_spec.momentum must be in [0, 1)")

    if cfg.policy not in POLICIES:
        errs.append(f"policy must be one of {POLICIES}")
    if cfg.data_mode not in DATA_MODES:
        errs.append(f"data_mode must be one of {DATA_MODES}")
    if cfg.dataset not in DATASETS:
        errs.append(f"dataset must be one of {DATASETS}")

    if cfg.sample_fraction is not None and not (0 < cfg.sample_fraction <= 1):
        errs.append("sample_fraction must be in (0, 1]")
    if cfg.shard_size is not None and cfg.shard_size < 1:
        errs.append("shard_size must be positive")
    if cfg.eval_stride < 1:
        errs.append("eval_stride must be positive")

    # Gamma schedule must cover every round with a positive weight.
    try:
        for t in range(cfg.num_rounds):
            if gamma_value(cfg.gamma_schedule, t) <= 0:
                errs.append(f"gamma_schedule not positive at round {t}")
                break
    except ValueError as exc:
        errs.append(f"gamma_schedule: {exc}")

    return errs


def validate(cfg: ExperimentConfig) -> ExperimentConfig:
    """Return cfg if every invariant holds, else raise ConfigError listing all violations."""
    errs = validation_errors(cfg)
    if errs:
        raise ConfigError(errs)
    return cfg


# -- JSON round-trip ----------------------------------------------------

def _build_model_spec(obj: dict) -> ModelSpec:
    known = {f.name for f in dataclasses.fields(ModelSpec)}
    unknown = set(obj) - known
    if unknown:
        raise ConfigError([f"unknown model_spec keys: {sorted(unknown)}"])
    kwargs = dict(obj)
    if "layer_sizes" in kwargs:
        kwargs["layer_sizes"] = tuple(kwargs["layer_sizes"])
    return ModelSpec(**kwargs)


def _build_gamma_schedule(items: list) -> tuple[GammaPiece, ...]:
    pieces = []
    for obj in items:
        known = {f.name for f in dataclasses.fields(GammaPiece)}
        unknown = set(obj) - known
        if unknown:
            raise ConfigError([f"unknown gamma_schedule keys: {sorted(unknown)}"])
        pieces.append(GammaPiece(**obj))
    return tuple(pieces)


def config_from_dict(obj: dict) -> ExperimentConfig:
    known = {f.name for f in dataclasses.fields(ExperimentConfig)}
    unknown = set(obj) - known
    if unknown:
        raise ConfigError([f"unknown config keys: {sorted(unknown)}"])
    kwargs = dict(obj)
    if "model_spec" in kwargs:
        kwargs["model_spec"] = _build_model_spec(kwargs["model_spec"])
    if "gamma_schedule" in kwargs:
        kwargs["gamma_schedule"] = _build_gamma_schedule(kwargs["gamma_schedule"])
    if "energy_budget" in kwargs and isinstance(kwargs["energy_budget"], list):
        kwargs["energy_budget"] = tuple(kwargs["energy_budget"])
    return ExperimentConfig(**kwargs)


def config_to_dict(cfg: ExperimentConfig) -> dict:
    obj = dataclasses.asdict(cfg)
    obj["gamma_schedule"] = [dataclasses.asdict(p) for p in cfg.gamma_schedule]
    obj["model_spec"]["layer_sizes"] = list(cfg.model_spec.layer_sizes)
    if isinstance(cfg.energy_budget, tuple):
        obj["energy_budget"] = list(cfg.energy_budget)
    return obj


def load_config(path: str) -> ExperimentConfig:
    """Read, build, and validate a JSON config file."""
    with open(path, "r", encoding="utf-8") as fh:
        obj = json.load(fh)
    return validate(config_from_dict(obj))


def save_config(cfg: ExperimentConfig, path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(config_to_dict(cfg), fh, indent=2)
        fh.write("\n")
