"""Round-based execution of the full training loop.

Order of effects within a round follows the online scheduling algorithm:
(1) every worker draws a fresh minibatch and computes its local gradient
on the broadcast model; (2) the round's channel is drawn and each worker
prices its transmission; (3) scheduling decisions are made from the
pre-update queues; (4) queues advance; (5) scheduled workers' segments
superpose over the air; (6) the server descales and steps the model. If
nobody is scheduled the model and momentum carry over unchanged.

Every random draw comes from a stream keyed by (tag, worker, round), so
results are bit-identical across thread counts, and policy choices never
perturb the channel/noise/minibatch draws of other rounds -- enabling
paired policy comparisons on identical traces.
"""

from __future__ import annotations

import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import channel as ch
from . import data as ds
from . import model as mdl
from . import scheduler as sched
from .config import ExperimentConfig, validate
from .rng import StreamTag, derive_stream

DATA_DIR_ENV = "AIRFL_DATA_DIR"

MNIST_FILES = {
    "train": ("train-images-idx3-ubyte", "train-labels-idx1-ubyte"),
    "test": ("t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte"),
}


@dataclass(frozen=True)
class RoundRecord:
    round: int
    beta: np.ndarray                 # (N,) 0/1
    energy: np.ndarray               # (N,) required transmit energy, Joules
    queue: np.ndarray                # (N,) pre-decision virtual queues
    scheduled_fraction: float
    train_loss: float
    test_accuracy: float             # NaN on rounds skipped by eval_stride
    mean_gradient_power: float       # mean over workers of ||g_n||^2
    cumulative_energy: np.ndarray    # (N,) sum of spent energy through this round
    update_skipped: bool


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    records: list[RoundRecord]
    final_params: np.ndarray
    final_queues: np.ndarray         # q_n(T), after the last round's update
    duration_seconds: float

    @property
    def num_rounds(self) -> int:
        return len(self.records)

    def beta_matrix(self) -> np.ndarray:
        return np.stack([r.beta for r in self.records])

    def energy_matrix(self) -> np.ndarray:
        return np.stack([r.energy for r in self.records])

    def queue_matrix(self) -> np.ndarray:
        return np.stack([r.queue for r in self.records])

    def scheduled_fractions(self) -> np.ndarray:
        return np.array([r.scheduled_fraction for r in self.records])

    def accuracies(self) -> np.ndarray:
        return np.array([r.test_accuracy for r in self.records])

    @property
    def final_accuracy(self) -> float:
        evaluated = [r.test_accuracy for r in self.records if not np.isnan(r.test_accuracy)]
        if not evaluated:
            raise ValueError("no evaluated rounds")
        return evaluated[-1]

    @property
    def mean_scheduled_fraction(self) -> float:
        return float(np.mean(self.scheduled_fractions()))

    def total_energy(self) -> np.ndarray:
        return self.records[-1].cumulative_energy


def _mnist_path(root: str, name: str) -> str:
    for candidate in (os.path.join(root, name), os.path.join(root, name + ".gz")):
        if os.path.exists(candidate):
            return candidate
    raise FileNotFoundError(f"dataset not found: {os.path.join(root, name)}[.gz]")


def _load_maybe_gz(images_path: str, labels_path: str) -> ds.LabeledDataset:
    import gzip
    import tempfile

    paths = []
    cleanup = []
    for path in (images_path, labels_path):
        if path.endswith(".gz"):
            tmp = tempfile.NamedTemporaryFile(delete=False)
            with gzip.open(path, "rb") as src:
                tmp.write(src.read())
            tmp.close()
            paths.append(tmp.name)
            cleanup.append(tmp.name)
        else:
            paths.append(path)
    try:
        return ds.load_idx(paths[0], paths[1])
    finally:
        for name in cleanup:
            os.unlink(name)


def load_dataset(cfg: ExperimentConfig) -> tuple[ds.LabeledDataset, ds.LabeledDataset]:
    """Resolve the configured dataset into (train, test)."""
    if cfg.dataset == "digits":
        from . import digits

        return digits.load_split("train"), digits.load_split("test")
    if cfg.dataset == "mnist":
        root = cfg.data_dir or os.environ.get(DATA_DIR_ENV) or "data"
        train = _load_maybe_gz(_mnist_path(root, MNIST_FILES["train"][0]),
                               _mnist_path(root, MNIST_FILES["train"][1]))
        test = _load_maybe_gz(_mnist_path(root, MNIST_FILES["test"][0]),
                              _mnist_path(root, MNIST_FILES["test"][1]))
        return train, test
    if cfg.dataset == "blobs":
        if cfg.shard_size is None:
            raise ds.DatasetError("dataset 'blobs' requires shard_size")
        k = cfg.resolved_num_shards()
        feature_dim = cfg.model_spec.layer_sizes[0]
        num_classes = cfg.model_spec.layer_sizes[-1]
        train_n = k * cfg.shard_size
        test_n = max(100, train_n // 5)
        train = ds.make_blobs(train_n, feature_dim, num_classes,
                              derive_stream(cfg.master_seed, StreamTag.PARTITION, None, 0))
        test = ds.make_blobs(test_n, feature_dim, num_classes,
                             derive_stream(cfg.master_seed, StreamTag.PARTITION, None, 1))
        return train, test
    raise ds.DatasetError(f"unknown dataset {cfg.dataset!r}")


@dataclass
class RunState:
    cfg: ExperimentConfig
    train: ds.LabeledDataset
    test: ds.LabeledDataset
    assignment: ds.ShardAssignment
    budgets: np.ndarray
    sample_fraction: float
    params: np.ndarray
    velocity: np.ndarray
    queues: np.ndarray
    cumulative_energy: np.ndarray = field(init=False)

    def __post_init__(self):
        self.cumulative_energy = np.zeros(self.cfg.num_workers)


def init_state(cfg: ExperimentConfig, train: ds.LabeledDataset | None = None,
               test: ds.LabeledDataset | None = None) -> RunState:
    cfg = validate(cfg)
    if train is None or test is None:
        train, test = load_dataset(cfg)
    if train.feature_dim != cfg.model_spec.layer_sizes[0]:
        raise ds.DatasetError(
            f"feature dim {train.feature_dim} != model input {cfg.model_spec.layer_sizes[0]}"
        )
    k = cfg.resolved_num_shards()
    shard_size = cfg.shard_size if cfg.shard_size is not None else len(train) // k
    shards = ds.make_shards(train, k, shard_size, cfg.data_mode,
                            derive_stream(cfg.master_seed, StreamTag.PARTITION))
    worker_shards = ds.cyclic_assign(k, cfg.num_workers, cfg.redundancy)
    assignment = ds.ShardAssignment(shards=shards, worker_shards=worker_shards)
    params = mdl.init_params(cfg.model_spec, derive_stream(cfg.master_seed, StreamTag.INIT))
    return RunState(
        cfg=cfg,
        train=train,
        test=test,
        assignment=assignment,
        budgets=cfg.energy_budgets(),
        sample_fraction=cfg.resolved_sample_fraction(),
        params=params,
        velocity=np.zeros_like(params),
        queues=np.full(cfg.num_workers, cfg.queue_floor),
    )


def _worker_gradient(state: RunState, worker: int, t: int) -> tuple[np.ndarray, float]:
    cfg = state.cfg
    sampling = derive_stream(cfg.master_seed, StreamTag.SAMPLING, worker, t)
    idx = ds.sample_minibatch(state.assignment.worker_shards[worker],
                              state.assignment.shards, state.sample_fraction, sampling)
    dropout = derive_stream(cfg.master_seed, StreamTag.DROPOUT, worker, t)
    return mdl.gradient_and_loss(state.params, state.train.features[idx],
                                 state.train.labels[idx], cfg.model_spec,
                                 dropout_stream=dropout, dropout_enabled=True)


def run_round(state: RunState, t: int, threads: int = 1) -> RoundRecord:
    cfg = state.cfg
    n = cfg.num_workers

    # 1. local gradients, fan-out across workers (results keyed by index)
    grads = np.empty((n, cfg.model_spec.param_count))
    losses = np.empty(n)
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            for worker, (g, loss) in enumerate(
                    pool.map(lambda w: _worker_gradient(state, w, t), range(n))):
                grads[worker] = g
                losses[worker] = loss
    else:
        for worker in range(n):
            grads[worker], losses[worker] = _worker_gradient(state, worker, t)

    # 2. channel draw and per-worker transmit energy
    gains = ch.draw_channel(cfg.num_subchannels, n,
                            derive_stream(cfg.master_seed, StreamTag.CHANNEL, None, t))
    segments = [ch.segment(grads[w], cfg.num_subchannels) for w in range(n)]
    energies = np.array([
        ch.worker_energy(cfg.power_scalar, gains[:, w], segments[w]) for w in range(n)
    ])

    # 3. decisions from pre-update queues
    queues_pre = state.queues.copy()
    decisions = sched.decide_all(cfg.policy, queues_pre, energies, t, cfg)
    betas = np.array([d.beta for d in decisions], dtype=np.int8)

    # 4. queue evolution (the dynamic policy's state; others stay at the floor).
    # The deficit beta*E - budget is formed first so post-hoc drift audits can
    # reproduce the update bit-exactly from the recorded quantities.
    if cfg.policy == "Dynamic":
        deficit = betas * energies - state.budgets
        state.queues = np.maximum(state.queues + deficit, cfg.queue_floor)

    # 5-6. over-the-air aggregation and server update
    scheduled = [w for w in range(n) if betas[w]]
    update_skipped = not scheduled
    if scheduled:
        received = ch.mac_aggregate([segments[w] for w in scheduled], cfg.power_scalar,
                                    derive_stream(cfg.master_seed, StreamTag.NOISE, None, t),
                                    cfg.noise_enabled)
        state.params = ch.ps_descale_update(state.params, received, cfg.power_scalar,
                                            len(scheduled), cfg.learning_rate,
                                            state.velocity, cfg.model_spec.momentum)

    state.cumulative_energy = state.cumulative_energy + betas * energies

    if t % cfg.eval_stride == 0 or t == cfg.num_rounds - 1:
        accuracy, _ = mdl.evaluate(state.params, state.test.features,
                                   state.test.labels, cfg.model_spec)
    else:
        accuracy = float("nan")

    return RoundRecord(
        round=t,
        beta=betas,
        energy=energies,
        queue=queues_pre,
        scheduled_fraction=float(betas.sum()) / n,
        train_loss=float(losses.mean()),
        test_accuracy=accuracy,
        mean_gradient_power=float(np.mean(np.einsum("ij,ij->i", grads, grads))),
        cumulative_energy=state.cumulative_energy.copy(),
        update_skipped=update_skipped,
    )


def run_experiment(cfg: ExperimentConfig, train: ds.LabeledDataset | None = None,
                   test: ds.LabeledDataset | None = None,
                   threads: int = 1) -> ExperimentResult:
    """Run the configured number of rounds; deterministic given the config."""
    start = time.perf_counter()
    state = init_state(cfg, train, test)
    records = []
    for t in range(cfg.num_rounds):
        try:
            records.append(run_round(state, t, threads=threads))
        except FloatingPointError as exc:
            raise RuntimeError(f"non-finite training state at round {t}: {exc}") from exc
    return ExperimentResult(
        config=cfg,
        records=records,
        final_params=state.params,
        final_queues=state.queues.copy(),
        duration_seconds=time.perf_counter() - start,
    )
