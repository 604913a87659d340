"""Datasets, sharding, and cyclic redundant assignment.

The global dataset is cut into K equal shards of D samples each (IID:
random blocks; non-IID: blocks of label-sorted samples, so shards are
single-label whenever D divides the per-class counts). Each shard is
then stored at ``redundancy`` consecutive workers via the cyclic map, so
every worker holds exactly r shards and every shard lives on exactly r
workers.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801


class DatasetError(ValueError):
    pass


@dataclass(frozen=True)
class LabeledDataset:
    features: np.ndarray   # (num_samples, feature_dim) float64 in [0, 1]
    labels: np.ndarray     # (num_samples,) int64 in [0, num_classes)
    num_classes: int

    def __post_init__(self):
        if len(self.features) != len(self.labels):
            raise DatasetError("features and labels have different lengths")

    def __len__(self) -> int:
        return len(self.labels)

    @property
    def feature_dim(self) -> int:
        return self.features.shape[1]


@dataclass(frozen=True)
class ShardAssignment:
    """K shards (index lists into the global dataset) plus per-worker shard ids."""

    shards: tuple[np.ndarray, ...]
    worker_shards: tuple[tuple[int, ...], ...]

    @property
    def num_shards(self) -> int:
        return len(self.shards)

    @property
    def shard_size(self) -> int:
        return len(self.shards[0])

    def worker_pool(self, worker: int) -> np.ndarray:
        """All sample indices held by a worker (size r*D)."""
        return np.concatenate([self.shards[k] for k in self.worker_shards[worker]])


# -- IDX ingestion -------------------------------------------------------

def _read_idx(path: str, expected_magic: int) -> np.ndarray:
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < 4:
        raise DatasetError(f"{path}: truncated header")
    (magic,) = struct.unpack(">i", raw[:4])
    if magic != expected_magic:
        raise DatasetError(f"{path}: bad magic 0x{magic:08x}")
    ndim = magic & 0xFF
    header_len = 4 + 4 * ndim
    if len(raw) < header_len:
        raise DatasetError(f"{path}: truncated header")
    dims = struct.unpack(f">{ndim}i", raw[4:header_len])
    count = int(np.prod(dims))
    if len(raw) - header_len < count:
        raise DatasetError(f"{path}: truncated payload (expected {count} bytes)")
    data = np.frombuffer(raw, dtype=np.uint8, count=count, offset=header_len)
    return data.reshape(dims)


def load_idx(images_path: str, labels_path: str) -> LabeledDataset:
    """Load an IDX image/label file pair (big-endian magic + dims, ubyte payload).

    Pixels are scaled to [0, 1] by division by 255 and images flattened
    row-major to vectors.
    """
    images = _read_idx(images_path, IDX_IMAGES_MAGIC)
    labels = _read_idx(labels_path, IDX_LABELS_MAGIC)
    if images.shape[0] != labels.shape[0]:
        raise DatasetError(
            f"image/label count mismatch: {images.shape[0]} images, {labels.shape[0]} labels"
        )
    features = images.reshape(images.shape[0], -1).astype(np.float64) / 255.0
    labels = labels.astype(np.int64)
    return LabeledDataset(features=features, labels=labels, num_classes=int(labels.max()) + 1)


# -- sharding ------------------------------------------------------------

def make_shards(data: LabeledDataset, num_shards: int, shard_size: int, mode: str,
                stream: np.random.Generator) -> tuple[np.ndarray, ...]:
    """Cut the dataset into num_shards disjoint index blocks of shard_size each.

    IID: a random permutation cut into consecutive blocks. NonIIDByLabel:
    samples stably sorted by label, then consecutive blocks, so each
    shard holds a single label whenever shard_size divides the per-class
    counts. Surplus samples beyond K*D are dropped from the tail.
    """
    total = num_shards * shard_size
    if total > len(data):
        raise DatasetError(
            f"insufficient samples: need {total}, have {len(data)}"
        )
    if mode == "IID":
        order = stream.permutation(len(data))
    elif mode == "NonIIDByLabel":
        order = np.argsort(data.labels, kind="stable")
    else:
        raise DatasetError(f"unknown data mode {mode!r}")
    used = order[:total]
    return tuple(used[k * shard_size:(k + 1) * shard_size] for k in range(num_shards))


def cyclic_assign(num_shards: int, num_workers: int, redundancy: int) -> tuple[tuple[int, ...], ...]:
    """Assign each worker the r cyclically-consecutive shards starting at its own.

    Workers and shards are 0-indexed: worker n holds shards
    {n, n+1, ..., n+r-1} mod K. Requires K == N.
    """
    if num_shards != num_workers:
        raise DatasetError("cyclic assignment requires num_shards == num_workers")
    if not (1 <= redundancy <= num_shards):
        raise DatasetError("redundancy out of range")
    return tuple(
        tuple((n + j) % num_shards for j in range(redundancy))
        for n in range(num_workers)
    )


def sample_minibatch(worker_shard_ids: tuple[int, ...], shards: tuple[np.ndarray, ...],
                     fraction: float, stream: np.random.Generator) -> np.ndarray:
    """Uniform sample without replacement from the union of a worker's shards.

    Size is round(fraction * r * D) to the nearest integer, floor 1; with
    fraction = 1/r that is exactly D.
    """
    if not (0 < fraction <= 1):
        raise DatasetError("fraction must be in (0, 1]")
    pool = np.concatenate([shards[k] for k in worker_shard_ids])
    if len(pool) == 0:
        raise DatasetError("worker holds no data")
    size = max(1, int(np.floor(fraction * len(pool) + 0.5)))
    picks = stream.choice(len(pool), size=size, replace=False)
    return pool[picks]


# -- synthetic blobs (fast test task) -------------------------------------

def make_blobs(num_samples: int, feature_dim: int, num_classes: int,
               stream: np.random.Generator, noise: float = 0.12) -> LabeledDataset:
    """Balanced Gaussian-blob classification task with features in [0, 1].

    Class centroids are drawn once in [0.25, 0.75]^d; samples add
    isotropic noise and are clipped into the unit box. Class counts are
    as equal as possible and the sample order is shuffled.
    """
    centroids = stream.uniform(0.25, 0.75, size=(num_classes, feature_dim))
    labels = np.arange(num_samples) % num_classes
    labels = stream.permutation(labels)
    features = centroids[labels] + stream.normal(0.0, noise, size=(num_samples, feature_dim))
    np.clip(features, 0.0, 1.0, out=features)
    return LabeledDataset(features=features, labels=labels.astype(np.int64),
                          num_classes=num_classes)
