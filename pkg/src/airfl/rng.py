"""Counter-based random stream derivation.

Every source of randomness in a run (weight init, minibatch sampling,
dropout masks, channel fading, receiver noise, data partitioning) draws
from its own stream, keyed by (master_seed, tag, worker, round). Streams
are pure functions of their key, so worker loops can run in any order or
on any number of threads without changing results.
"""

from enum import Enum

import numpy as np

_MASK64 = (1 << 64) - 1


class StreamTag(Enum):
    INIT = 0
    SAMPLING = 1
    DROPOUT = 2
    CHANNEL = 3
    NOISE = 4
    PARTITION = 5


def derive_stream(master_seed: int, tag: StreamTag, worker: int | None = None,
                  round: int | None = None) -> np.random.Generator:
    """Derive an independent generator for the given (tag, worker, round) key.

    worker/round are offset by one in the key so "not applicable" (None)
    never collides with index 0.
    """
    key = (
        tag.value,
        0 if worker is None else worker + 1,
        0 if round is None else round + 1,
    )
    seq = np.random.SeedSequence(entropy=master_seed & _MASK64, spawn_key=key)
    return np.random.Generator(np.random.Philox(seq))
