"""Keyed random-number streams.

Every stochastic component draws from a generator keyed by
(seed, stream tag, ...indices), so results are independent of evaluation
order and safe to parallelize across instances.
"""
import numpy as np

# Stream tags keep independent consumers of the same user seed apart.
NOISE_STREAM = 1
SUBSAMPLE_STREAM = 2
ORACLE_STREAM = 3
TTA_STREAM = 4
SCENE_STREAM = 5

# Oracle steps are keyed by step index; roof predictions get their own slot.
ROOF_STEP = 2**31


def keyed_rng(*key: int) -> np.random.Generator:
    """Generator seeded by the full integer key, order-sensitive."""
    return np.random.default_rng(list(key))


def derive_seed(*key: int) -> int:
    """Collapse a key into a single 64-bit integer seed (for config echo)."""
    return int(np.random.SeedSequence(list(key)).generate_state(1, np.uint64)[0])
