"""Labelled, splittable random streams.

Every stream is a PCG64 generator seeded from ``SeedSequence(seed,
spawn_key=(label_id, *indices))``, so replication ``r`` of a given stream
is reproducible on its own regardless of how many other streams were
consumed or in what order.
"""

import numpy as np

STREAM_IDS = {
    "bootstrap": 1,
    "montecarlo": 2,
    "lemma1": 3,
    "bands": 4,
    "cli": 5,
}


def _sequence(seed: int, label: str, indices) -> np.random.SeedSequence:
    if label not in STREAM_IDS:
        raise KeyError(f"unknown stream label {label!r}")
    seed = int(seed)
    if not 0 <= seed < 2**64:
        raise ValueError("seed must be an unsigned 64-bit integer")
    key = (STREAM_IDS[label],) + tuple(int(i) for i in indices)
    return np.random.SeedSequence(entropy=seed, spawn_key=key)


def stream(seed: int, label: str, *indices: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(_sequence(seed, label, indices)))


def derive_seed(seed: int, label: str, *indices: int) -> int:
    """A child 64-bit seed, for handing to code that takes an integer seed."""
    lo, hi = _sequence(seed, label, indices).generate_state(2, dtype=np.uint32)
    return int(lo) | (int(hi) << 32)
