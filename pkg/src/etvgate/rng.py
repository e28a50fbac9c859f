"""Keyed random streams.

Every random quantity in the package comes from a Philox (counter-based)
generator keyed by ``(seed, purpose, *keys)``, so that data generation,
fold assignment, resampling and training never share a stream by accident.
"""
from __future__ import annotations

import numpy as np

PURPOSES = {
    "data": 0,
    "resample": 1,
    "folds": 2,
    "train": 3,
    "inner": 4,
    "replicate": 5,
}


def _seed_sequence(seed: int, purpose: str, keys) -> np.random.SeedSequence:
    if purpose not in PURPOSES:
        raise KeyError(f"unknown stream purpose {purpose!r}")
    seed = int(seed)
    if seed < 0:
        raise ValueError("seed must be non-negative")
    spawn_key = (PURPOSES[purpose],) + tuple(int(k) for k in keys)
    return np.random.SeedSequence(seed, spawn_key=spawn_key)


def stream(seed: int, purpose: str, *keys: int) -> np.random.Generator:
    """Generator for the stream identified by ``(seed, purpose, *keys)``."""
    return np.random.Generator(np.random.Philox(_seed_sequence(seed, purpose, keys)))


def derive_seed(seed: int, purpose: str, *keys: int) -> int:
    """A child integer seed, for handing to code that builds its own streams."""
    state = _seed_sequence(seed, purpose, keys).generate_state(2, np.uint32)
    return int(state[0]) | (int(state[1]) << 32)
