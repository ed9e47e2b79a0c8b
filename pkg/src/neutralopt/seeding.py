"""Seed plumbing: every random draw descends from one root seed through named streams."""

from __future__ import annotations

import zlib

import numpy as np


def as_seed_sequence(seed) -> np.random.SeedSequence:
    if isinstance(seed, np.random.SeedSequence):
        return seed
    if isinstance(seed, np.random.Generator):
        return np.random.SeedSequence(int(seed.integers(2**63)))
    return np.random.SeedSequence(seed)


def spawn(seed, n: int) -> list[np.random.SeedSequence]:
    return as_seed_sequence(seed).spawn(n)


def substream(seed, *names) -> np.random.SeedSequence:
    """Child sequence keyed by names (strings or ints); stable across runs and processes."""
    root = as_seed_sequence(seed)
    key = [zlib.crc32(str(name).encode()) for name in names]
    return np.random.SeedSequence(root.entropy, spawn_key=(*root.spawn_key, *key))


def derive_int(seed, *names) -> int:
    return int(substream(seed, *names).generate_state(1, np.uint64)[0] >> np.uint64(1))
