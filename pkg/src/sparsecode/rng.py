"""Deterministic seed derivation for trials and substreams."""

from __future__ import annotations

import numpy as np

MASK64 = (1 << 64) - 1
GOLDEN_GAMMA = 0x9E3779B97F4A7C15

DEFAULT_SEED = 20130611


def mix64(z: int) -> int:
    """The splitmix64 output finalizer."""
    z &= MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


def substream_seed(master_seed: int, index: int) -> int:
    """Seed of substream ``index``: mix64(master XOR index * golden gamma)."""
    return mix64((master_seed & MASK64) ^ ((index * GOLDEN_GAMMA) & MASK64))


def generator(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(seed & MASK64))


def substream(master_seed: int, index: int) -> np.random.Generator:
    return generator(substream_seed(master_seed, index))
