"""Deterministic named random streams.

Every random draw in the package comes from a stream identified by a master
seed and a stream name.  The name is hashed with 64-bit FNV-1a, mixed with the
master seed through splitmix64, and the result keys a Philox counter-based
generator.  Streams therefore do not depend on scheduling or thread count.
"""

from __future__ import annotations

import numpy as np

MASK64 = (1 << 64) - 1
FNV_OFFSET = 0xCBF29CE484222325
FNV_PRIME = 0x100000001B3


def fnv1a64(data: bytes) -> int:
    h = FNV_OFFSET
    for byte in data:
        h ^= byte
        h = (h * FNV_PRIME) & MASK64
    return h


def splitmix64(x: int) -> int:
    z = (x + 0x9E3779B97F4A7C15) & MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


def derive_key(master_seed: int, name: str) -> int:
    """64-bit key for stream ``name`` under ``master_seed``."""
    if not isinstance(master_seed, (int, np.integer)) or master_seed < 0:
        raise ValueError(f"seed must be a non-negative integer, got {master_seed!r}")
    master = int(master_seed) & MASK64
    return splitmix64(splitmix64(master) ^ fnv1a64(name.encode("utf-8")))


def stream(master_seed: int, name: str) -> np.random.Generator:
    """Independent generator for the named stream."""
    return np.random.Generator(np.random.Philox(key=derive_key(master_seed, name)))


def block_stream(master_seed: int, name: str, block: int) -> np.random.Generator:
    return stream(master_seed, f"{name}/block-{block}")
