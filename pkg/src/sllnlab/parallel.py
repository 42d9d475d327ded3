"""Replicate batching with thread-count independent results.

Replicates are split into fixed-size blocks.  Block ``b`` always draws from the
stream ``name/block-b`` and results are concatenated in block order, so the
output is identical for any thread budget.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from typing import Callable

import numpy as np

from .rng import block_stream

DEFAULT_BLOCK = 256


def block_sizes(replicates: int, block: int = DEFAULT_BLOCK) -> list[int]:
    if replicates < 1:
        raise ValueError(f"replicates must be >= 1, got {replicates}")
    if block < 1:
        raise ValueError(f"block size must be >= 1, got {block}")
    full, rest = divmod(replicates, block)
    return [block] * full + ([rest] if rest else [])


def run_blocks(
    fn: Callable[[np.random.Generator, int], object],
    replicates: int,
    seed: int,
    name: str,
    threads: int = 1,
    block: int = DEFAULT_BLOCK,
) -> list:
    """Call ``fn(rng, count)`` for each block; return results in block order."""
    if threads < 1:
        raise ValueError(f"threads must be >= 1, got {threads}")
    sizes = block_sizes(replicates, block)

    def job(i):
        return fn(block_stream(seed, name, i), sizes[i])

    if threads == 1 or len(sizes) == 1:
        return [job(i) for i in range(len(sizes))]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(job, range(len(sizes))))


def concat_blocks(results: list, axis: int = 0):
    """Concatenate block outputs; tuples/dicts of arrays are handled fieldwise."""
    first = results[0]
    if isinstance(first, tuple):
        return tuple(np.concatenate([r[i] for r in results], axis=axis) for i in range(len(first)))
    if isinstance(first, dict):
        return {k: np.concatenate([r[k] for r in results], axis=axis) for k in first}
    return np.concatenate(results, axis=axis)
