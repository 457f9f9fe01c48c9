"""Seeded, block-parallel Monte Carlo.

Paths are grouped into fixed-size blocks and block ``k`` always draws from
``Philox(SeedSequence(seed, spawn_key=(k,)))``.  Results are concatenated in
block order, so statistics do not depend on the number of worker threads.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, TypeVar

import numpy as np

BLOCK_SIZE = 8192
T = TypeVar("T")


def block_rng(seed: int, block: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(seed, spawn_key=(block,))))


def n_threads() -> int:
    env = os.environ.get("ERGOCERT_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            pass
    return min(8, os.cpu_count() or 1)


def run_blocks(
    fn: Callable[[np.random.Generator, int, int], T], seed: int, n_paths: int, block_size: int = BLOCK_SIZE
) -> list[T]:
    """Call ``fn(rng, start, size)`` once per block and return the results in block order."""
    jobs = [(block_rng(seed, k), s, min(block_size, n_paths - s)) for k, s in enumerate(range(0, n_paths, block_size))]
    workers = min(n_threads(), len(jobs))
    if workers <= 1:
        return [fn(*job) for job in jobs]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(lambda job: fn(*job), jobs))
