"""Deterministic seed derivation and chunked ensemble execution.

Each chunk of an ensemble draws from its own ``PCG64`` stream seeded by
``derive_seed(base_seed, chunk_index)``.  Chunk boundaries depend only on the
ensemble size and chunk size, so results are identical for any worker count.
"""
from __future__ import annotations

import os
from concurrent.futures import ProcessPoolExecutor
from typing import Callable, Sequence

import numpy as np

__all__ = ["splitmix64", "derive_seed", "make_rng", "chunk_sizes", "run_chunks", "worker_count"]

MASK64 = (1 << 64) - 1
GOLDEN = 0x9E3779B97F4A7C15
WORKERS_ENV = "STOCHBURGERS_WORKERS"


def splitmix64(x: int) -> int:
    """SplitMix64 finaliser (a bijection on 64-bit integers)."""
    z = (x + GOLDEN) & MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


def derive_seed(base_seed: int, worker_index: int) -> int:
    """64-bit seed for worker ``worker_index``.

    ``splitmix64(splitmix64(base) + index)``: for a fixed base the map is a
    bijection of the index modulo 2^64, so distinct indices never collide.
    """
    if worker_index < 0:
        raise ValueError("worker_index must be nonnegative")
    return splitmix64((splitmix64(base_seed & MASK64) + worker_index) & MASK64)


def make_rng(base_seed: int, worker_index: int = 0) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(derive_seed(base_seed, worker_index)))


def chunk_sizes(n: int, chunk: int) -> list[int]:
    if n <= 0:
        return []
    full, rem = divmod(n, chunk)
    return [chunk] * full + ([rem] if rem else [])


def worker_count() -> int:
    try:
        return max(1, int(os.environ.get(WORKERS_ENV, "1")))
    except ValueError:
        return 1


def _call(args):
    fn, size, seed, index = args
    return fn(size, make_rng(seed, index))


def run_chunks(
    fn: Callable[[int, np.random.Generator], object],
    n: int,
    seed: int,
    chunk: int = 4096,
    workers: int | None = None,
) -> Sequence:
    """Evaluate ``fn(size, rng)`` per chunk, returning results in chunk order."""
    jobs = [(fn, size, seed, i) for i, size in enumerate(chunk_sizes(n, chunk))]
    workers = worker_count() if workers is None else workers
    if workers <= 1 or len(jobs) <= 1:
        return [_call(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_call, jobs))
