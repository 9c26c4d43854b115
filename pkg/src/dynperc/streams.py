"""Seeded, splittable random streams and chunked execution.

Work of ``n`` units (blocks, trajectories, coupled pairs) is cut into
fixed chunks of :data:`CHUNK_SIZE`. Chunk ``k`` draws from
``PCG64(SeedSequence(seed, spawn_key=(k,)))``, which is exactly the
``k``-th child of ``SeedSequence(seed).spawn``. Chunk results are
concatenated in chunk order, so output depends on ``(seed, n)`` only,
never on how many worker processes ran the chunks.
"""
from __future__ import annotations

import os
from concurrent.futures import ProcessPoolExecutor
from typing import Any, Callable, Sequence

import numpy as np

CHUNK_SIZE = 4096
THREADS_ENV = "DYNPERC_THREADS"


def chunk_rng(seed: int, k: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=(k,))))


def chunk_counts(n: int, size: int = CHUNK_SIZE) -> list[int]:
    full, rest = divmod(n, size)
    return [size] * full + ([rest] if rest else [])


def resolve_workers(replicas: int | None) -> int:
    if replicas is not None:
        return max(1, int(replicas))
    env = os.environ.get(THREADS_ENV)
    if env:
        return max(1, int(env))
    return 1


def _call(fn, seed, k, count, args):
    return fn(count, chunk_rng(seed, k), *args)


def run_chunked(
    fn: Callable[..., Any],
    n: int,
    seed: int,
    args: Sequence[Any] = (),
    replicas: int | None = None,
) -> list[Any]:
    """Run ``fn(count, rng, *args)`` over every chunk; results in chunk order."""
    counts = chunk_counts(n)
    workers = resolve_workers(replicas)
    if workers == 1 or len(counts) == 1:
        return [_call(fn, seed, k, c, args) for k, c in enumerate(counts)]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        futs = [pool.submit(_call, fn, seed, k, c, tuple(args)) for k, c in enumerate(counts)]
        return [f.result() for f in futs]
