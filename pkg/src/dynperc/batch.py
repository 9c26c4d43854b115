"""Columnar block/trajectory samples and the fast chunked runners."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable

import numpy as np

from . import kernels
from .engine import DEFAULT_MAX_EVENTS, BlockStats, CensoredBlockError
from .model import ModelParams, direction_cdf
from .streams import run_chunked

MAX_FAST_DIM = 7


@dataclass
class BlockBatch:
    """Per-block statistics stored as parallel arrays.

    Also used for fixed-horizon runs, in which case ``tau`` holds the
    horizon for every row.
    """

    tau: np.ndarray
    disp: np.ndarray  # (n, d)
    R: np.ndarray
    L: np.ndarray
    R_a: np.ndarray
    L_a: np.ndarray
    U: np.ndarray
    U_a: np.ndarray

    def __len__(self) -> int:
        return self.tau.shape[0]

    @property
    def d(self) -> int:
        return self.disp.shape[1]

    @property
    def x1(self) -> np.ndarray:
        return self.disp[:, 0]

    @property
    def R_supp(self) -> np.ndarray:
        return self.R_a - self.R

    @property
    def L_supp(self) -> np.ndarray:
        return self.L_a - self.L

    def row(self, i: int) -> BlockStats:
        return BlockStats(
            tau=float(self.tau[i]),
            displacement=tuple(int(v) for v in self.disp[i]),
            R=int(self.R[i]), L=int(self.L[i]), R_a=int(self.R_a[i]),
            L_a=int(self.L_a[i]), U=int(self.U[i]), U_a=int(self.U_a[i]),
        )

    def __iter__(self):
        return (self.row(i) for i in range(len(self)))

    def __getitem__(self, idx) -> "BlockBatch":
        return BlockBatch(*(getattr(self, f)[idx] for f in _FIELDS))

    @classmethod
    def from_stats(cls, blocks: Iterable[BlockStats]) -> "BlockBatch":
        blocks = list(blocks)
        if not blocks:
            raise ValueError("empty block stream")
        return cls(
            tau=np.array([b.tau for b in blocks], dtype=float),
            disp=np.array([b.displacement for b in blocks], dtype=np.int64),
            **{f: np.array([getattr(b, f) for b in blocks], dtype=np.int64)
               for f in ("R", "L", "R_a", "L_a", "U", "U_a")},
        )

    @classmethod
    def concat(cls, parts: Iterable["BlockBatch"]) -> "BlockBatch":
        parts = list(parts)
        return cls(*(np.concatenate([getattr(b, f) for b in parts]) for f in _FIELDS))


_FIELDS = ("tau", "disp", "R", "L", "R_a", "L_a", "U", "U_a")


def _check_status(status: int, what: str):
    if status == kernels.CENSORED:
        raise CensoredBlockError(f"{what}: event guard exceeded")
    if status == kernels.OVERFLOW:
        raise OverflowError(f"{what}: lattice coordinate outside packed key range")
    if status == kernels.ORDER_VIOLATION:
        raise AssertionError(f"{what}: monotone coupling order violated")


def _from_kernel(tau, disp, counts) -> BlockBatch:
    return BlockBatch(tau, disp, *(counts[:, j] for j in range(6)))


def _chunk(count, rng, d, p, mu, lam, horizon, max_events):
    cdf = direction_cdf(d, lam)
    status, tau, disp, counts = kernels.blocks_kernel(
        d, p, mu, cdf, count, rng, max_events, horizon, kernels._new_arrays()
    )
    _check_status(status, "blocks" if horizon < 0 else "trajectories")
    return _from_kernel(tau, disp, counts)


def _check_dim(params: ModelParams):
    if params.d > MAX_FAST_DIM:
        raise ValueError(f"compiled kernels support d <= {MAX_FAST_DIM}")


def simulate_blocks(
    params: ModelParams,
    n_blocks: int,
    seed: int,
    replicas: int | None = None,
    max_events: int = DEFAULT_MAX_EVENTS,
) -> BlockBatch:
    """``n_blocks`` regeneration blocks; identical to ``engine.block_sequence``."""
    if n_blocks < 1:
        raise ValueError("n_blocks must be >= 1")
    _check_dim(params)
    args = (params.d, params.p, params.mu, params.lam, -1.0, max_events)
    return BlockBatch.concat(run_chunked(_chunk, n_blocks, seed, args, replicas))


def simulate_trajectories(
    params: ModelParams,
    horizon: float,
    n: int,
    seed: int,
    replicas: int | None = None,
    max_events: int = DEFAULT_MAX_EVENTS,
) -> BlockBatch:
    """Counters at time ``horizon`` for ``n`` independent runs from time 0."""
    if horizon < 0:
        raise ValueError("horizon must be >= 0")
    _check_dim(params)
    args = (params.d, params.p, params.mu, params.lam, float(horizon), max_events)
    return BlockBatch.concat(run_chunked(_chunk, n, seed, args, replicas))
