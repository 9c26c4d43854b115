"""Reference event-driven simulation of the walk and its infected set.

This is the readable implementation: explicit edge copies, a removal
queue and an :class:`~dynperc.env.EnvStore`. The compiled kernels in
:mod:`dynperc.kernels` consume the same generator in the same order and
must agree with it exactly; bulk runs go through :func:`simulate_blocks`.

Copy lifetimes are i.i.d. Exp(mu), scheduled at insertion. This has the
same law as a removal clock of rate ``mu * |I_t|`` picking a uniform
victim.
"""
from __future__ import annotations

import heapq
import itertools
from dataclasses import dataclass, field
from typing import Dict, Iterator, List, Set, Tuple

import numpy as np

from . import env as envmod
from .model import Direction, EdgeId, ModelParams, Site, direction_cdf, step
from .streams import CHUNK_SIZE, chunk_rng

DEFAULT_MAX_EVENTS = 10_000_000


class CensoredBlockError(RuntimeError):
    """A run hit the event guard before regenerating (or reaching its horizon)."""


@dataclass(frozen=True, order=True)
class EdgeCopy:
    edge: EdgeId = field(compare=False)
    copy_index: int


class InfectedSet:
    def __init__(self):
        self.members: Dict[EdgeId, Set[int]] = {}
        self.removal_queue: List[Tuple[float, int, EdgeCopy]] = []
        self._seq = itertools.count()

    def __len__(self) -> int:
        return len(self.removal_queue)

    def __bool__(self) -> bool:
        return bool(self.removal_queue)

    def add(self, edge: EdgeId, removal_time: float) -> EdgeCopy:
        present = self.members.setdefault(edge, set())
        j = 1
        while j in present:
            j += 1
        present.add(j)
        copy = EdgeCopy(edge, j)
        heapq.heappush(self.removal_queue, (removal_time, next(self._seq), copy))
        return copy

    def next_removal_time(self) -> float:
        return self.removal_queue[0][0] if self.removal_queue else float("inf")

    def pop(self) -> Tuple[float, EdgeCopy]:
        r, _, copy = heapq.heappop(self.removal_queue)
        present = self.members[copy.edge]
        present.remove(copy.copy_index)
        if not present:
            del self.members[copy.edge]
        return r, copy


@dataclass(frozen=True)
class BlockStats:
    tau: float
    displacement: Site
    R: int
    L: int
    R_a: int
    L_a: int
    U: int
    U_a: int

    @property
    def x1(self) -> int:
        return self.displacement[0]

    @property
    def R_supp(self) -> int:
        return self.R_a - self.R

    @property
    def L_supp(self) -> int:
        return self.L_a - self.L


@dataclass
class Trajectory:
    horizon: float
    events: List[Tuple[float, Direction, bool]]
    final_position: Site

    def counts(self) -> Dict[str, int]:
        c = dict(R=0, L=0, R_a=0, L_a=0, U=0, U_a=len(self.events))
        for _, dirn, done in self.events:
            if dirn.axis == 1:
                key = "R" if dirn.sign > 0 else "L"
                c[key + "_a"] += 1
                c[key] += int(done)
            c["U"] += int(done)
        return c


class _Walker:
    """State shared by block and fixed-horizon runs."""

    def __init__(self, params: ModelParams, rng: np.random.Generator, max_events: int):
        self.params = params
        self.rng = rng
        self.max_events = max_events
        self.cdf = direction_cdf(params.d, params.lam)
        self.store = envmod.EnvStore(params.p, params.mu)
        self.infected = InfectedSet()
        self.pos: Site = (0,) * params.d
        self.n_events = 0
        self.log: List[Tuple[float, Direction, bool]] = []
        self.next_attempt = rng.exponential(1.0)

    def _tick(self):
        self.n_events += 1
        if self.n_events > self.max_events:
            raise CensoredBlockError(f"event guard of {self.max_events} exceeded")

    def removal(self) -> float:
        self._tick()
        r, copy = self.infected.pop()
        if copy.copy_index == 1:
            envmod.apply_forced_refresh(self.store, copy.edge, r)
        return r

    def attempt(self):
        self._tick()
        t = self.next_attempt
        u = self.rng.random()
        dirn = Direction.from_index(int(np.searchsorted(self.cdf, u, side="right")))
        edge = EdgeId.at(self.pos, dirn)
        is_open = envmod.examine(self.store, edge, t, self.rng)
        if is_open:
            self.pos = step(self.pos, dirn)
        self.log.append((t, dirn, is_open))
        life = self.rng.exponential(1.0 / self.params.mu)
        copy = self.infected.add(edge, t + life)
        if copy.copy_index == 1:
            envmod.mark_managed(self.store, edge)
        self.next_attempt = t + self.rng.exponential(1.0)


def _stats(tau: float, w: _Walker) -> BlockStats:
    c = Trajectory(tau, w.log, w.pos).counts()
    return BlockStats(tau=tau, displacement=w.pos, **c)


def run_block(
    params: ModelParams,
    rng: np.random.Generator,
    max_events: int = DEFAULT_MAX_EVENTS,
) -> BlockStats:
    """Simulate from a fresh environment up to the first regeneration time."""
    w = _Walker(params, rng, max_events)
    while True:
        if w.infected and w.infected.next_removal_time() <= w.next_attempt:
            r = w.removal()
            if not w.infected:
                return _stats(r, w)
        else:
            w.attempt()


def run_trajectory(
    params: ModelParams,
    horizon: float,
    rng: np.random.Generator,
    max_events: int = DEFAULT_MAX_EVENTS,
) -> Trajectory:
    if horizon < 0:
        raise ValueError("horizon must be >= 0")
    w = _Walker(params, rng, max_events)
    while True:
        nr = w.infected.next_removal_time()
        if min(nr, w.next_attempt) > horizon:
            break
        if nr <= w.next_attempt:
            w.removal()
        else:
            w.attempt()
    return Trajectory(horizon, w.log, w.pos)


def block_sequence(params: ModelParams, n_blocks: int, seed: int) -> Iterator[BlockStats]:
    """Yield ``n_blocks`` i.i.d. blocks using the chunked stream layout.

    Block ``i`` comes from chunk ``i // CHUNK_SIZE``; the sequence equals
    the one produced by :func:`dynperc.kernels.simulate_blocks`.
    """
    if n_blocks < 1:
        raise ValueError("n_blocks must be >= 1")
    for k in range(0, (n_blocks + CHUNK_SIZE - 1) // CHUNK_SIZE):
        rng = chunk_rng(seed, k)
        for _ in range(min(CHUNK_SIZE, n_blocks - k * CHUNK_SIZE)):
            yield run_block(params, rng)
