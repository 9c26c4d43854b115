"""Lazy dynamical-percolation environment.

Only edges the walker has looked at are stored. Between two looks an
unmanaged edge keeps its state with probability ``exp(-mu * dt)``
(no rate-mu refresh in between) and is otherwise a fresh Bernoulli(p)
draw. While copy 1 of an edge sits in the infected set its free
refreshes are suppressed; removal of that copy forces one refresh,
which is folded in at the next look.

Random draws happen in a fixed order (see :func:`examine`) so that the
compiled kernels in :mod:`dynperc.kernels` reproduce this module
bit for bit from the same generator.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Dict, Optional

import numpy as np

from .model import EdgeId


class EnvironmentFault(RuntimeError):
    """Contract violation inside the environment bookkeeping."""


@dataclass
class EdgeRecord:
    state: bool
    determined_at: float
    managed: bool = False
    pending_forced_refresh_at: Optional[float] = None


@dataclass
class EnvStore:
    p: float
    mu: float
    records: Dict[EdgeId, EdgeRecord] = field(default_factory=dict)
    clock: float = 0.0


def examine(store: EnvStore, e: EdgeId, t: float, rng: np.random.Generator) -> bool:
    """Return the state (``True`` = open) of ``e`` at time ``t``.

    Draw order: a missing record or a pending forced refresh costs one
    uniform; an unmanaged record costs one uniform for the keep/refresh
    decision and a second one only when a refresh happened.
    """
    if t < store.clock:
        raise EnvironmentFault(f"time regression: {t} < clock {store.clock}")
    store.clock = t
    rec = store.records.get(e)
    if rec is None:
        rec = EdgeRecord(state=bool(rng.random() < store.p), determined_at=t)
        store.records[e] = rec
        return rec.state
    if t < rec.determined_at:
        raise EnvironmentFault(f"time regression on {e}: {t} < {rec.determined_at}")
    if rec.managed:
        return rec.state
    if rec.pending_forced_refresh_at is not None:
        rec.state = bool(rng.random() < store.p)
        rec.pending_forced_refresh_at = None
    elif rng.random() >= math.exp(-store.mu * (t - rec.determined_at)):
        rec.state = bool(rng.random() < store.p)
    rec.determined_at = t
    return rec.state


def mark_managed(store: EnvStore, e: EdgeId) -> None:
    rec = store.records.get(e)
    if rec is None:
        raise EnvironmentFault(f"{e} has never been examined")
    if rec.managed:
        raise EnvironmentFault(f"{e} is already managed")
    rec.managed = True


def apply_forced_refresh(store: EnvStore, e: EdgeId, r: float) -> None:
    rec = store.records.get(e)
    if rec is None or not rec.managed:
        raise EnvironmentFault(f"forced refresh of unmanaged edge {e}")
    if r < rec.determined_at:
        raise EnvironmentFault(f"forced refresh at {r} precedes last look {rec.determined_at}")
    rec.managed = False
    rec.pending_forced_refresh_at = r


def reset(store: EnvStore) -> EnvStore:
    store.records.clear()
    store.clock = 0.0
    return store
