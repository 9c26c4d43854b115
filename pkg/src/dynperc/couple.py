"""Coupled simulations of two walks with different biases.

``simulate_coupled`` runs the colouring coupling: one uniform per
attempt decides both directions, and the two walks share attempt
times, copy lifetimes and (until they first disagree) the environment.
After the first very-bad point the environment store is forked and
each walk keeps its own copy, still driven by the shared removals, so
both regenerate at the same time.

``conditioned=True`` forces a very-bad point into every block and
reports its probability as a weight. The first very-bad index is drawn
from its law given the attempt count, so ``mean(weight * D)`` is an
unbiased estimate of ``E[D]`` for any ``D`` that vanishes when there is
no very-bad point.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import kernels
from .analytic import coupling_rates, speed_totally_asymmetric_1d
from .batch import _check_status
from .engine import DEFAULT_MAX_EVENTS
from .estimate import Estimate, ratio_of_means
from .model import ModelParams
from .streams import run_chunked

DEFAULT_EPS = 0.05


class PointColor(str, enum.Enum):
    GOOD = "good"
    BAD = "bad"
    VERY_BAD = "very-bad"


CASE_COLORS = {
    kernels.CASE_OTHER: PointColor.BAD,
    kernels.CASE_VB_OTHER: PointColor.VERY_BAD,
    kernels.CASE_LEFT: PointColor.BAD,
    kernels.CASE_VB_LEFT: PointColor.VERY_BAD,
    kernels.CASE_GOOD: PointColor.GOOD,
}


@dataclass(frozen=True)
class CoupledBlock:
    tau: float
    disp_lo: int
    disp_hi: int
    first_very_bad_index: Optional[int]
    u_a: int
    weight: float = 1.0
    first_very_bad_case: Optional[int] = None
    n_very_bad: int = 0


@dataclass
class CoupledBatch:
    tau: np.ndarray
    weight: np.ndarray
    disp_lo: np.ndarray
    disp_hi: np.ndarray
    first_vb: np.ndarray  # -1 when the block has no very-bad point
    first_case: np.ndarray
    u_a: np.ndarray
    n_vb: np.ndarray
    case_counts: np.ndarray  # (n, 5), cases 1..5
    conditioned: bool = False

    def __len__(self) -> int:
        return self.tau.shape[0]

    def block(self, i: int) -> CoupledBlock:
        j = int(self.first_vb[i])
        return CoupledBlock(
            float(self.tau[i]), int(self.disp_lo[i]), int(self.disp_hi[i]),
            None if j < 0 else j, int(self.u_a[i]), float(self.weight[i]),
            None if j < 0 else int(self.first_case[i]), int(self.n_vb[i]),
        )

    def color_counts(self) -> dict:
        tot = self.case_counts.sum(axis=0)
        out = {c: 0 for c in PointColor}
        for case, color in CASE_COLORS.items():
            out[color] += int(tot[case - 1])
        return out


def _coupled_chunk(count, rng, d, p, mu, bounds, q_vb, max_events, conditioned):
    status, tau, weight, ints = kernels.coupled_kernel(
        d, p, mu, bounds, q_vb, count, rng, max_events, conditioned
    )
    _check_status(status, "coupled blocks")
    return tau, weight, ints


def simulate_coupled(
    params: ModelParams,
    eps: float,
    n_blocks: int,
    seed: int,
    conditioned: bool = False,
    replicas: int | None = None,
    max_events: int = DEFAULT_MAX_EVENTS,
) -> CoupledBatch:
    """Coupled blocks of the walks with biases ``lam`` and ``lam + eps``."""
    if n_blocks < 1:
        raise ValueError("n_blocks must be >= 1")
    rates = coupling_rates(params, eps)
    args = (params.d, params.p, params.mu, tuple(float(b) for b in rates.thresholds),
            float(rates.q_vb), max_events, bool(conditioned))
    parts = run_chunked(_coupled_chunk, n_blocks, seed, args, replicas)
    tau = np.concatenate([t for t, _, _ in parts])
    weight = np.concatenate([w for _, w, _ in parts])
    ints = np.concatenate([i for _, _, i in parts])
    return CoupledBatch(
        tau, weight, ints[:, 0], ints[:, 1], ints[:, 2], ints[:, 3], ints[:, 4],
        ints[:, 5], ints[:, 6:11], conditioned,
    )


def run_coupled_block(
    params: ModelParams,
    eps: float,
    rng: np.random.Generator,
    max_events: int = DEFAULT_MAX_EVENTS,
) -> CoupledBlock:
    rates = coupling_rates(params, eps)
    status, tau, weight, ints = kernels.coupled_kernel(
        params.d, params.p, params.mu, rates.thresholds, rates.q_vb, 1, rng, max_events, False
    )
    _check_status(status, "coupled block")
    row = ints[0]
    j = int(row[2])
    return CoupledBlock(
        float(tau[0]), int(row[0]), int(row[1]), None if j < 0 else j, int(row[4]),
        float(weight[0]), None if j < 0 else int(row[3]), int(row[5]),
    )


def coupled_difference(batch: CoupledBatch) -> Estimate:
    """``(E[X_hi] - E[X_lo]) / E[tau]`` with a paired-sample delta-method error."""
    diff = batch.weight * (batch.disp_hi - batch.disp_lo)
    return ratio_of_means(diff, batch.tau, "coupled-fd", meta={"conditioned": batch.conditioned})


def estimate_derivative_coupled(
    params: ModelParams,
    eps: float = DEFAULT_EPS,
    n_blocks: int = 100_000,
    seed: int = 0,
    conditioned: bool = True,
    replicas: int | None = None,
) -> Estimate:
    """Forward difference ``(v(lam + eps) - v(lam)) / eps`` from coupled blocks."""
    if not 0 < eps <= 0.1:
        raise ValueError(f"eps must lie in (0, 0.1], got {eps}")
    batch = simulate_coupled(params, eps, n_blocks, seed, conditioned, replicas)
    diff = coupled_difference(batch)
    return Estimate(
        diff.value / eps, diff.stderr / eps, diff.n, "coupled-fd",
        {**diff.meta, "eps": eps, "lambda": params.lam,
         "decoupled_fraction": float(np.mean(batch.first_vb >= 0))},
    )


def estimate_speed_large_bias(
    params: ModelParams,
    n_blocks: int = 100_000,
    seed: int = 0,
    conditioned: bool = True,
    replicas: int | None = None,
) -> Estimate:
    """Speed at ``lam`` as the totally asymmetric speed plus a coupled correction.

    The walk is coupled with the walk that only attempts +e1 jumps, whose
    speed is known exactly; only the (small) difference is simulated.
    """
    batch = simulate_coupled(params, math.inf, n_blocks, seed, conditioned, replicas)
    corr = ratio_of_means(batch.weight * (batch.disp_lo - batch.disp_hi), batch.tau, "coupled-fd")
    vbar = speed_totally_asymmetric_1d(params.p, params.mu)
    return Estimate(
        vbar + corr.value, corr.stderr, corr.n, "coupled-fd",
        {"stderr": "delta", "reference": vbar, "correction": corr.value,
         "conditioned": conditioned, "lambda": params.lam},
    )


@dataclass(frozen=True)
class MonotonePair:
    tau: float
    disp1: int
    disp2: int
    attempts: int
    splits: int


@dataclass
class MonotoneBatch:
    tau: np.ndarray
    disp1: np.ndarray
    disp2: np.ndarray
    attempts: np.ndarray
    splits: np.ndarray

    def __len__(self) -> int:
        return self.tau.shape[0]


def _right_prob(lam: float) -> float:
    return 1.0 / (1.0 + math.exp(-2.0 * lam))


def _check_pair(p: float, mu: float, lambda1: float, lambda2: float):
    ModelParams(1, p, mu, lambda1)
    if not 0 < lambda1 < lambda2:
        raise ValueError(f"need 0 < lambda1 < lambda2, got {lambda1}, {lambda2}")


def _pair_chunk(count, rng, p, mu, a1, a2, max_events):
    status, tau, ints = kernels.monotone_pair_kernel(p, mu, a1, a2, count, rng, max_events)
    _check_status(status, "monotone pair")
    return tau, ints


def simulate_monotone_pairs(
    p: float,
    mu: float,
    lambda1: float,
    lambda2: float,
    n_blocks: int,
    seed: int,
    replicas: int | None = None,
    max_events: int = DEFAULT_MAX_EVENTS,
) -> MonotoneBatch:
    """One-dimensional pairs that move together while co-located.

    Raises ``AssertionError`` if the lower-bias walk ever overtakes the
    other one.
    """
    _check_pair(p, mu, lambda1, lambda2)
    args = (p, mu, _right_prob(lambda1), _right_prob(lambda2), max_events)
    parts = run_chunked(_pair_chunk, n_blocks, seed, args, replicas)
    tau = np.concatenate([t for t, _ in parts])
    ints = np.concatenate([i for _, i in parts])
    return MonotoneBatch(tau, ints[:, 0], ints[:, 1], ints[:, 2], ints[:, 3])


def run_monotone_pair_1d(
    p: float,
    mu: float,
    lambda1: float,
    lambda2: float,
    rng: np.random.Generator,
    max_events: int = DEFAULT_MAX_EVENTS,
) -> MonotonePair:
    _check_pair(p, mu, lambda1, lambda2)
    status, tau, ints = kernels.monotone_pair_kernel(
        p, mu, _right_prob(lambda1), _right_prob(lambda2), 1, rng, max_events
    )
    _check_status(status, "monotone pair")
    return MonotonePair(float(tau[0]), *(int(v) for v in ints[0]))


def monotone_split_bound(mu: float, lambda1: float, lambda2: float) -> float:
    """Lower bound on ``P(disp1 < disp2)`` for the co-location coupling."""
    return (_right_prob(lambda2) - _right_prob(lambda1)) * (mu / (mu + 1.0)) ** 2
