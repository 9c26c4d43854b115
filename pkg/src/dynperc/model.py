"""Model parameters and the walker's attempted-jump law.

Directions are indexed ``0 .. 2d-1`` in the fixed order
``(+e1, -e1, +e2, -e2, ...)``; index ``2*(axis-1) + (0 if sign > 0 else 1)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Dict, Tuple

import numpy as np


@dataclass(frozen=True)
class ModelParams:
    d: int
    p: float
    mu: float
    lam: float = 0.0

    def __post_init__(self):
        if int(self.d) != self.d or self.d < 1:
            raise ValueError(f"d must be an integer >= 1, got {self.d!r}")
        if not 0.0 < self.p < 1.0:
            raise ValueError(f"p must lie in (0, 1), got {self.p!r}")
        if not (self.mu > 0.0 and math.isfinite(self.mu)):
            raise ValueError(f"mu must be positive, got {self.mu!r}")
        if not self.lam >= 0.0:
            raise ValueError(f"lambda must be >= 0, got {self.lam!r}")

    @property
    def z_lambda(self) -> float:
        return z_lambda(self)

    def with_lambda(self, lam: float) -> "ModelParams":
        return ModelParams(self.d, self.p, self.mu, lam)

    def as_dict(self) -> dict:
        return {"d": self.d, "p": self.p, "mu": self.mu, "lambda": self.lam}


@dataclass(frozen=True, order=True)
class Direction:
    axis: int  # 1-based
    sign: int  # +1 or -1

    @property
    def index(self) -> int:
        return 2 * (self.axis - 1) + (0 if self.sign > 0 else 1)

    @classmethod
    def from_index(cls, k: int) -> "Direction":
        return cls(k // 2 + 1, 1 if k % 2 == 0 else -1)


Site = Tuple[int, ...]


@dataclass(frozen=True)
class EdgeId:
    """Edge ``{base, base + e_axis}``, keyed by its lower endpoint along ``axis``."""

    base: Site
    axis: int

    @classmethod
    def between(cls, x: Site, y: Site) -> "EdgeId":
        diff = [b - a for a, b in zip(x, y)]
        nz = [i for i, v in enumerate(diff) if v != 0]
        if len(x) != len(y) or len(nz) != 1 or abs(diff[nz[0]]) != 1:
            raise ValueError(f"{x} and {y} are not nearest neighbours")
        i = nz[0]
        return cls(x if diff[i] > 0 else y, i + 1)

    @classmethod
    def at(cls, x: Site, direction: Direction) -> "EdgeId":
        if direction.sign > 0:
            return cls(tuple(x), direction.axis)
        base = list(x)
        base[direction.axis - 1] -= 1
        return cls(tuple(base), direction.axis)


def directions(d: int) -> list[Direction]:
    return [Direction.from_index(k) for k in range(2 * d)]


def step(x: Site, direction: Direction) -> Site:
    y = list(x)
    y[direction.axis - 1] += direction.sign
    return tuple(y)


def z_lambda(params: ModelParams, lam: float | None = None) -> float:
    lam = params.lam if lam is None else lam
    return math.exp(lam) + math.exp(-lam) + 2 * params.d - 2


def z_prime(lam: float) -> float:
    return math.exp(lam) - math.exp(-lam)


def direction_weights(d: int, lam: float) -> np.ndarray:
    """Jump probabilities as an array in direction-index order.

    Written in terms of ``exp(-lam)`` so that it stays finite for any
    ``lam`` including ``inf``.
    """
    a = math.exp(-lam)
    a2 = a * a
    denom = 1.0 + a2 + (2 * d - 2) * a
    w = np.full(2 * d, a / denom)
    w[0] = 1.0 / denom
    w[1] = a2 / denom
    return w


def jump_probabilities(params: ModelParams) -> Dict[Direction, float]:
    w = direction_weights(params.d, params.lam)
    return {Direction.from_index(k): float(w[k]) for k in range(2 * params.d)}


def direction_cdf(d: int, lam: float) -> np.ndarray:
    """Right endpoints of the inverse-CDF intervals; last entry is exactly 1."""
    c = np.cumsum(direction_weights(d, lam))
    c[-1] = 1.0
    return c


def sample_direction(params: ModelParams, u: float) -> Direction:
    if not 0.0 <= u < 1.0:
        raise ValueError(f"u must lie in [0, 1), got {u!r}")
    cdf = direction_cdf(params.d, params.lam)
    return Direction.from_index(int(np.searchsorted(cdf, u, side="right")))
