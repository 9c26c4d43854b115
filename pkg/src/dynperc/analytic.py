"""Closed-form speeds, the large-bias expansion and coupling rates."""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass

from .model import ModelParams, z_lambda


class Regime(str, enum.Enum):
    INCREASING = "eventually-increasing"
    DECREASING = "eventually-decreasing"
    CRITICAL = "critical"


@dataclass(frozen=True)
class RegimeVerdict:
    discriminant: float
    verdict: Regime


def _check_p_mu(p: float, mu: float):
    if not 0.0 < p < 1.0:
        raise ValueError(f"p must lie in (0, 1), got {p}")
    if not (mu > 0.0 and math.isfinite(mu)):
        raise ValueError(f"mu must be positive and finite, got {mu}")


def speed_totally_asymmetric_1d(p: float, mu: float) -> float:
    """Speed of the walk that only ever attempts +e1 jumps."""
    _check_p_mu(p, mu)
    return mu * p / (1.0 - p + mu)


def discriminant(p: float, mu: float) -> float:
    return mu * mu - p * (1.0 - p)


def derivative_constant(params: ModelParams) -> float:
    """Leading coefficient ``C`` in ``v'(lam) ~ C exp(-lam)`` for large bias."""
    d, p, mu = params.d, params.p, params.mu
    return (2 * d - 2) * p * discriminant(p, mu) / (1.0 - p + mu) ** 2


def asymptotic_speed(params: ModelParams) -> float:
    """Two-term large-bias expansion of the speed (remainder dropped)."""
    d, p, mu = params.d, params.p, params.mu
    vbar = speed_totally_asymmetric_1d(p, mu)
    coef = (2 * d - 2) * p / (1.0 - p + mu) ** 2
    return vbar - coef * discriminant(p, mu) / z_lambda(params)


def classify_regime(p: float, mu: float) -> RegimeVerdict:
    _check_p_mu(p, mu)
    disc = discriminant(p, mu)
    if disc > 0:
        verdict = Regime.INCREASING
    elif disc < 0:
        verdict = Regime.DECREASING
    else:
        verdict = Regime.CRITICAL
    return RegimeVerdict(disc, verdict)


def speed_static_full_lattice(params: ModelParams) -> float:
    """Speed when every edge is open (p = 1): the drift of the jump law."""
    return _right_mass(params.d, params.lam) - _left_mass(params.d, params.lam)


def _right_mass(d: int, lam: float) -> float:
    # e^lam / Z_lam written to stay finite for huge or infinite lam
    if math.isinf(lam):
        return 1.0
    a = math.exp(-lam)
    return 1.0 / (1.0 + a * a + (2 * d - 2) * a)


def _left_mass(d: int, lam: float) -> float:
    if math.isinf(lam):
        return 0.0
    a = math.exp(-lam)
    return a * a / (1.0 + a * a + (2 * d - 2) * a)


def _other_mass(d: int, lam: float) -> float:
    if math.isinf(lam):
        return 0.0
    a = math.exp(-lam)
    return (2 * d - 2) * a / (1.0 + a * a + (2 * d - 2) * a)


@dataclass(frozen=True)
class CouplingRates:
    """Per-attempt colour probabilities of the two-bias coupling.

    ``q_vb`` splits into ``vb_other`` (low walk sideways, high walk
    right) and ``vb_left`` (low walk left, high walk right).
    """

    q_g: float
    q_b: float
    q_vb: float
    vb_other: float
    vb_left: float
    thresholds: tuple

    def __iter__(self):
        return iter((self.q_g, self.q_b, self.q_vb))


def coupling_rates(params: ModelParams, eps: float) -> CouplingRates:
    """Good/bad/very-bad probabilities for biases ``lam`` and ``lam + eps``.

    ``eps = inf`` couples with the totally asymmetric walk. The
    thresholds ``(b1, b2, b3, b4)`` cut [0, 1) into the five cases:
    both sideways, very-bad sideways, both left, very-bad left, both right.
    """
    if not eps > 0:
        raise ValueError(f"eps must be positive, got {eps}")
    d, lam = params.d, params.lam
    hi = lam + eps
    g_lo, l_lo, o_lo = _right_mass(d, lam), _left_mass(d, lam), _other_mass(d, lam)
    l_hi, o_hi = _left_mass(d, hi), _other_mass(d, hi)
    # built from the small masses only, so the cuts are monotone in floating
    # point and q_vb keeps its relative accuracy when both biases are large
    b1 = o_hi
    b2 = o_lo
    b3 = o_lo + l_hi
    b4 = o_lo + l_lo
    vb_other = o_lo - o_hi
    vb_left = l_lo - l_hi
    q_vb = vb_other + vb_left
    if not q_vb > 0:
        raise ValueError(
            f"very-bad probability is {q_vb!r}; eps={eps} is below floating-point resolution at lam={lam}"
        )
    rates = CouplingRates(
        q_g=g_lo, q_b=o_hi + l_hi, q_vb=q_vb,
        vb_other=vb_other, vb_left=vb_left, thresholds=(b1, b2, b3, b4),
    )
    total = rates.q_g + rates.q_b + rates.q_vb
    if abs(total - 1.0) > 1e-12 or min(vb_other, vb_left) < 0:
        raise AssertionError(f"inconsistent coupling rates: {rates}")
    return rates
