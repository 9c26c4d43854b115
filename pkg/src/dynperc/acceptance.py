"""Acceptance criteria as runnable checks.

Each ``criterion_<k>`` runs its simulations at full size (``scale=1``)
and returns a :class:`CriterionResult`. The same functions back the
``verify`` subcommand and ``tests/test_acceptance.py``.
"""
from __future__ import annotations

import math
import time
import warnings
from dataclasses import dataclass, field
from typing import Callable, Dict, List

import numpy as np

from .analytic import (
    asymptotic_speed,
    derivative_constant,
    discriminant,
    speed_totally_asymmetric_1d,
)
from .batch import simulate_blocks
from .couple import estimate_derivative_coupled, estimate_speed_large_bias, simulate_monotone_pairs
from .estimate import (
    BlockHistogram,
    agree,
    check_clt,
    check_martingale_identity,
    check_orthogonality,
    combined_stderr,
    estimate_derivative_formula,
    estimate_mean_tau,
    estimate_sigma2,
    estimate_speed_direct,
    estimate_speed_importance,
    fit_tail_exponent,
    speed_curve_from_unbiased,
)
from .model import ModelParams

K = 3.0  # standard errors for every tolerance


@dataclass
class CriterionResult:
    number: int
    title: str
    passed: bool
    checks: List[str] = field(default_factory=list)
    values: Dict[str, float] = field(default_factory=dict)
    elapsed: float = 0.0
    status: str = ""

    def line(self) -> str:
        status = self.status or ("PASS" if self.passed else "FAIL")
        return f"[{status}] criterion {self.number:2d}: {self.title} ({self.elapsed:.1f}s)"

    def report(self) -> str:
        return "\n".join([self.line(), *("    " + c for c in self.checks)])


class _Checks:
    def __init__(self):
        self.lines: List[str] = []
        self.ok = True
        self.values: Dict[str, float] = {}

    def add(self, ok: bool, text: str):
        self.ok &= bool(ok)
        self.lines.append(("ok   " if ok else "FAIL ") + text)

    def note(self, text: str):
        self.lines.append("info " + text)


def _n(base: int, scale: float) -> int:
    return max(1000, int(round(base * scale)))


def criterion_1(scale: float = 1.0, seed: int = 101) -> _Checks:
    c = _Checks()
    for i, mu in enumerate((0.5, 1.0, 2.0)):
        prm = ModelParams(2, 0.5, mu, 1.0)
        est = estimate_mean_tau(simulate_blocks(prm, _n(100_000, scale), seed + i))
        target = math.exp(1.0 / mu)
        c.values[f"mean_tau_mu{mu}"] = est.value
        c.add(abs(est.value - target) <= K * est.stderr,
              f"mu={mu}: mean tau {est.value:.5f} +- {est.stderr:.5f} vs exp(1/mu)={target:.5f}")
    return c


def criterion_2(scale: float = 1.0, seed: int = 201) -> _Checks:
    c = _Checks()
    fits = {}
    for i, mu in enumerate((1.0, 4.0)):
        b = simulate_blocks(ModelParams(2, 0.5, mu, 1.0), _n(100_000, scale), seed + i)
        for name, sample in (("tau", b.tau), ("U_a", b.U_a)):
            f = fit_tail_exponent(sample, min_samples=1000, seed=seed + 10 * i)
            fits[(name, mu)] = f
            c.values[f"slope_{name}_mu{mu}"] = f.slope
            c.add(f.ci[1] < 0,
                  f"mu={mu} {name}: slope {f.slope:.4f}, CI [{f.ci[0]:.4f}, {f.ci[1]:.4f}]")
    f1, f4 = fits[("U_a", 1.0)], fits[("U_a", 4.0)]
    gap = f1.slope - f4.slope
    se = math.hypot(f1.stderr, f4.stderr)
    c.add(gap > K * se, f"U_a slope steepens from mu=1 to mu=4 by {gap:.4f} (3 se = {K * se:.4f})")
    return c


def criterion_3(scale: float = 1.0, seed: int = 301) -> _Checks:
    c = _Checks()
    prm = ModelParams(1, 0.5, 1.0, 20.0)
    est = estimate_speed_direct(simulate_blocks(prm, _n(100_000, scale), seed))
    target = speed_totally_asymmetric_1d(0.5, 1.0)
    c.values["v"] = est.value
    c.add(abs(est.value - target) <= K * est.stderr + 1e-6,
          f"v = {est.value:.5f} +- {est.stderr:.5f} vs {target:.5f}")
    return c


def criterion_4(scale: float = 1.0, seed: int = 401) -> _Checks:
    """Speed at large bias against the two-term expansion."""
    c = _Checks()
    for i, mu in enumerate((1.0, 0.3)):
        vbar = speed_totally_asymmetric_1d(0.5, mu)
        sign = -math.copysign(1.0, discriminant(0.5, mu))
        ests = {}
        for j, lam in enumerate((4.0, 6.0, 8.0)):
            prm = ModelParams(2, 0.5, mu, lam)
            ests[lam] = estimate_speed_large_bias(prm, _n(200_000, scale), seed + 10 * i + j)
        a_fit = abs(ests[4.0].value - asymptotic_speed(ModelParams(2, 0.5, mu, 4.0))) * math.exp(8.0)
        c.values[f"A_mu{mu}"] = a_fit
        c.note(f"mu={mu}: fitted A = {a_fit:.4f}")
        for lam, est in ests.items():
            asym = asymptotic_speed(ModelParams(2, 0.5, mu, lam))
            gap = abs(est.value - asym)
            tol = K * est.stderr + a_fit * math.exp(-2 * lam)
            c.values[f"v_mu{mu}_lam{lam}"] = est.value
            c.add(math.isfinite(a_fit) and gap <= tol,
                  f"mu={mu} lam={lam}: v = {est.value:.7f} +- {est.stderr:.1e}, "
                  f"expansion {asym:.7f}, |gap| {gap:.2e} <= {tol:.2e}")
            if lam >= 6.0:
                z = (est.value - vbar) / est.stderr
                c.add(sign * z > K, f"mu={mu} lam={lam}: (v - vbar)/se = {z:.1f}, expected sign {sign:+.0f}")
    return c


def criterion_5(scale: float = 1.0, seed: int = 501) -> _Checks:
    c = _Checks()
    for i, mu in enumerate((1.0, 0.3)):
        prm = ModelParams(2, 0.5, mu, 6.0)
        est = estimate_derivative_coupled(prm, 0.05, _n(1_000_000, scale), seed + i)
        ref = derivative_constant(prm) * math.exp(-6.0)
        sign = math.copysign(1.0, ref)
        ratio = est.value / ref
        c.values[f"dv_mu{mu}"] = est.value
        c.add(sign * est.z() > K, f"mu={mu}: v' = {est.value:.3e} +- {est.stderr:.1e} (sign {sign:+.0f})")
        c.add(0.5 <= ratio <= 2.0, f"mu={mu}: ratio to C exp(-lam) = {ref:.3e} is {ratio:.3f}")
    return c


def criterion_6(scale: float = 1.0, seed: int = 601) -> _Checks:
    c = _Checks()
    b = simulate_blocks(ModelParams(2, 0.5, 1.0, 0.0), _n(100_000, scale), seed)
    dv = estimate_derivative_formula(b, 0.0)
    s2 = estimate_sigma2(b)
    c.values.update(derivative=dv.value, sigma2=s2.value)
    c.add(agree(dv, s2), f"v'(0) = {dv.value:.5f} +- {dv.stderr:.5f}, sigma^2 = {s2.value:.5f} +- {s2.stderr:.5f}")
    return c


# (d, lambda, p, mu, horizon); bias times horizon kept at most 5 so that the
# exponential weight has a usable variance at 1e5 samples
MARTINGALE_GRID = [
    (1, 0.5, 0.5, 1.0, 10.0),
    (2, 0.25, 0.5, 1.0, 10.0),
    (2, 0.5, 0.3, 0.5, 5.0),
    (3, 0.5, 0.7, 2.0, 5.0),
    (2, 1.0, 0.5, 1.0, 5.0),
    (1, 0.25, 0.3, 0.5, 20.0),
    (2, 0.5, 0.5, 0.3, 10.0),
    (1, 0.5, 0.8, 1.0, 10.0),
]
ORTHOGONALITY_GRID = [
    (2, 0.0, 0.5, 1.0, 20.0),
    (1, 0.0, 0.3, 0.5, 10.0),
    (3, 0.0, 0.7, 0.3, 10.0),
    (2, 0.0, 0.2, 2.0, 5.0),
]


def criterion_7(scale: float = 1.0, seed: int = 701) -> _Checks:
    c = _Checks()
    n = _n(100_000, scale)
    for i, (d, lam, p, mu, t) in enumerate(MARTINGALE_GRID):
        est = check_martingale_identity(ModelParams(d, p, mu, lam), t, n, seed + i)
        c.add(abs(est.value - 1.0) <= K * est.stderr,
              f"martingale d={d} lam={lam} p={p} mu={mu} t={t}: {est.value:.4f} +- {est.stderr:.4f}")
    for i, (d, lam, p, mu, t) in enumerate(ORTHOGONALITY_GRID):
        est = check_orthogonality(ModelParams(d, p, mu, lam), t, n, seed + 100 + i)
        c.add(abs(est.value) <= K * est.stderr,
              f"orthogonality d={d} p={p} mu={mu} t={t}: {est.value:.4f} +- {est.stderr:.4f}")
    return c


def criterion_8(scale: float = 1.0, seed: int = 801) -> _Checks:
    c = _Checks()
    prm = ModelParams(2, 0.5, 1.0, 0.5)
    n = _n(100_000, scale)
    direct = estimate_speed_direct(simulate_blocks(prm, n, seed))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        imp = estimate_speed_importance(simulate_blocks(prm.with_lambda(0.0), n, seed + 1), 0.5)
    unbiased = simulate_blocks(prm.with_lambda(0.0), n, seed + 2)
    curve = speed_curve_from_unbiased(
        BlockHistogram.from_blocks(unbiased), estimate_mean_tau(unbiased), [0.5]
    )[0].speed
    named = {"direct": direct, "importance": imp, "curve": curve}
    c.values.update({k: v.value for k, v in named.items()})
    c.note(f"importance ESS = {imp.meta['ess']:.0f} of {n}")
    keys = list(named)
    for i in range(3):
        for j in range(i + 1, 3):
            a, b = named[keys[i]], named[keys[j]]
            c.add(agree(a, b), f"{keys[i]} {a.value:.5f} vs {keys[j]} {b.value:.5f} "
                               f"(3 se = {K * combined_stderr(a, b):.5f})")
    return c


def criterion_9(scale: float = 1.0, seed: int = 901) -> _Checks:
    c = _Checks()
    n = _n(1_000_000, scale)
    # the kernel aborts with AssertionError on any order violation
    pairs = simulate_monotone_pairs(0.5, 1.0, 0.5, 1.0, n, seed)
    ordered = int(np.sum(pairs.disp1 <= pairs.disp2))
    c.add(ordered == n, f"disp1 <= disp2 in {ordered} of {n} blocks")
    diff = pairs.disp2 - pairs.disp1
    m, se = diff.mean(), diff.std(ddof=1) / math.sqrt(n)
    c.values["mean_gap"] = float(m)
    c.add(m > K * se, f"mean(disp2 - disp1) = {m:.5f} +- {se:.5f}")
    return c


def criterion_10(scale: float = 1.0, seed: int = 1001) -> _Checks:
    c = _Checks()
    for i, lam in enumerate((0.25, 0.5, 1.0, 2.0)):
        est = estimate_speed_direct(simulate_blocks(ModelParams(2, 0.5, 0.3, lam), _n(100_000, scale), seed + i))
        c.values[f"v_lam{lam}"] = est.value
        c.add(est.z() > K, f"lam={lam}: v = {est.value:.5f} +- {est.stderr:.5f}")
    return c


def criterion_11(scale: float = 1.0, seed: int = 1101) -> _Checks:
    c = _Checks()
    b = simulate_blocks(ModelParams(2, 0.5, 1.0, 1.0), _n(100_000, scale), seed)
    rep = check_clt(b, group_size=200, min_groups=5)
    c.values.update(ks_pvalue=rep.ks_pvalue, skewness=rep.skewness)
    c.add(rep.ks_pvalue > 0.01, f"KS p = {rep.ks_pvalue:.3f} over {rep.n_groups} groups of 200")
    c.note(f"skewness {rep.skewness:.3f} +- {rep.skewness_stderr:.3f}, "
           f"excess kurtosis {rep.excess_kurtosis:.3f} +- {rep.kurtosis_stderr:.3f}")
    return c


CRITERIA: Dict[int, tuple[str, Callable[..., _Checks]]] = {
    1: ("regeneration mean", criterion_1),
    2: ("exponential tails", criterion_2),
    3: ("one-dimensional large-bias limit", criterion_3),
    4: ("large-bias expansion", criterion_4),
    5: ("regime signs of the derivative", criterion_5),
    6: ("Einstein relation", criterion_6),
    7: ("exact identities", criterion_7),
    8: ("method triangle", criterion_8),
    9: ("monotone one-dimensional coupling", criterion_9),
    10: ("positivity of the speed", criterion_10),
    11: ("CLT marginal", criterion_11),
}

SUITES: Dict[str, List[int]] = {
    "all": list(CRITERIA),
    "regen": [1, 2],
    "limits": [3, 4, 5],
    "einstein": [6],
    "identities": [7],
    "methods": [8],
    "coupling": [5, 9],
    "positivity": [10],
    "clt": [11],
}


def run_criterion(number: int, scale: float = 1.0, budget: float | None = None) -> CriterionResult:
    """Run one criterion; over-budget runs are reported as inconclusive."""
    title, fn = CRITERIA[number]
    t0 = time.perf_counter()
    checks = fn(scale=scale)
    elapsed = time.perf_counter() - t0
    res = CriterionResult(number, title, checks.ok, checks.lines, checks.values, elapsed)
    if budget is not None and elapsed > budget:
        res.status = "INCONCLUSIVE"
        res.checks.append(f"info wall time {elapsed:.1f}s exceeded budget {budget:.1f}s")
    return res


def resolve_suite(selector: str) -> List[int]:
    if selector in SUITES:
        return SUITES[selector]
    try:
        nums = [int(s) for s in selector.split(",")]
    except ValueError:
        raise ValueError(f"unknown suite {selector!r}; choose from {sorted(SUITES)} or numbers") from None
    bad = [k for k in nums if k not in CRITERIA]
    if bad:
        raise ValueError(f"no criterion numbered {bad}")
    return nums
