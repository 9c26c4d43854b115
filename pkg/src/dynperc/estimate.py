"""Monte Carlo estimators built on regeneration blocks.

Every estimator of the speed is a ratio of block means,
``mean(a) / mean(tau)``. Standard errors use the delta method
(influence function ``(a - r*tau) / mean(tau)``) unless a bootstrap is
requested; the choice is recorded in ``Estimate.meta["stderr"]``.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
from scipy import stats

from .batch import BlockBatch, simulate_trajectories
from .engine import BlockStats
from .model import ModelParams, z_prime

METHODS = ("direct", "importance", "derivative-formula", "coupled-fd", "identity")
IMPORTANCE_MAX_LAMBDA = 1.5
MIN_ESS = 100.0


@dataclass(frozen=True)
class Estimate:
    value: float
    stderr: float
    n: int
    method: str
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if not self.stderr >= 0:
            raise ValueError(f"stderr must be >= 0, got {self.stderr}")
        if self.stderr > 0 and self.n < 2:
            raise ValueError("a positive stderr needs n >= 2")

    def interval(self, k: float = 3.0) -> tuple[float, float]:
        return self.value - k * self.stderr, self.value + k * self.stderr

    def z(self, target: float = 0.0) -> float:
        """Signed distance to ``target`` in standard errors."""
        if self.stderr == 0:
            return 0.0 if self.value == target else math.copysign(math.inf, self.value - target)
        return (self.value - target) / self.stderr

    def as_dict(self, name: str) -> dict:
        return {"name": name, "value": self.value, "stderr": self.stderr,
                "n": self.n, "method": self.method}


def combined_stderr(*ests: Estimate) -> float:
    return math.sqrt(sum(e.stderr ** 2 for e in ests))


def agree(a: Estimate, b: Estimate, k: float = 3.0) -> bool:
    return abs(a.value - b.value) <= k * combined_stderr(a, b)


def as_batch(blocks: BlockBatch | Iterable[BlockStats]) -> BlockBatch:
    if isinstance(blocks, BlockBatch):
        batch = blocks
    else:
        batch = BlockBatch.from_stats(blocks)
    if len(batch) == 0:
        raise ValueError("empty block stream")
    return batch


def _need(n: int, k: int = 2):
    if n < k:
        raise ValueError(f"need at least {k} blocks, got {n}")


def ratio_of_means(
    a: np.ndarray,
    b: np.ndarray,
    method: str,
    stderr: str = "delta",
    n_boot: int = 200,
    seed: int = 0,
    meta: dict | None = None,
) -> Estimate:
    """``mean(a) / mean(b)`` with a delta-method or bootstrap standard error."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    n = a.shape[0]
    _need(n)
    mb = b.mean()
    r = a.mean() / mb
    if stderr == "delta":
        infl = (a - r * b) / mb
        se = float(infl.std(ddof=1) / math.sqrt(n))
    elif stderr == "bootstrap":
        se = _bootstrap_se(lambda idx: a[idx].mean() / b[idx].mean(), n, n_boot, seed)
    else:
        raise ValueError(f"unknown stderr method {stderr!r}")
    return Estimate(float(r), se, n, method, {"stderr": stderr, **(meta or {})})


def _bootstrap_se(stat, n: int, n_boot: int, seed: int) -> float:
    rng = np.random.default_rng(seed)
    reps = np.array([stat(rng.integers(0, n, n)) for _ in range(n_boot)])
    return float(reps.std(ddof=1))


def mean_estimate(x: np.ndarray, method: str, meta: dict | None = None) -> Estimate:
    x = np.asarray(x, dtype=float)
    n = x.shape[0]
    se = float(x.std(ddof=1) / math.sqrt(n)) if n > 1 else 0.0
    return Estimate(float(x.mean()), se, n, method, {"stderr": "iid", **(meta or {})})


def estimate_speed_direct(blocks, stderr: str = "delta", n_boot: int = 200, seed: int = 0) -> Estimate:
    """Speed as mean block displacement along e1 over mean block length."""
    b = as_batch(blocks)
    return ratio_of_means(b.x1, b.tau, "direct", stderr, n_boot, seed)


def estimate_mean_tau(blocks) -> Estimate:
    return mean_estimate(as_batch(blocks).tau, "direct")


def estimate_sigma2(blocks, stderr: str = "delta", n_boot: int = 200, seed: int = 0) -> Estimate:
    """Diffusivity along e1: ``Var(X1) / mean(tau)`` per block."""
    b = as_batch(blocks)
    n = len(b)
    _need(n)
    x = b.x1.astype(float)
    tau = b.tau
    m1, m2, mt = x.mean(), (x * x).mean(), tau.mean()
    value = (m2 - m1 * m1) / mt
    if stderr == "delta":
        infl = ((x * x - m2) - 2 * m1 * (x - m1)) / mt - value * (tau - mt) / mt
        se = float(infl.std(ddof=1) / math.sqrt(n))
    elif stderr == "bootstrap":
        se = _bootstrap_se(lambda i: x[i].var() / tau[i].mean(), n, n_boot, seed)
    else:
        raise ValueError(f"unknown stderr method {stderr!r}")
    return Estimate(float(value), se, n, "direct", {"stderr": stderr})


def log_weights(b: BlockBatch, lam: float) -> np.ndarray:
    """Log of the change-of-measure weight from bias 0 to ``lam`` per block."""
    d = b.d
    log_ratio = math.log(2 * d) - math.log(math.exp(lam) + math.exp(-lam) + 2 * d - 2)
    return lam * (b.R_a - b.L_a) + b.U_a * log_ratio


def estimate_speed_importance(blocks, target_lambda: float, warn: bool = True) -> Estimate:
    """Speed at ``target_lambda`` from blocks simulated without bias.

    ``meta`` carries the effective sample size and the weight mean,
    whose expectation is exactly 1.
    """
    b = as_batch(blocks)
    if target_lambda < 0:
        raise ValueError("target_lambda must be >= 0")
    w = np.exp(log_weights(b, target_lambda))
    ess = float(w.sum() ** 2 / (w * w).sum())
    wm = mean_estimate(w, "identity")
    if warn and (ess < MIN_ESS or target_lambda > IMPORTANCE_MAX_LAMBDA):
        warnings.warn(
            f"importance weights at lambda={target_lambda}: ESS={ess:.1f} of {len(b)}",
            RuntimeWarning, stacklevel=2,
        )
    return ratio_of_means(
        b.x1 * w, b.tau, "importance",
        meta={"target_lambda": target_lambda, "ess": ess,
              "weight_mean": wm.value, "weight_mean_stderr": wm.stderr},
    )


def score(b: BlockBatch, lam: float) -> np.ndarray:
    """Derivative in ``lam`` of the log-likelihood of a block's directions."""
    d = b.d
    zl = math.exp(lam) + math.exp(-lam) + 2 * d - 2
    return (b.R_a - b.L_a) - (z_prime(lam) / zl) * b.U_a


def estimate_derivative_formula(blocks, lam: float, control_variate: bool = False) -> Estimate:
    """``v'(lam)`` as ``E[X1 * score] / E[tau]`` from blocks at bias ``lam``.

    With ``control_variate`` the numerator uses ``(X1 - beta*U_a) * score``;
    the subtracted term has mean zero because attempt counts do not
    depend on the chosen directions.
    """
    b = as_batch(blocks)
    s = score(b, lam)
    x = b.x1.astype(float)
    meta = {"lambda": lam, "control_variate": control_variate}
    if control_variate:
        us = b.U_a * s
        beta = float((x * us * s).sum() / (us * us).sum()) if np.any(us) else 0.0
        x = x - beta * b.U_a
        meta["beta"] = beta
    return ratio_of_means(x * s, b.tau, "derivative-formula", meta=meta)


@dataclass
class BlockHistogram:
    """Multiplicities of ``(R_a, L_a, R, L, U_a)`` over unbiased blocks."""

    keys: np.ndarray  # (K, 5) int64
    weights: np.ndarray  # (K,) int64
    d: int

    @property
    def total(self) -> int:
        return int(self.weights.sum())

    @property
    def counts(self) -> dict:
        return {tuple(int(v) for v in k): int(c) for k, c in zip(self.keys, self.weights)}

    @classmethod
    def from_blocks(cls, blocks) -> "BlockHistogram":
        b = as_batch(blocks)
        stacked = np.stack([b.R_a, b.L_a, b.R, b.L, b.U_a], axis=1)
        keys, counts = np.unique(stacked, axis=0, return_counts=True)
        return cls(keys.astype(np.int64), counts.astype(np.int64), b.d)


@dataclass(frozen=True)
class CurvePoint:
    lam: float
    speed: Estimate
    derivative: Estimate


def speed_curve_from_unbiased(
    hist: BlockHistogram,
    mean_tau: Estimate | float,
    lambdas: Sequence[float],
) -> list[CurvePoint]:
    """Speed and its derivative at every ``lambdas`` from one unbiased histogram.

    The standard errors treat the histogram and ``mean_tau`` as
    independent; pass an estimate from a separate sample (or a float for
    an exact value) to make that literal.
    """
    if hist.total == 0 or hist.keys.shape[0] == 0:
        raise ValueError("empty histogram")
    if isinstance(mean_tau, Estimate):
        mt, mt_se = mean_tau.value, mean_tau.stderr
    else:
        mt, mt_se = float(mean_tau), 0.0
    n = hist.total
    p0 = hist.weights / n
    ra, la, r, l, ua = (hist.keys[:, j].astype(float) for j in range(5))
    x = r - l
    out = []
    for lam in lambdas:
        zl = math.exp(lam) + math.exp(-lam) + 2 * hist.d - 2
        logm = lam * (ra - la) + ua * (math.log(2 * hist.d) - math.log(zl))
        g = x * np.exp(logm)
        gp = g * ((ra - la) - ua * z_prime(lam) / zl)
        pts = []
        for vals, method in ((g, "importance"), (gp, "derivative-formula")):
            f = float((vals * p0).sum())
            var_f = float(((vals - f) ** 2 * p0).sum()) * n / max(n - 1, 1)
            se_f = math.sqrt(var_f / n)
            v = f / mt
            se = math.sqrt((se_f / mt) ** 2 + (f * mt_se / mt ** 2) ** 2)
            pts.append(Estimate(v, se, n, method, {"lambda": lam, "f": f, "stderr": "delta"}))
        out.append(CurvePoint(float(lam), pts[0], pts[1]))
    return out


def check_martingale_identity(
    params: ModelParams,
    horizon: float,
    n: int,
    seed: int = 0,
    replicas: int | None = None,
) -> Estimate:
    """Sample mean of ``exp(-2 lam (R(t) - L(t)))``; its expectation is 1."""
    if params.lam == 0:
        return Estimate(1.0, 0.0, n, "identity", {"stderr": "exact"})
    traj = simulate_trajectories(params, horizon, n, seed, replicas)
    vals = np.exp(-2.0 * params.lam * (traj.R - traj.L))
    return mean_estimate(vals, "identity", {"horizon": horizon})


def check_orthogonality(
    params: ModelParams,
    horizon: float,
    n: int,
    seed: int = 0,
    replicas: int | None = None,
) -> Estimate:
    """Mean of ``(R - L)(R_supp - L_supp)`` at time ``horizon`` without bias."""
    if params.lam != 0:
        raise ValueError("the orthogonality identity holds at lambda = 0 only")
    traj = simulate_trajectories(params, horizon, n, seed, replicas)
    vals = (traj.R - traj.L) * (traj.R_supp - traj.L_supp)
    return mean_estimate(vals, "identity", {"horizon": horizon})


@dataclass(frozen=True)
class CLTReport:
    group_size: int
    n_groups: int
    ks_statistic: float
    ks_pvalue: float
    skewness: float
    skewness_stderr: float
    excess_kurtosis: float
    kurtosis_stderr: float


def check_clt(blocks, group_size: int = 200, min_groups: int = 20) -> CLTReport:
    """Normality of standardized displacement sums over groups of blocks."""
    b = as_batch(blocks)
    if group_size < 1:
        raise ValueError("group_size must be >= 1")
    n_groups = len(b) // group_size
    if n_groups < min_groups:
        raise ValueError(f"{len(b)} blocks give {n_groups} groups of {group_size}; need {min_groups}")
    x = b.x1[: n_groups * group_size].astype(float)
    var = x.var(ddof=1)
    if var == 0:
        raise ValueError("degenerate displacements")
    sums = x.reshape(n_groups, group_size).sum(axis=1)
    z = (sums - group_size * x.mean()) / math.sqrt(group_size * var)
    ks = stats.kstest(z, "norm")
    return CLTReport(
        group_size, n_groups, float(ks.statistic), float(ks.pvalue),
        float(stats.skew(z)), math.sqrt(6.0 / n_groups),
        float(stats.kurtosis(z)), math.sqrt(24.0 / n_groups),
    )


@dataclass(frozen=True)
class TailFit:
    slope: float
    ci: tuple[float, float]
    stderr: float
    n_points: int


def _survival_slope(x: np.ndarray, lo: float, hi: float) -> tuple[float, int]:
    xs = np.sort(x)
    n = xs.shape[0]
    vals, first = np.unique(xs, return_index=True)
    surv = (n - first) / n  # P(X >= value)
    keep = (surv >= lo) & (surv <= hi)
    if keep.sum() < 3:
        return math.nan, int(keep.sum())
    slope = np.polyfit(vals[keep], np.log(surv[keep]), 1)[0]
    return float(slope), int(keep.sum())


def fit_tail_exponent(
    samples: Sequence[float],
    min_samples: int = 10_000,
    upper: float = 0.1,
    min_count: int = 10,
    n_boot: int = 200,
    seed: int = 0,
) -> TailFit:
    """Least-squares slope of the log survival function over its upper tail.

    Uses points with survival in ``[min_count / n, upper]``; the interval
    is the slope plus or minus three bootstrap standard errors.
    """
    x = np.asarray(samples, dtype=float)
    n = x.shape[0]
    if n < min_samples:
        raise ValueError(f"need at least {min_samples} samples, got {n}")
    lo = min_count / n
    slope, k = _survival_slope(x, lo, upper)
    if not math.isfinite(slope):
        raise ValueError("degenerate samples: too few distinct tail values")
    rng = np.random.default_rng(seed)
    reps = [_survival_slope(x[rng.integers(0, n, n)], lo, upper)[0] for _ in range(n_boot)]
    reps = np.array([r for r in reps if math.isfinite(r)])
    se = float(reps.std(ddof=1))
    return TailFit(slope, (slope - 3 * se, slope + 3 * se), se, k)
