"""Command-line runner.

Every subcommand writes one JSON line per result (or CSV rows for
``--format csv``) to ``--out`` or stdout. Exit codes: 0 success,
1 a verification criterion failed, 2 invalid configuration,
3 censored or aborted simulation.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
import time
from dataclasses import asdict, dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import List, Optional, Sequence

import numpy as np

from . import __version__
from .acceptance import resolve_suite, run_criterion
from .batch import simulate_blocks, simulate_trajectories
from .couple import (
    DEFAULT_EPS,
    estimate_derivative_coupled,
    estimate_speed_large_bias,
    monotone_split_bound,
    simulate_monotone_pairs,
)
from .engine import CensoredBlockError
from .estimate import (
    BlockHistogram,
    Estimate,
    estimate_derivative_formula,
    estimate_mean_tau,
    estimate_sigma2,
    estimate_speed_direct,
    fit_tail_exponent,
    mean_estimate,
    speed_curve_from_unbiased,
)
from .model import ModelParams

EXIT_OK, EXIT_FAILED, EXIT_CONFIG, EXIT_CENSORED = 0, 1, 2, 3
CSV_COLUMNS = ["d", "p", "mu", "lambda", "v", "stderr", "n"]
TAIL_MIN_SAMPLES = 10_000


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    params: ModelParams
    seed: int = 0
    blocks: Optional[int] = None
    horizon: Optional[float] = None
    replicas: int = 1
    output_path: Optional[str] = None
    fmt: str = "jsonl"
    lambda_grid: Optional[List[float]] = None
    eps: float = DEFAULT_EPS
    extra: dict = field(default_factory=dict)

    def validate(self, need_workload: bool = True) -> "RunConfig":
        if need_workload and (self.blocks is None) == (self.horizon is None):
            raise ConfigError("give exactly one of --blocks / --horizon")
        if self.blocks is not None and self.blocks < 2:
            raise ConfigError("--blocks must be >= 2")
        if self.horizon is not None and self.horizon < 0:
            raise ConfigError("--horizon must be >= 0")
        if self.replicas < 1:
            raise ConfigError("--replicas must be >= 1")
        if not 0 <= self.seed < 2 ** 64:
            raise ConfigError("--seed must be a 64-bit unsigned integer")
        if self.lambda_grid is not None:
            g = self.lambda_grid
            if not g or any(b <= a for a, b in zip(g, g[1:])):
                raise ConfigError("--lambda-grid must be non-empty and strictly increasing")
            if g[0] < 0:
                raise ConfigError("--lambda-grid values must be >= 0")
        if self.fmt not in ("jsonl", "csv"):
            raise ConfigError(f"unknown format {self.fmt!r}")
        return self

    def echo(self) -> dict:
        out = {k: v for k, v in asdict(self).items() if k != "params"}
        out["params"] = self.params.as_dict()
        return out


@dataclass
class ResultRecord:
    cmd: str
    params: dict
    estimates: List[dict]
    seed: int
    version: str = __version__
    config: dict = field(default_factory=dict)
    status: str = "ok"
    wall_time: float = 0.0
    timestamp: str = ""

    def check_finite(self):
        for e in self.estimates:
            for key in ("value", "stderr"):
                if not math.isfinite(e[key]):
                    raise ValueError(f"non-finite {key} in estimate {e['name']}")

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=False)

    @classmethod
    def from_json(cls, line: str) -> "ResultRecord":
        return cls(**json.loads(line))


def _estimates(named: Sequence[tuple[str, Estimate]]) -> List[dict]:
    return [e.as_dict(name) for name, e in named]


def _record(cmd: str, cfg: RunConfig, named, t0: float, params: Optional[dict] = None, status: str = "ok"):
    rec = ResultRecord(
        cmd=cmd,
        params=params if params is not None else cfg.params.as_dict(),
        estimates=_estimates(named),
        seed=cfg.seed,
        config=cfg.echo(),
        status=status,
        wall_time=time.perf_counter() - t0,
        timestamp=datetime.now(timezone.utc).isoformat(timespec="seconds"),
    )
    rec.check_finite()
    return rec


def cmd_simulate(cfg: RunConfig) -> List[ResultRecord]:
    """Blocks: speed, diffusivity, derivative, tail fits. Horizon: identities."""
    t0 = time.perf_counter()
    prm = cfg.params
    if cfg.blocks is not None:
        b = simulate_blocks(prm, cfg.blocks, cfg.seed, cfg.replicas)
        named = [
            ("speed", estimate_speed_direct(b)),
            ("sigma2", estimate_sigma2(b)),
            ("derivative", estimate_derivative_formula(b, prm.lam)),
            ("mean_tau", estimate_mean_tau(b)),
        ]
        if len(b) >= TAIL_MIN_SAMPLES:
            for name, sample in (("tau", b.tau), ("U_a", b.U_a)):
                f = fit_tail_exponent(sample, seed=cfg.seed)
                named.append((f"tail_slope_{name}", Estimate(f.slope, f.stderr, len(b), "direct")))
    else:
        n = int(cfg.extra.get("trajectories", 10_000))
        tr = simulate_trajectories(prm, cfg.horizon, n, cfg.seed, cfg.replicas)
        x = tr.R - tr.L
        named = [("displacement", mean_estimate(x, "direct"))]
        if prm.lam > 0:
            named.append(("martingale", mean_estimate(np.exp(-2 * prm.lam * x), "identity")))
        else:
            named.append(("orthogonality", mean_estimate(x * (tr.R_supp - tr.L_supp), "identity")))
    return [_record("simulate", cfg, named, t0)]


def _grid_cells(cfg: RunConfig):
    lams = cfg.lambda_grid or [cfg.params.lam]
    ps = cfg.extra.get("p_grid") or [cfg.params.p]
    mus = cfg.extra.get("mu_grid") or [cfg.params.mu]
    for p in ps:
        for mu in mus:
            for lam in lams:
                yield p, mu, lam


def cmd_sweep(cfg: RunConfig) -> List[ResultRecord]:
    """Speed on every (p, mu, lambda) cell; failures are recorded and skipped.

    ``method="large-bias"`` also reports ``excess``, the speed minus the
    totally asymmetric speed, whose sign separates the two regimes.
    """
    out = []
    for i, (p, mu, lam) in enumerate(_grid_cells(cfg)):
        t0 = time.perf_counter()
        cell = {"d": cfg.params.d, "p": p, "mu": mu, "lambda": lam}
        try:
            prm = ModelParams(cfg.params.d, p, mu, lam)
            if cfg.extra.get("method") == "large-bias":
                est = estimate_speed_large_bias(prm, cfg.blocks, cfg.seed + i, replicas=cfg.replicas)
                vbar = est.meta["reference"]
                named = [("speed", est), ("excess", Estimate(est.value - vbar, est.stderr, est.n, est.method))]
            else:
                named = [("speed", estimate_speed_direct(simulate_blocks(prm, cfg.blocks, cfg.seed + i, cfg.replicas)))]
            out.append(_record("sweep", cfg, named, t0, cell))
        except (ValueError, CensoredBlockError, OverflowError) as exc:
            rec = _record("sweep", cfg, [], t0, cell, status=f"error: {exc}")
            out.append(rec)
    return out


def cmd_curve(cfg: RunConfig) -> List[ResultRecord]:
    t0 = time.perf_counter()
    prm = cfg.params.with_lambda(0.0)
    b = simulate_blocks(prm, cfg.blocks, cfg.seed, cfg.replicas)
    pts = speed_curve_from_unbiased(BlockHistogram.from_blocks(b), estimate_mean_tau(b), cfg.lambda_grid or [0.0])
    named = [("sigma2", estimate_sigma2(b))]
    for pt in pts:
        named += [(f"speed@{pt.lam:g}", pt.speed), (f"derivative@{pt.lam:g}", pt.derivative)]
    return [_record("curve", cfg, named, t0, prm.as_dict())]


def cmd_couple_derivative(cfg: RunConfig) -> List[ResultRecord]:
    t0 = time.perf_counter()
    est = estimate_derivative_coupled(
        cfg.params, cfg.eps, cfg.blocks, cfg.seed,
        conditioned=not cfg.extra.get("unconditioned", False), replicas=cfg.replicas,
    )
    return [_record("couple-derivative", cfg, [("derivative", est)], t0)]


def cmd_couple_monotone(cfg: RunConfig) -> List[ResultRecord]:
    t0 = time.perf_counter()
    prm = cfg.params
    if prm.d != 1:
        raise ConfigError("couple-monotone-1d needs --d 1")
    lam2 = cfg.extra.get("lambda2")
    if lam2 is None:
        raise ConfigError("couple-monotone-1d needs --lambda2")
    pairs = simulate_monotone_pairs(prm.p, prm.mu, prm.lam, lam2, cfg.blocks, cfg.seed, cfg.replicas)
    gap = (pairs.disp2 - pairs.disp1).astype(float)
    tau = mean_estimate(pairs.tau, "direct")
    named = [
        ("gap", mean_estimate(gap, "direct")),
        ("split_fraction", mean_estimate((gap > 0).astype(float), "direct")),
        ("split_bound", Estimate(monotone_split_bound(prm.mu, prm.lam, lam2), 0.0, len(pairs), "identity")),
        ("mean_tau", tau),
    ]
    params = {**prm.as_dict(), "lambda2": lam2}
    return [_record("couple-monotone-1d", cfg, named, t0, params)]


def cmd_verify(args) -> tuple[int, str]:
    nums = resolve_suite(args.suite)
    lines, failed = [], False
    for k in nums:
        res = run_criterion(k, scale=args.scale, budget=args.budget)
        lines.append(res.report())
        failed |= res.status == "" and not res.passed
    return (EXIT_FAILED if failed else EXIT_OK), "\n".join(lines) + "\n"


def _floats(text: str) -> List[float]:
    try:
        return [float(s) for s in text.split(",") if s.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a comma-separated list of numbers: {text!r}") from None


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="dynperc", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="cmd", required=True)

    def common(sp, blocks=None):
        sp.add_argument("--d", type=int, default=2)
        sp.add_argument("--p", type=float, default=0.5)
        sp.add_argument("--mu", type=float, default=1.0)
        sp.add_argument("--lambda", dest="lam", type=float, default=0.0)
        sp.add_argument("--blocks", type=int, default=blocks)
        sp.add_argument("--seed", type=int, default=0)
        sp.add_argument("--replicas", type=int, default=None,
                        help="worker processes (default: $DYNPERC_THREADS or 1)")
        sp.add_argument("--out", default=None, help="output file (default: stdout)")
        sp.add_argument("--format", dest="fmt", choices=("jsonl", "csv"), default="jsonl")

    sp = sub.add_parser("simulate", help="estimates from blocks or a fixed horizon")
    common(sp)
    sp.add_argument("--horizon", type=float, default=None)
    sp.add_argument("--trajectories", type=int, default=10_000)

    sp = sub.add_parser("sweep", help="speed over a lambda and/or (p, mu) grid")
    common(sp, blocks=10_000)
    sp.add_argument("--lambda-grid", type=_floats, default=None)
    sp.add_argument("--p-grid", type=_floats, default=None)
    sp.add_argument("--mu-grid", type=_floats, default=None)
    sp.add_argument("--method", choices=("direct", "large-bias"), default="direct")

    sp = sub.add_parser("curve", help="speed curve reweighted from unbiased blocks")
    common(sp, blocks=100_000)
    sp.add_argument("--lambda-grid", type=_floats, default=[0.0, 0.25, 0.5])

    sp = sub.add_parser("couple-derivative", help="coupled finite-difference derivative")
    common(sp, blocks=100_000)
    sp.add_argument("--eps", type=float, default=DEFAULT_EPS)
    sp.add_argument("--unconditioned", action="store_true",
                    help="do not force a very-bad point into every block")

    sp = sub.add_parser("couple-monotone-1d", help="one-dimensional monotone pair coupling")
    common(sp, blocks=100_000)
    sp.add_argument("--lambda2", type=float, required=True)

    sp = sub.add_parser("verify", help="run acceptance criteria")
    sp.add_argument("--suite", default="all")
    sp.add_argument("--scale", type=float, default=1.0, help="multiplier on sample sizes")
    sp.add_argument("--budget", type=float, default=None, help="seconds per criterion")
    sp.add_argument("--out", default=None)
    return ap


def _config(args) -> RunConfig:
    params = ModelParams(args.d, args.p, args.mu, args.lam)
    extra = {}
    for key in ("p_grid", "mu_grid", "trajectories", "unconditioned", "lambda2", "method"):
        if getattr(args, key, None) is not None:
            extra[key] = getattr(args, key)
    replicas = args.replicas
    cfg = RunConfig(
        params=params, seed=args.seed, blocks=args.blocks,
        horizon=getattr(args, "horizon", None),
        replicas=replicas if replicas is not None else 1,
        output_path=args.out, fmt=args.fmt,
        lambda_grid=getattr(args, "lambda_grid", None),
        eps=getattr(args, "eps", DEFAULT_EPS), extra=extra,
    )
    cfg.validate(need_workload=True)
    if replicas is None:
        cfg.replicas = None  # defer to the environment variable
    return cfg


def render(records: Sequence[ResultRecord], fmt: str) -> str:
    if fmt == "jsonl":
        return "".join(r.to_json() + "\n" for r in records)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS + ["name", "method", "status"])
    for r in records:
        prm = r.params
        if not r.estimates:
            w.writerow([prm["d"], prm["p"], prm["mu"], prm["lambda"], "", "", "", "", "", r.status])
        for e in r.estimates:
            w.writerow([prm["d"], prm["p"], prm["mu"], prm["lambda"],
                        repr(e["value"]), repr(e["stderr"]), e["n"], e["name"], e["method"], r.status])
    return buf.getvalue()


COMMANDS = {
    "simulate": cmd_simulate,
    "sweep": cmd_sweep,
    "curve": cmd_curve,
    "couple-derivative": cmd_couple_derivative,
    "couple-monotone-1d": cmd_couple_monotone,
}


def _emit(text: str, path: Optional[str]):
    if path is None:
        sys.stdout.write(text)
    else:
        Path(path).write_text(text, encoding="utf-8")


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.cmd == "verify":
            code, text = cmd_verify(args)
            _emit(text, args.out)
            return code
        cfg = _config(args)
        records = COMMANDS[args.cmd](cfg)
    except (ConfigError, ValueError) as exc:
        print(f"dynperc: invalid configuration: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (CensoredBlockError, OverflowError, AssertionError) as exc:
        print(f"dynperc: simulation aborted: {exc}", file=sys.stderr)
        return EXIT_CENSORED
    _emit(render(records, cfg.fmt), cfg.output_path)
    if args.cmd == "sweep" and cfg.fmt == "jsonl" and cfg.output_path:
        _emit(render(records, "csv"), str(Path(cfg.output_path).with_suffix(".csv")))
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
