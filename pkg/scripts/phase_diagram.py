"""Sign of the large-bias speed excess over a (p, mu) grid.

For each cell the speed at a large bias is estimated by coupling with
the totally asymmetric walk, and the sign of ``v(lam) - vbar`` is
compared with the regime predicted by the discriminant.

    python scripts/phase_diagram.py --lam 5 --blocks 200000
"""
import argparse
import json

import numpy as np

from dynperc.analytic import Regime, asymptotic_speed, classify_regime
from dynperc.couple import estimate_speed_large_bias
from dynperc.model import ModelParams


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--d", type=int, default=2)
    ap.add_argument("--lam", type=float, default=5.0)
    ap.add_argument("--blocks", type=int, default=100_000)
    ap.add_argument("--p-grid", default="0.2,0.4,0.6,0.8")
    ap.add_argument("--mu-grid", default="0.2,0.35,0.5,0.8,1.2")
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    ps = [float(v) for v in args.p_grid.split(",")]
    mus = [float(v) for v in args.mu_grid.split(",")]
    agree = total = 0
    for i, p in enumerate(ps):
        for j, mu in enumerate(mus):
            prm = ModelParams(args.d, p, mu, args.lam)
            est = estimate_speed_large_bias(prm, args.blocks, args.seed + 100 * i + j)
            excess = est.value - est.meta["reference"]
            z = excess / est.stderr if est.stderr > 0 else np.inf
            verdict = classify_regime(p, mu)
            # v increases to vbar from below when the discriminant is positive
            predicted = -1 if verdict.verdict is Regime.INCREASING else 1
            resolved = abs(z) > 3 and verdict.verdict is not Regime.CRITICAL
            if resolved:
                total += 1
                agree += int(np.sign(excess) == predicted)
            print(json.dumps({
                "p": p, "mu": mu, "lambda": args.lam, "speed": est.value, "stderr": est.stderr,
                "excess": excess, "z": z, "regime": verdict.verdict.value,
                "expansion": asymptotic_speed(prm), "resolved": resolved,
            }))
    print(f"# sign agreement on resolved cells: {agree}/{total}")


if __name__ == "__main__":
    main()
