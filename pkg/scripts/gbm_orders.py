"""Milstein and Euler-Maruyama strong orders on GBM against the exact solution."""

import argparse
from fractions import Fraction

from sdde import problems
from sdde.harness import StudyPlan, fit_rate, strong_errors
from sdde.model import TruncationPolicy
from sdde.scheme import SchemeConfig


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--paths", type=int, default=2000)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--theta", type=float, default=0.5)
    args = ap.parse_args()
    plan = StudyPlan(levels=[Fraction(1, 2**j) for j in range(5, 10)], reference_dt=Fraction(1, 512),
                     num_paths=args.paths, seed=args.seed)
    spec = problems.gbm()
    for method in ("milstein", "em"):
        table = strong_errors(spec, TruncationPolicy.none(), SchemeConfig(theta=args.theta), plan,
                              reference="exact", method=method)
        slope, _, r2 = fit_rate(table, 2.0)
        errs = ", ".join(f"{e:.3e}" for e in table.error[:, 0])
        print(f"{method:9s} slope {slope:.3f} (r2 {r2:.4f})  errors {errs}")


if __name__ == "__main__":
    main()
