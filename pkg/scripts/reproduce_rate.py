"""Strong convergence study of the super-linear test equation.

    python3 scripts/reproduce_rate.py --paths 2000 --seeds 0 1 --threads 4
"""

import argparse
from fractions import Fraction

from sdde import problems
from sdde.harness import StudyPlan, fit_rate, strong_errors
from sdde.scheme import SchemeConfig


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--paths", type=int, default=2000)
    ap.add_argument("--seeds", type=int, nargs="+", default=[0])
    ap.add_argument("--theta", type=float, default=problems.EXAMPLE_THETA)
    ap.add_argument("--reference", type=int, default=11, help="reference step is 2^-N")
    ap.add_argument("--substeps", type=int, default=1)
    ap.add_argument("--method", choices=["milstein", "em"], default="milstein")
    ap.add_argument("--threads", type=int, default=None)
    args = ap.parse_args()

    spec = problems.paper_example()
    cfg = SchemeConfig(theta=args.theta, k1_bound=problems.EXAMPLE_K1)
    for seed in args.seeds:
        plan = StudyPlan(levels=[Fraction(1, 2**j) for j in range(6, 10)],
                         reference_dt=Fraction(1, 2**args.reference), num_paths=args.paths,
                         q_bars=(2.0, 4.0), seed=seed, substeps=args.substeps)
        table = strong_errors(spec, problems.example_policy(), cfg, plan, method=args.method, threads=args.threads)
        print(f"seed {seed}")
        for dt, q, err, se, _ in table.rows():
            print(f"  dt=2^{Fraction(dt).denominator.bit_length() - 1:<3d} q={q:g}  error {err:.4e} +- {se:.1e}")
        for q in table.q_bars:
            slope, _, r2 = fit_rate(table, q)
            print(f"  q={q:g}: slope {slope:.3f}  r2 {r2:.4f}")


if __name__ == "__main__":
    main()
