"""Probe the structural assumptions of the test equation.

Scans the plain monotone condition over a range of constants to show where
sampling stops finding violations, then checks the U-weighted condition and
the growth bound used for truncation.
"""

import argparse

from sdde import problems
from sdde.model import TruncationPolicy
from sdde.probe import AssumptionCase, probe_assumption, probe_lambda_bound


def U(m, n):
    return 0.25 * (m - n) ** 2 * (m**2 + n**2)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--samples", type=int, default=100_000)
    ap.add_argument("--box", type=float, default=1e3)
    args = ap.parse_args()
    spec = problems.paper_example()

    a2 = AssumptionCase("A2", {"K": 8.0, "q": 2.0}, U, (0, 1), (-5, 5), args.samples)
    print(probe_assumption(spec, a2).summary())
    for k in (0.1, 0.25, 0.5, 0.75, 0.9, 1.0, 10.0, 1e6):
        case = AssumptionCase("A39", {"K": k, "q": 2.0}, None, (0, 1), (-args.box, args.box), args.samples,
                              label=f"A39 K={k:g}")
        print(probe_assumption(spec, case).summary())
    for name, pol in (("5w^3", problems.example_policy()), ("6w^3", TruncationPolicy.power(6.0, 3.0, 0.125))):
        for w in (1, 2, 5, 10):
            rep = probe_lambda_bound(spec, pol, [w])
            print(f"lambda={name} w={w}: max |coeff| - lambda = {rep.max_violation:.4g}")


if __name__ == "__main__":
    main()
