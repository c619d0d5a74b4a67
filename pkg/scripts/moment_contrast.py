"""Second moments with and without truncation on a super-linear problem."""

import math
from fractions import Fraction

import numpy as np

from sdde import problems
from sdde.harness import moment_estimate
from sdde.model import ProblemSpec, TimeGrid, TruncationPolicy
from sdde.scheme import SchemeConfig


def main():
    spec = ProblemSpec(
        drift=lambda t, x, y: -5 * x**3 + x, diffusion=lambda t, x, y: x**2 + 0 * y,
        diffusion_dx=lambda t, x, y: 2 * x + 0 * y, diffusion_dy=lambda t, x, y: 0 * x,
        delay=0.25, horizon=1.0, initial_segment=lambda t: 1 + 0 * np.asarray(t),
    )
    pol = TruncationPolicy.power(6.0, 3.0, 0.125)
    cfg = SchemeConfig(theta=0.0)
    for j in range(2, 8):
        grid = TimeGrid.build(Fraction(1, 2**j), 0.25, 1.0)
        with np.errstate(all="ignore"):
            wild = moment_estimate(spec, pol, cfg, grid, 1000, 2.0, 0, radius=math.inf)
        tame = moment_estimate(spec, pol, cfg, grid, 1000, 2.0, 0)
        w = f"blow-up at step {wild.step}, path {wild.path}" if wild.blown_up else f"{wild.value:.4g}"
        print(f"dt=2^-{j}: untruncated {w:32s} truncated {tame.value:.4g}")

    test = problems.paper_example()
    tcfg = SchemeConfig(theta=0.5, k1_bound=problems.EXAMPLE_K1)
    for j in range(6, 10):
        grid = TimeGrid.build(Fraction(1, 2**j), 0.25, 1.0)
        vals = [moment_estimate(test, problems.example_policy(), tcfg, grid, 2000, 2.0, s).value for s in (0, 1, 2)]
        print(f"test equation dt=2^-{j}: sup_k E|Y|^2 = " + ", ".join(f"{v:.4f}" for v in vals))


if __name__ == "__main__":
    main()
