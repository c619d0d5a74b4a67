import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import settings

from sdde import problems
from sdde.model import ProblemSpec

settings.register_profile("default", deadline=None, max_examples=100)
settings.load_profile("default")

# filled by test_acceptance, printed once at the end of the run
ACCEPTANCE = []


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for line in sorted(ACCEPTANCE):
        terminalreporter.write_line(line)


def zero_spec(x0=0.5, delay=0.25, horizon=1.0):
    return ProblemSpec(
        drift=lambda t, x, y: 0 * x,
        diffusion=lambda t, x, y: 0 * x,
        diffusion_dx=lambda t, x, y: 0 * x,
        diffusion_dy=lambda t, x, y: 0 * x,
        delay=delay, horizon=horizon,
        initial_segment=lambda t: x0 + 0 * np.asarray(t),
        partials={k: (lambda t, x, y: 0 * x) for k in ("f1", "f2", "f11", "f12", "f22", "g11", "g12", "g22")},
        name="zero",
    )


@pytest.fixture
def example():
    return problems.paper_example()


@pytest.fixture
def example_policy():
    return problems.example_policy()


@pytest.fixture
def zero():
    return zero_spec()


def frac(v):
    return Fraction(v)


def cube_root_two():
    return math.pow(2.0, 1.0 / 3.0)


def q_samples(n, dt, substeps, seed=0, per_path=1000):
    """``n`` samples each of Q1 and Q2 at step ``dt`` with ``substeps`` fine steps per step.

    Each path covers ``per_path`` steps with delay = dt, so consecutive Q2
    values share no increments in the same role and are uncorrelated.
    """
    from sdde.noise import BrownianStore, q1

    dt = Fraction(dt)
    paths = -(-n // per_path)
    q1s, q2s = [], []
    for start in range(0, paths, 100):
        rows = range(start, min(start + 100, paths))
        store = BrownianStore.ensemble(seed, rows, dt / substeps, dt, dt * per_path)
        q1s.append(q1(store.level_increments(dt), float(dt)).ravel())
        q2s.append(store.level_q2(dt).ravel())
    return np.concatenate(q1s)[:n], np.concatenate(q2s)[:n]


def spec_from(f, g, g1, g2, x0=1.0, delay=0.25, horizon=1.0, f1=None):
    partials = {} if f1 is None else {"f1": f1}
    return ProblemSpec(
        drift=f, diffusion=g, diffusion_dx=g1, diffusion_dy=g2,
        delay=delay, horizon=horizon,
        initial_segment=lambda t: x0 + 0 * np.asarray(t), partials=partials,
    )


def bisect_oracle(fn, c, coef, tol=1e-15):
    """Root of y - coef * fn(y) - c by scalar bisection on an expanding bracket around c."""
    res = lambda v: v - coef * fn(v) - c  # noqa: E731
    w = 1.0
    lo, hi = c - w, c + w
    while res(lo) > 0 or res(hi) < 0:
        w *= 2
        lo, hi = c - w, c + w
    for _ in range(2000):
        mid = 0.5 * (lo + hi)
        if mid in (lo, hi) or abs(res(mid)) <= tol:
            return mid
        if res(mid) < 0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)
