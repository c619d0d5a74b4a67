import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, strategies as st

from sdde import problems
from sdde.model import (
    CapabilityError, CoefficientError, ModelError, PolicyError, ProblemSpec, TimeGrid,
    TruncationPolicy, truncate, truncated_coeffs, truncation_radius,
)

from conftest import zero_spec

finite = st.floats(-1e6, 1e6, allow_nan=False)
radii = st.floats(1.0, 1e4, allow_nan=False)


@pytest.mark.parametrize("dt,expected", [
    (5.0**-8, 1.0),
    (2.0**-8, 1.0),
    (10.0**-8, 2.0 ** (1.0 / 3.0)),
])
def test_radius_examples(example_policy, dt, expected):
    assert truncation_radius(example_policy, dt) == pytest.approx(expected, abs=1e-9)


def test_radius_clamps_at_all_study_steps(example_policy):
    for j in range(6, 12):
        assert truncation_radius(example_policy, 2.0**-j) == 1.0


def test_radius_rejects_bad_dt(example_policy):
    for dt in (0.0, -1.0, 1.5):
        with pytest.raises(PolicyError):
            truncation_radius(example_policy, dt)


def test_radius_nonfinite_alpha():
    pol = TruncationPolicy(lam=lambda w: w, lam_inv=lambda u: u, alpha=lambda dt: math.nan, k0=1.0)
    with pytest.raises(PolicyError):
        truncation_radius(pol, 0.5)


def test_no_truncation_policy_has_infinite_radius():
    assert truncation_radius(TruncationPolicy.none(), 0.5) == math.inf


def test_policy_rejects_small_k0():
    with pytest.raises(PolicyError):
        TruncationPolicy.power(5.0, 3.0, 0.125, k0=2.0)


def test_policy_check_flags_k0_breach():
    pol = TruncationPolicy.power(1.0, 1.0, 0.5, k0=1.0)
    # dt^(1/4) * dt^(-1/2) = dt^(-1/4) > 1 for dt < 1
    with pytest.raises(PolicyError):
        pol.check([0.25])


@given(st.floats(1e-12, 1.0, exclude_min=True))
def test_valid_lambda_bounds_radius(dt):
    # lam(w) = 6 w^3 bounds |f|, |g|, |g1|, |g2| of the test equation on [-w, w]^2
    pol = TruncationPolicy.power(6.0, 3.0, 0.125)
    r = truncation_radius(pol, dt)
    assert r >= 1.0
    if pol.alpha(dt) >= pol.lam(1.0):
        assert pol.lam(r) <= pol.alpha(dt) * (1 + 1e-12)


@pytest.mark.parametrize("chi,radius,expected", [
    (0.5, 1.2, 0.5),
    (0.0, 1.2, 0.0),
    (-3.0, 2.0 ** (1.0 / 3.0), -(2.0 ** (1.0 / 3.0))),
])
def test_truncate_examples(chi, radius, expected):
    assert truncate(chi, radius) == expected


@given(finite, radii)
def test_truncate_idempotent(chi, r):
    once = truncate(chi, r)
    assert truncate(once, r) == once
    assert abs(once) <= r


@given(finite, finite, radii)
def test_truncate_contraction(a, b, r):
    assert abs(truncate(a, r) - truncate(b, r)) <= abs(a - b)


@given(st.lists(finite, min_size=1, max_size=20), radii)
def test_truncate_array_matches_scalar(xs, r):
    arr = truncate(np.array(xs), r)
    assert list(arr) == [truncate(x, r) for x in xs]


def test_example_drift_oracle(example):
    # 1/8 - 5 + 2 * 0.25^(3/4), with 0.25^(3/4) = 2^(-3/2)
    expected = 0.125 - 5.0 + 2.0 * 2.0**-1.5
    assert example.drift(0.5, 1.0, 1.0) == pytest.approx(expected, abs=1e-12)
    assert expected == pytest.approx(-4.167893, abs=1e-6)


@given(st.floats(0, 1), st.floats(-0.99, 0.99), st.floats(-0.99, 0.99))
def test_truncated_coeffs_identity_inside(t, x, y):
    example = problems.paper_example()
    got = truncated_coeffs(example, 1.0, t, x, y)
    raw = (example.drift(t, x, y), example.diffusion(t, x, y), example.diffusion_dx(t, x, y), example.diffusion_dy(t, x, y))
    assert got == raw


@given(st.floats(-1e3, 1e3), st.floats(-1e3, 1e3))
def test_truncated_coeffs_bounded_by_valid_lambda(x, y):
    example = problems.paper_example()
    pol = TruncationPolicy.power(6.0, 3.0, 0.125)
    r = 2.0
    vals = truncated_coeffs(example, r, 0.5, x, y)
    assert max(abs(float(v)) for v in vals) <= pol.lam(r)


def test_nonfinite_coefficient_reports_location():
    spec = zero_spec()
    bad = ProblemSpec(
        drift=lambda t, x, y: np.log(x - 1.0), diffusion=spec.diffusion,
        diffusion_dx=spec.diffusion_dx, diffusion_dy=spec.diffusion_dy,
        delay=0.25, horizon=1.0, initial_segment=spec.initial_segment,
    )
    with pytest.raises(CoefficientError) as e, np.errstate(all="ignore"):
        truncated_coeffs(bad, 10.0, 0.0, np.array([2.0, 0.5]), np.array([0.0, 0.0]))
    assert e.value.where[1] == 0.5


def test_missing_partials_capability_error():
    s = zero_spec()
    with pytest.raises(CapabilityError) as e:
        ProblemSpec(drift=s.drift, diffusion=s.diffusion, diffusion_dx=None, diffusion_dy=None,
                    delay=0.25, horizon=1.0, initial_segment=s.initial_segment)
    assert set(e.value.missing) >= {"g1", "g2"}


def test_finite_difference_fills_partials():
    s = ProblemSpec(drift=lambda t, x, y: -x, diffusion=lambda t, x, y: x * x + 3 * y,
                    diffusion_dx=None, diffusion_dy=None, delay=0.25, horizon=1.0, initial_segment=lambda t: 1 + 0 * t,
                    finite_difference=True)
    assert s.diffusion_dx(0.0, 1.5, 0.0) == pytest.approx(3.0, abs=1e-6)
    assert s.diffusion_dy(0.0, 1.5, 0.0) == pytest.approx(3.0, abs=1e-6)


@pytest.mark.parametrize("delay,horizon", [(0.0, 1.0), (-1.0, 1.0), (1.0, 1.0), (2.0, 1.0)])
def test_spec_validation(delay, horizon):
    s = zero_spec()
    with pytest.raises(ModelError):
        ProblemSpec(drift=s.drift, diffusion=s.diffusion, diffusion_dx=s.diffusion_dx,
                    diffusion_dy=s.diffusion_dy, delay=delay, horizon=horizon,
                    initial_segment=s.initial_segment)


def test_grid_exact():
    g = TimeGrid.build(Fraction(1, 64), 0.25, 1.0)
    assert (g.m_delay, g.m_total, len(g)) == (16, 64, 81)
    assert g.times[0] == -0.25 and g.times[-1] == 1.0
    assert g.time(16) == 0.25


def test_grid_misaligned():
    with pytest.raises(ModelError):
        TimeGrid.build(Fraction(1, 3), 0.25, 1.0)


def test_raising_coefficient_becomes_coefficient_error():
    from sdde.expr import parse
    e = parse("ln(x)")
    s = zero_spec()
    spec = ProblemSpec(drift=lambda t, x, y: e(t, x, y), diffusion=s.diffusion,
                       diffusion_dx=s.diffusion_dx, diffusion_dy=s.diffusion_dy,
                       delay=0.25, horizon=1.0, initial_segment=s.initial_segment)
    with pytest.raises(CoefficientError) as err:
        truncated_coeffs(spec, 10.0, 0.0, np.array([2.0, 1.0, -1.0]), np.zeros(3))
    assert err.value.index == 2 and err.value.where[1] == -1.0
