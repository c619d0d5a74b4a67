"""Builtin problems: the nonautonomous super-linear test equation, GBM and a linear delay equation."""

from __future__ import annotations

import numpy as np

from .model import ProblemSpec, TruncationPolicy


def zeta(t):
    """[t(1 - t)]^(3/4), the time-Holder factor of the test equation."""
    return np.power(np.clip(t * (1.0 - t), 0.0, None), 0.75)


def _sgn_pow(v, p):
    return np.sign(v) * np.power(np.abs(v), p)


def paper_example(delay=0.25, initial=None) -> ProblemSpec:
    """dx = (|y|^{5/4}/8 - 5x^3 + 2 zeta_t x) dt + (|x|^{3/2}/2 + zeta_t y) dB on [0, 1].

    The initial segment defaults to the Lipschitz ``0.5 + 0.1 t``.
    """
    if initial is None:
        def initial(t):
            return 0.5 + 0.1 * np.asarray(t)

    def f(t, x, y):
        return np.abs(y) ** 1.25 / 8 - 5 * x**3 + 2 * zeta(t) * x

    def g(t, x, y):
        return 0.5 * np.abs(x) ** 1.5 + zeta(t) * y

    def g1(t, x, y):
        return 0.75 * _sgn_pow(x, 0.5)

    def g2(t, x, y):
        return zeta(t) + 0 * x

    partials = {
        "f1": lambda t, x, y: -15 * x**2 + 2 * zeta(t),
        "f2": lambda t, x, y: 5 / 32 * _sgn_pow(y, 0.25),
        "f11": lambda t, x, y: -30 * x + 0 * y,
        "f12": lambda t, x, y: 0 * x * y,
        "f22": lambda t, x, y: 5 / 128 * np.power(np.abs(y), -0.75) + 0 * x,
        "g11": lambda t, x, y: 3 / 8 * np.power(np.abs(x), -0.5) + 0 * y,
        "g12": lambda t, x, y: 0 * x * y,
        "g22": lambda t, x, y: 0 * x * y,
    }
    return ProblemSpec(
        drift=f, diffusion=g, diffusion_dx=g1, diffusion_dy=g2,
        delay=delay, horizon=1.0, initial_segment=initial, growth_beta=2.0,
        partials=partials, name="paper_example",
    )


def example_policy() -> TruncationPolicy:
    """lam(w) = 5 w^3, alpha(dt) = dt^(-1/8)."""
    return TruncationPolicy.power(5.0, 3.0, 1.0 / 8.0)


# one-sided constant from the monotonicity derivation of the test equation
EXAMPLE_K1 = 8.0
EXAMPLE_THETA = 0.5


def gbm(mu=0.05, sigma=0.2, x0=1.0, delay=0.5, horizon=1.0) -> ProblemSpec:
    """Geometric Brownian motion embedded as an SDDE with no delayed dependence."""

    def exact(t, b):
        return x0 * np.exp((mu - sigma**2 / 2) * t + sigma * np.asarray(b))

    return ProblemSpec(
        drift=lambda t, x, y: mu * x + 0 * y,
        diffusion=lambda t, x, y: sigma * x + 0 * y,
        diffusion_dx=lambda t, x, y: sigma + 0 * x,
        diffusion_dy=lambda t, x, y: 0 * x,
        delay=delay, horizon=horizon,
        initial_segment=lambda t: x0 + 0 * np.asarray(t),
        partials={"f1": lambda t, x, y: mu + 0 * x, "f2": lambda t, x, y: 0 * x},
        exact_solution=exact, name="gbm",
    )


def linear_delay(a=-1.0, b=0.5, c=0.2, d=0.1, delay=0.25, horizon=1.0, initial=None) -> ProblemSpec:
    """f = a x + b y, g = c x + d y."""
    if initial is None:
        def initial(t):
            return 1.0 + 0 * np.asarray(t)
    return ProblemSpec(
        drift=lambda t, x, y: a * x + b * y,
        diffusion=lambda t, x, y: c * x + d * y,
        diffusion_dx=lambda t, x, y: c + 0 * x,
        diffusion_dy=lambda t, x, y: d + 0 * x,
        delay=delay, horizon=horizon, initial_segment=initial,
        partials={"f1": lambda t, x, y: a + 0 * x, "f2": lambda t, x, y: b + 0 * x},
        name="linear_delay",
    )
