"""Problem definition, truncation policy and truncated coefficient evaluation.

Coefficients are callables ``c(t, x, y)`` that accept floats or numpy arrays
(broadcasting) and return values of the same shape.  ``x`` is the current
state, ``y`` the delayed state ``x(t - tau)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Mapping, Optional

import numpy as np

Coefficient = Callable[..., "np.ndarray | float"]


class ModelError(ValueError):
    pass


class PolicyError(ModelError):
    """Raised when a truncation policy cannot be evaluated."""


class CoefficientError(ArithmeticError):
    """A coefficient returned a non-finite value.

    ``where`` holds the (t, x, y) at which the first bad value appeared.
    """

    def __init__(self, name, t, x, y, index=None):
        self.name = name
        self.where = (t, x, y)
        # flat position of the bad value when the arguments were arrays
        self.index = index
        super().__init__(f"{name}(t={t!r}, x={x!r}, y={y!r}) is not finite")


class CapabilityError(ModelError):
    """A required partial derivative was not supplied."""

    def __init__(self, missing, context=""):
        self.missing = tuple(missing)
        msg = "missing partial derivatives: " + ", ".join(self.missing)
        if context:
            msg += f" (needed for {context})"
        super().__init__(msg)


def fd_partial(fn: Coefficient, wrt: str) -> Coefficient:
    """Central finite difference of ``fn`` in ``x`` or ``y``.

    Approximate; the step is ``h = max(1e-6, 1e-6 * |arg|)``.
    """
    if wrt not in ("x", "y"):
        raise ValueError(wrt)

    def d(t, x, y):
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        if wrt == "x":
            h = np.maximum(1e-6, 1e-6 * np.abs(x))
            return (fn(t, x + h, y) - fn(t, x - h, y)) / (2 * h)
        h = np.maximum(1e-6, 1e-6 * np.abs(y))
        return (fn(t, x, y + h) - fn(t, x, y - h)) / (2 * h)

    d.__name__ = f"d{getattr(fn, '__name__', 'fn')}_d{wrt}"
    return d


# keys accepted in ProblemSpec.partials; g1/g2 live in dedicated fields
PARTIAL_KEYS = ("f1", "f2", "f11", "f12", "f22", "g11", "g12", "g22")


@dataclass(frozen=True)
class ProblemSpec:
    """A scalar SDDE ``dx = f(t, x, x(t-tau)) dt + g(t, x, x(t-tau)) dB``."""

    drift: Coefficient
    diffusion: Coefficient
    diffusion_dx: Optional[Coefficient]
    diffusion_dy: Optional[Coefficient]
    delay: float
    horizon: float
    initial_segment: Callable[..., "np.ndarray | float"]
    growth_beta: float = 0.0
    # optional extra partials, keyed by PARTIAL_KEYS ("f1" = df/dx, "g12" = d2g/dxdy ...)
    partials: Mapping[str, Coefficient] = field(default_factory=dict)
    finite_difference: bool = False
    # x(t) as a function of (t, B(t)) when the exact solution is known
    exact_solution: Optional[Callable[..., np.ndarray]] = None
    name: str = "custom"

    def __post_init__(self):
        if not self.delay > 0:
            raise ModelError(f"delay must be > 0, got {self.delay}")
        if not self.horizon > self.delay:
            raise ModelError(f"horizon must exceed delay ({self.horizon} <= {self.delay})")
        if self.growth_beta < 0:
            raise ModelError("growth_beta must be >= 0")
        unknown = set(self.partials) - set(PARTIAL_KEYS)
        if unknown:
            raise ModelError(f"unknown partial keys: {sorted(unknown)}")
        missing = [n for n, v in (("g1", self.diffusion_dx), ("g2", self.diffusion_dy)) if v is None]
        if missing:
            if not self.finite_difference:
                raise CapabilityError(missing, "the Milstein correction; pass finite_difference=True to approximate")
            if self.diffusion_dx is None:
                object.__setattr__(self, "diffusion_dx", fd_partial(self.diffusion, "x"))
            if self.diffusion_dy is None:
                object.__setattr__(self, "diffusion_dy", fd_partial(self.diffusion, "y"))
        ts = np.linspace(-self.delay, 0.0, 65)
        xi = np.broadcast_to(np.asarray(self.initial_segment(ts), dtype=float), ts.shape)
        if not np.all(np.isfinite(xi)):
            raise ModelError("initial segment is not finite on [-delay, 0]")

    @property
    def drift_dx(self) -> Optional[Coefficient]:
        return self.partials.get("f1")

    def partial(self, key: str) -> Coefficient:
        """Return a named partial, finite-differencing it if allowed."""
        if key == "g1":
            return self.diffusion_dx
        if key == "g2":
            return self.diffusion_dy
        if key in self.partials:
            return self.partials[key]
        if not self.finite_difference:
            raise CapabilityError([key])
        base = {"f": self.drift, "g": self.diffusion}[key[0]]
        wrt = "x" if key[1] == "1" else "y"
        first = self.partial(key[0] + key[1]) if len(key) == 3 else base
        if len(key) == 3:
            wrt = "x" if key[2] == "1" else "y"
        return fd_partial(first, wrt)

    def xi(self, t):
        t = np.asarray(t, dtype=float)
        return np.broadcast_to(np.asarray(self.initial_segment(t), dtype=float), t.shape).copy()


@dataclass(frozen=True)
class TruncationPolicy:
    """Growth bound ``lam`` on coefficients, its inverse, and the radius schedule ``alpha``.

    ``unbounded=True`` disables truncation (infinite radius).
    """

    lam: Callable[[float], float]
    lam_inv: Callable[[float], float]
    alpha: Callable[[float], float]
    k0: float
    unbounded: bool = False

    def __post_init__(self):
        if self.unbounded:
            return
        lam1 = self.lam(1.0)
        if self.k0 < max(1.0, lam1):
            raise PolicyError(f"k0={self.k0} must be >= max(1, lam(1)={lam1})")

    @classmethod
    def power(cls, coef: float, exponent: float, alpha_exponent: float, k0: float | None = None):
        """``lam(w) = coef * w**exponent`` and ``alpha(dt) = dt**(-alpha_exponent)``."""
        if coef <= 0 or exponent <= 0 or alpha_exponent <= 0:
            raise PolicyError("power policy parameters must be positive")
        return cls(
            lam=lambda w: coef * w**exponent,
            lam_inv=lambda u: (u / coef) ** (1.0 / exponent),
            alpha=lambda dt: dt ** (-alpha_exponent),
            k0=max(1.0, coef) if k0 is None else k0,
        )

    @classmethod
    def none(cls):
        inf = math.inf
        return cls(lam=lambda w: inf, lam_inv=lambda u: inf, alpha=lambda dt: inf, k0=inf, unbounded=True)

    def check(self, dts) -> None:
        """Verify ``dt**(1/4) * alpha(dt) <= k0`` and that alpha decreases over ``dts``."""
        if self.unbounded:
            return
        dts = sorted(float(d) for d in dts)
        prev = None
        for dt in dts:
            a = self.alpha(dt)
            if dt ** 0.25 * a > self.k0 * (1 + 1e-12):
                raise PolicyError(f"dt^(1/4)*alpha(dt) = {dt ** 0.25 * a} exceeds k0={self.k0} at dt={dt}")
            if prev is not None and not a < prev:
                raise PolicyError(f"alpha is not strictly decreasing at dt={dt}")
            prev = a


def truncation_radius(policy: TruncationPolicy, dt: float) -> float:
    """``lam_inv(alpha(dt))``, clamped to 1 when alpha(dt) < lam(1)."""
    if not 0 < dt <= 1:
        raise PolicyError(f"dt must lie in (0, 1], got {dt}")
    if policy.unbounded:
        return math.inf
    a = policy.alpha(dt)
    if not math.isfinite(a):
        raise PolicyError(f"alpha({dt}) = {a} is not finite")
    if a < policy.lam(1.0):
        return 1.0
    return max(1.0, float(policy.lam_inv(a)))


def truncate(chi, radius):
    """Radial clamp ``(|chi| ^ radius) * sign(chi)``; 0 maps to 0."""
    if isinstance(chi, np.ndarray):
        return np.clip(chi, -radius, radius)
    return min(max(chi, -radius), radius)


def _first_failing(fn, t, x, y):
    """Index of the first element whose scalar evaluation fails or is non-finite."""
    shape = np.broadcast(t, x, y).shape
    ts, xs, ys = (np.broadcast_to(a, shape).ravel() for a in (t, x, y))
    for i in range(ts.size):
        try:
            if not np.isfinite(fn(ts[i], xs[i], ys[i])):
                return i
        except ArithmeticError:
            return i
    return None


def checked(name, fn, t, x, y):
    try:
        v = fn(t, x, y)
    except ArithmeticError as e:
        # coefficients built from expressions signal domain errors by raising
        i = _first_failing(fn, t, x, y) if np.ndim(x) or np.ndim(y) or np.ndim(t) else None
        if i is None:
            raise CoefficientError(name, t, x, y) from e
        shape = np.broadcast(t, x, y).shape
        pick = lambda a: np.broadcast_to(a, shape).flat[i]  # noqa: E731
        raise CoefficientError(name, pick(t), pick(x), pick(y), i) from e
    if np.all(np.isfinite(v)):
        return v
    v = np.asarray(v)
    if v.ndim == 0:
        raise CoefficientError(name, t, x, y)
    i = int(np.flatnonzero(~np.isfinite(v))[0])
    pick = lambda a: np.broadcast_to(a, v.shape).flat[i]  # noqa: E731
    raise CoefficientError(name, pick(t), pick(x), pick(y), i)


def truncated_coeffs(spec: ProblemSpec, radius: float, t, x, y):
    """(f, g, g1, g2) evaluated at the clamped arguments."""
    xt = truncate(x, radius)
    yt = truncate(y, radius)
    return (
        checked("f", spec.drift, t, xt, yt),
        checked("g", spec.diffusion, t, xt, yt),
        checked("g1", spec.diffusion_dx, t, xt, yt),
        checked("g2", spec.diffusion_dy, t, xt, yt),
    )


@dataclass(frozen=True)
class TimeGrid:
    """Uniform grid with ``dt = delay / m_delay = horizon / m_total``."""

    dt: Fraction
    m_delay: int
    m_total: int

    def __post_init__(self):
        if self.m_delay < 1 or self.m_total <= self.m_delay:
            raise ModelError(f"need 1 <= m_delay < m_total, got {self.m_delay}, {self.m_total}")

    @classmethod
    def build(cls, dt, delay, horizon) -> "TimeGrid":
        """Exact grid construction; ``dt`` must divide both delay and horizon."""
        d = Fraction(dt).limit_denominator(1 << 40) if isinstance(dt, float) else Fraction(dt)
        if isinstance(dt, float) and float(d) != dt:
            d = Fraction(dt)
        m = Fraction(delay) / d
        mt = Fraction(horizon) / d
        if m.denominator != 1 or mt.denominator != 1:
            raise ModelError(f"dt={dt} does not divide delay={delay} and horizon={horizon}")
        return cls(d, int(m), int(mt))

    @property
    def h(self) -> float:
        return float(self.dt)

    def time(self, k):
        """t_k = k * dt (exact for dyadic dt)."""
        return np.asarray(k) * float(self.dt)

    @property
    def times(self) -> np.ndarray:
        return self.time(np.arange(-self.m_delay, self.m_total + 1))

    def __len__(self):
        return self.m_total + self.m_delay + 1
