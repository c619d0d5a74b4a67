"""Sample-based falsification of the structural assumptions on f, g and xi.

Each assumption is rearranged as ``LHS - RHS <= 0`` and evaluated on a
scrambled Sobol sample of a box plus deterministic corner and diagonal
points.  A report can only say that no violation was found among the
samples tested; it never certifies that an assumption holds.
"""

from __future__ import annotations

import itertools
import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.stats import qmc

from .model import CapabilityError, ProblemSpec, TruncationPolicy

TOL = 1e-9
NEAR_DIAGONAL = 1e-3

KINDS = {
    "A1-polyLipschitz": ("K", "beta"),
    "A2-monotoneU": ("K", "q"),
    "A3-khasminskii": ("K", "p"),
    "A4-timeHolder": ("K", "beta", "sigma"),
    "A5-initialHolder": ("K", "gamma"),
    "A6-derivGrowth": ("K", "beta"),
    "A39-monotone": ("K", "q"),
}
ALIASES = {k.split("-")[0]: k for k in KINDS}

# coordinate names per kind, in sampling order
_COORDS = {
    "A1-polyLipschitz": ("t", "x", "y", "xbar", "ybar"),
    "A2-monotoneU": ("t", "x", "y", "xbar", "ybar"),
    "A39-monotone": ("t", "x", "y", "xbar", "ybar"),
    "A3-khasminskii": ("t", "x", "y"),
    "A6-derivGrowth": ("t", "x", "y"),
    # the second time point is reported as xbar
    "A4-timeHolder": ("t", "xbar", "x", "y"),
    "A5-initialHolder": ("t", "xbar"),
}

A6_PARTIALS = ("f1", "f2", "g1", "g2", "f11", "f12", "f22", "g11", "g12", "g22")


class ProbeConfigError(ValueError):
    pass


@dataclass(frozen=True)
class AssumptionCase:
    kind: str
    constants: dict
    u_functional: Optional[Callable] = None  # U(m, n)
    t_range: tuple = (0.0, 1.0)
    x_range: tuple = (-5.0, 5.0)
    samples: int = 100_000
    seed: int = 0
    label: str = ""

    def __post_init__(self):
        kind = ALIASES.get(self.kind, self.kind)
        if kind not in KINDS:
            raise ProbeConfigError(f"unknown assumption kind {self.kind!r}")
        object.__setattr__(self, "kind", kind)
        if not self.label:
            object.__setattr__(self, "label", kind.split("-")[0])
        missing = [c for c in KINDS[kind] if c not in self.constants]
        if missing:
            raise ProbeConfigError(f"{kind} needs constants {missing}")
        c = self.constants
        if not c["K"] > 0:
            raise ProbeConfigError("K must be > 0")
        if "beta" in c and c["beta"] < 0:
            raise ProbeConfigError("beta must be >= 0")
        if "q" in c and c["q"] < 2:
            raise ProbeConfigError("q must be >= 2")
        if "p" in c and c["p"] <= 2:
            raise ProbeConfigError("p must be > 2")
        for name in ("sigma", "gamma"):
            if name in c and not 0 < c[name] <= 1:
                raise ProbeConfigError(f"{name} must lie in (0, 1]")
        if self.samples < 1:
            raise ProbeConfigError("samples must be >= 1")
        if self.t_range[0] > self.t_range[1] or self.x_range[0] > self.x_range[1]:
            raise ProbeConfigError("empty sampling box")


@dataclass
class ProbeReport:
    label: str
    max_violation: float
    point: dict
    samples: int
    nonfinite: int = 0
    extra: dict = field(default_factory=dict)

    @property
    def violated(self) -> bool:
        return self.max_violation > TOL

    def summary(self) -> str:
        where = ", ".join(f"{k}={v:.6g}" for k, v in self.point.items())
        if self.violated:
            return f"{self.label}: violation {self.max_violation:.6g} at ({where}) among {self.samples} samples"
        return f"{self.label}: no violation found among {self.samples} samples (max {self.max_violation:.3g})"


def _sample(lows, highs, n, seed, diag_axes=None):
    """Sobol points scaled to the box, then corners and diagonal points."""
    lows = np.asarray(lows, float)
    highs = np.asarray(highs, float)
    d = lows.size
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", UserWarning)
        u = qmc.Sobol(d, scramble=True, seed=seed).random(n)
    pts = [lows + u * (highs - lows)]
    if d == 5:
        # near-diagonal copies: the two-point conditions are often tightest
        # as (xbar, ybar) -> (x, y)
        near = pts[0].copy()
        near[:, 3:] = near[:, 1:3] + NEAR_DIAGONAL * (near[:, 3:] - near[:, 1:3])
        pts.append(near)
    corners = np.array(list(itertools.product(*zip(lows, highs))))
    pts.append(corners)
    if diag_axes is not None:
        # pairs (i, j) of coordinates forced equal: x = xbar and y = ybar
        t_vals = np.unique([lows[0], (lows[0] + highs[0]) / 2, highs[0]])
        grid = np.linspace(lows[1], highs[1], 9)
        extra = []
        for t, v, w in itertools.product(t_vals, grid, grid):
            p = np.empty(d)
            p[0] = t
            p[1], p[2] = v, w
            for i, j in diag_axes:
                p[j] = p[i]
            extra.append(p)
            if d == 5:
                q = p.copy()
                q[4] = -w
                extra.append(q)
        pts.append(np.array(extra))
    return np.vstack(pts)


def _pow(a, e):
    return np.power(np.abs(a), e)


def _lhs_minus_rhs(spec: ProblemSpec, case: AssumptionCase, P):
    c = case.constants
    K = c["K"]
    kind = case.kind
    f, g = spec.drift, spec.diffusion
    if kind in ("A1-polyLipschitz", "A2-monotoneU", "A39-monotone"):
        t, a, b, ab, bb = P.T
        df = f(t, a, b) - f(t, ab, bb)
        dg = g(t, a, b) - g(t, ab, bb)
        da2 = (a - ab) ** 2 + (b - bb) ** 2
        if kind == "A1-polyLipschitz":
            beta = c["beta"]
            lhs = np.maximum(np.abs(df), np.abs(dg))
            rhs = K * (1 + _pow(a, beta) + _pow(b, beta) + _pow(ab, beta) + _pow(bb, beta)) * (
                np.abs(a - ab) + np.abs(b - bb))
            return lhs - rhs
        lhs = (a - ab) * df + (c["q"] - 1) * dg**2
        rhs = K * da2
        if kind == "A2-monotoneU":
            u = case.u_functional
            if u is None:
                raise ProbeConfigError("A2 needs a U functional (use A39 for the plain condition)")
            rhs = rhs - u(a, ab) + u(b, bb)
        return lhs - rhs
    if kind == "A3-khasminskii":
        t, a, b = P.T
        return a * f(t, a, b) + (c["p"] - 1) * g(t, a, b) ** 2 - K * (1 + a**2 + b**2)
    if kind == "A4-timeHolder":
        t1, t2, a, b = P.T
        lhs = np.maximum(np.abs(f(t1, a, b) - f(t2, a, b)), np.abs(g(t1, a, b) - g(t2, a, b)))
        beta = c["beta"]
        return lhs - K * (1 + _pow(a, beta + 1) + _pow(b, beta + 1)) * _pow(t1 - t2, c["sigma"])
    if kind == "A5-initialHolder":
        t, s = P.T
        return np.abs(spec.xi(t) - spec.xi(s)) - K * _pow(t - s, c["gamma"])
    if kind == "A6-derivGrowth":
        t, a, b = P.T
        missing = []
        funcs = []
        for key in A6_PARTIALS:
            try:
                funcs.append(spec.partial(key))
            except CapabilityError:
                missing.append(key)
        if missing:
            raise CapabilityError(missing, "A6-derivGrowth")
        if spec.finite_difference and any(k not in spec.partials for k in A6_PARTIALS[4:]):
            warnings.warn("A6 probe uses finite-difference second derivatives", stacklevel=3)
        lhs = np.max([np.abs(np.broadcast_to(fn(t, a, b), t.shape)) for fn in funcs], axis=0)
        beta = c["beta"]
        return lhs - K * (1 + _pow(a, beta + 1) + _pow(b, beta + 1))
    raise AssertionError(kind)


def _box(spec: ProblemSpec, case: AssumptionCase):
    t0, t1 = case.t_range
    x0, x1 = case.x_range
    kind = case.kind
    if kind in ("A1-polyLipschitz", "A2-monotoneU", "A39-monotone"):
        return [t0] + [x0] * 4, [t1] + [x1] * 4, [(1, 3), (2, 4)]
    if kind in ("A3-khasminskii", "A6-derivGrowth"):
        return [t0, x0, x0], [t1, x1, x1], []
    if kind == "A4-timeHolder":
        return [t0, t0, x0, x0], [t1, t1, x1, x1], None
    return [-spec.delay, -spec.delay], [0.0, 0.0], None


def probe_assumption(spec: ProblemSpec, case: AssumptionCase) -> ProbeReport:
    """Max of LHS - RHS over the sample set; positive means a violating sample was found."""
    lows, highs, diag = _box(spec, case)
    P = _sample(lows, highs, case.samples, case.seed, diag)
    with np.errstate(all="ignore"):
        v = np.asarray(_lhs_minus_rhs(spec, case, P), dtype=float)
    v = np.broadcast_to(v, (P.shape[0],))
    finite = np.isfinite(v)
    if not finite.any():
        raise ArithmeticError(f"{case.label}: no sample evaluated to a finite value")
    i = int(np.argmax(np.where(finite, v, -np.inf)))
    point = dict(zip(_COORDS[case.kind], (float(z) for z in P[i])))
    return ProbeReport(case.label, float(v[i]), point, int(P.shape[0]), int((~finite).sum()))


def probe_lambda_bound(spec: ProblemSpec, policy: TruncationPolicy, w_samples, samples=10_000,
                       seed=0) -> ProbeReport:
    """Check ``sup |f| v |g| v |g1| v |g2| <= lam(w)`` over |x| v |y| <= w, t in [0, T]."""
    best = (-math.inf, None, 0)
    total = 0
    coeffs = (spec.drift, spec.diffusion, spec.diffusion_dx, spec.diffusion_dy)
    for w in w_samples:
        if w < 1:
            raise ValueError("w_samples must be >= 1")
        P = _sample([0.0, -w, -w], [spec.horizon, w, w], samples, seed, [])
        # corners at mid-time and on the axes
        axis = np.array([(t, x, y) for t in (0.0, spec.horizon / 2, spec.horizon)
                         for x in (-w, 0.0, w) for y in (-w, 0.0, w)])
        P = np.vstack([P, axis])
        t, x, y = P.T
        with np.errstate(all="ignore"):
            sup = np.max([np.abs(np.broadcast_to(c(t, x, y), t.shape)) for c in coeffs], axis=0)
        v = sup - policy.lam(w)
        v = np.where(np.isfinite(v), v, -np.inf)
        i = int(np.argmax(v))
        total += P.shape[0]
        if v[i] > best[0]:
            best = (float(v[i]), {"t": float(t[i]), "x": float(x[i]), "y": float(y[i]), "w": float(w)}, i)
    return ProbeReport("lambda-bound", best[0], best[1], total)


def u_ratio(u: Callable, radius: float, samples=10_000, seed=0) -> float:
    """Estimate of sup U(m, n) / |m - n|^2 on |m| v |n| <= radius (a diagnostic, not a bound)."""
    P = _sample([-radius, -radius], [radius, radius], samples, seed, None)
    m, n = P.T
    keep = m != n
    return float(np.max(u(m[keep], n[keep]) / (m[keep] - n[keep]) ** 2))
