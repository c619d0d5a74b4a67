"""Truncated theta-Milstein stepper and the truncated Euler-Maruyama baseline.

All routines work on a single path (1-d state) or on a stack of paths (2-d,
paths along axis 0).  Per-path arithmetic never depends on which other paths
share the stack, so results are bitwise identical however paths are batched.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .model import (
    CoefficientError,
    ProblemSpec,
    TimeGrid,
    TruncationPolicy,
    checked,
    truncate,
    truncated_coeffs,
    truncation_radius,
)
from .noise import BrownianStore, coarse_increment, q1, q2

_BISECT_MAX = 400


class SchemeConfigError(ValueError):
    pass


class SimulationError(RuntimeError):
    """A step failed.  ``step`` is the grid index k, ``rows`` the offending path rows."""

    def __init__(self, message, step=None, rows=()):
        self.step = step
        self.rows = tuple(int(r) for r in rows)
        super().__init__(message)


class SolverError(SimulationError):
    def __init__(self, message, step=None, rows=(), residual=math.nan):
        self.residual = residual
        super().__init__(message, step, rows)


class BlowUpError(SimulationError):
    """A state or coefficient became non-finite."""


@dataclass(frozen=True)
class SchemeConfig:
    theta: float = 0.5
    k1_bound: float = 1.0
    newton_tol: float = 1e-12
    newton_rtol: float = 1e-12
    newton_max_iter: int = 50

    def __post_init__(self):
        if not 0.0 <= self.theta <= 1.0:
            raise SchemeConfigError(f"theta must lie in [0, 1], got {self.theta}")
        if self.k1_bound <= 0:
            raise SchemeConfigError("k1_bound must be positive")
        if self.newton_max_iter < 1:
            raise SchemeConfigError("newton_max_iter must be >= 1")

    @property
    def max_dt(self) -> float:
        """1 ^ 1/(K1 theta); steps must be strictly below it when theta > 0."""
        if self.theta == 0:
            return 1.0
        return min(1.0, 1.0 / (self.k1_bound * self.theta))

    def check(self, dt: float) -> None:
        if not 0 < dt <= 1:
            raise SchemeConfigError(f"dt must lie in (0, 1], got {dt}")
        if self.theta > 0 and self.k1_bound * self.theta * dt >= 1:
            raise SchemeConfigError(
                f"K1*theta*dt = {self.k1_bound * self.theta * dt} >= 1; the implicit step may not be unique"
            )


@dataclass
class Trajectory:
    """Grid values Y(t_k), k = -M .. M', plus per-step diagnostics.

    ``values`` has shape (M + M' + 1,) or (paths, M + M' + 1); column M is t = 0.
    ``newton_iters`` and ``truncated`` have one column per step k = 0 .. M'-1.
    """

    values: np.ndarray
    grid: TimeGrid
    newton_iters: np.ndarray
    truncated: np.ndarray
    radius: float = math.inf

    def at(self, k):
        return self.values[..., k + self.grid.m_delay]

    @property
    def terminal(self):
        return self.values[..., -1]

    @property
    def times(self):
        return self.grid.times


def _tol(cfg, y):
    return cfg.newton_tol + cfg.newton_rtol * np.abs(y)


def _residual(spec, radius, coef, t, y, yd, c):
    f = checked("f", spec.drift, t, truncate(y, radius), truncate(yd, radius))
    return y - coef * f - c


def _slope(spec, radius, coef, t, y, yd):
    """dG/dy; zero drift slope where the clamp is active."""
    ytr = truncate(y, radius)
    ydt = truncate(yd, radius)
    f1 = spec.drift_dx
    if f1 is not None:
        d = f1(t, ytr, ydt)
    else:
        h = np.maximum(1e-6, 1e-6 * np.abs(ytr))
        d = (spec.drift(t, ytr + h, ydt) - spec.drift(t, ytr - h, ydt)) / (2 * h)
    d = np.where(np.abs(y) < radius, d, 0.0)
    return 1.0 - coef * d


def _solve(spec, radius, t_next, yd, c, coef, cfg, step=None):
    """Solve ``y - coef * f_trunc(t_next, y, yd) = c`` elementwise on 1-d arrays.

    Damped Newton first; anything unconverged after ``newton_max_iter`` goes
    to bisection on an expanding bracket around ``c``.
    """
    y = c.copy()
    iters = np.zeros(c.shape, dtype=np.int64)
    if coef == 0:
        return y, iters
    g = _residual(spec, radius, coef, t_next, y, yd, c)
    active = np.abs(g) > _tol(cfg, y)
    for _ in range(cfg.newton_max_iter):
        idx = np.flatnonzero(active)
        if idx.size == 0:
            break
        ya, ga, yda, ca = y[idx], g[idx], yd[idx], c[idx]
        dg = _slope(spec, radius, coef, t_next, ya, yda)
        step_len = np.where(dg > 0, ga / np.where(dg > 0, dg, 1.0), 0.0)
        yn = ya - step_len
        gn = _residual(spec, radius, coef, t_next, yn, yda, ca)
        # halve until the residual does not grow
        for _ in range(30):
            worse = np.abs(gn) > np.abs(ga)
            if not worse.any():
                break
            step_len = np.where(worse, step_len / 2, step_len)
            w = np.flatnonzero(worse)
            yn[w] = ya[w] - step_len[w]
            gn[w] = _residual(spec, radius, coef, t_next, yn[w], yda[w], ca[w])
        y[idx] = yn
        g[idx] = gn
        iters[idx] += 1
        done = np.abs(gn) <= _tol(cfg, yn)
        # zero-length steps cannot make progress; bisection picks them up
        active[idx[done | (step_len == 0)]] = False
    # one more Newton step on converged rows: quadratic convergence takes the
    # residual to roundoff, well inside the stopping tolerance
    ok = np.flatnonzero((np.abs(g) <= _tol(cfg, y)) & (g != 0))
    if ok.size:
        dg = _slope(spec, radius, coef, t_next, y[ok], yd[ok])
        yp = y[ok] - np.where(dg > 0, g[ok] / np.where(dg > 0, dg, 1.0), 0.0)
        gp = _residual(spec, radius, coef, t_next, yp, yd[ok], c[ok])
        better = np.abs(gp) < np.abs(g[ok])
        y[ok[better]] = yp[better]
        g[ok[better]] = gp[better]
    left = np.flatnonzero(np.abs(g) > _tol(cfg, y))
    if left.size:
        try:
            yb, gb, nb = _bisect(spec, radius, coef, t_next, yd[left], c[left], cfg, step)
        except SolverError as e:
            e.rows = tuple(int(left[r]) for r in e.rows)
            raise
        y[left] = yb
        g[left] = gb
        iters[left] += nb
    return y, iters


def _bisect(spec, radius, coef, t, yd, c, cfg, step):
    res = lambda v: _residual(spec, radius, coef, t, v, yd, c)  # noqa: E731
    width = 1.0 + np.abs(c)
    lo, hi = c - width, c + width
    glo, ghi = res(lo), res(hi)
    n = np.zeros(c.shape, dtype=np.int64)
    for _ in range(200):
        bad = (glo > 0) | (ghi < 0)
        if not bad.any():
            break
        width = np.where(bad, width * 2, width)
        lo = np.where(glo > 0, c - width, lo)
        hi = np.where(ghi < 0, c + width, hi)
        glo, ghi = res(lo), res(hi)
    else:
        raise SolverError("could not bracket the implicit step", step, np.flatnonzero(bad))
    mid = (lo + hi) / 2
    gm = res(mid)
    for _ in range(_BISECT_MAX):
        open_ = np.abs(gm) > _tol(cfg, mid)
        if not open_.any():
            break
        neg = gm < 0
        lo = np.where(open_ & neg, mid, lo)
        hi = np.where(open_ & ~neg, mid, hi)
        new = (lo + hi) / 2
        stuck = open_ & ((new == lo) | (new == hi))
        if stuck.any():
            r = np.abs(gm[stuck]).max()
            raise SolverError(
                f"implicit step did not converge (residual {r:.3e}); check K1 and dt",
                step, np.flatnonzero(stuck), r,
            )
        mid = np.where(open_, new, mid)
        n += open_
        gm = res(mid)
    else:
        raise SolverError("bisection did not converge", step, np.flatnonzero(open_), float(np.abs(gm).max()))
    return mid, gm, n


def implicit_solve(spec: ProblemSpec, radius, t_next, y_delay_next, c, cfg: SchemeConfig, dt):
    """y with ``y - theta*dt*f_trunc(t_next, y, y_delay_next) = c``; theta = 0 returns c."""
    scalar = np.ndim(c) == 0
    c_arr = np.atleast_1d(np.asarray(c, dtype=float))
    yd = np.broadcast_to(np.asarray(y_delay_next, dtype=float), c_arr.shape).copy()
    y, _ = _solve(spec, radius, t_next, yd, c_arr, cfg.theta * dt, cfg)
    return float(y[0]) if scalar else y


@dataclass
class _Level:
    """Per-level noise: dB_k, Q1_k, Q2_k for k = 0 .. M'-1 (paths on axis 0)."""

    db: np.ndarray
    q1: np.ndarray
    q2: np.ndarray


def _level_noise(store: BrownianStore, grid: TimeGrid, milstein: bool) -> _Level:
    db = store.level_increments(grid.dt)
    if db.shape[-1] != grid.m_total:
        raise ValueError("store horizon does not match the grid")
    if milstein:
        return _Level(db, q1(db, grid.h), store.level_q2(grid.dt))
    zero = np.zeros_like(db)
    return _Level(db, zero, zero)


def _advance(spec, radius, grid, cfg, values, gcache, k, db, qq1, qq2, milstein):
    """Compute Y_{k+1} for all rows; fills ``gcache[:, k]`` with g(t_k, Y_k, Y_{k-M})."""
    m = grid.m_delay
    dt = grid.h
    tk = grid.time(k)
    yk = values[:, k + m]
    ykd = values[:, k]
    f, g, g1, g2 = truncated_coeffs(spec, radius, tk, yk, ykd)
    gcache[:, k] = g
    c = yk + (1.0 - cfg.theta) * f * dt + g * db
    if milstein:
        c = c + g1 * g * qq1
        if k >= m:
            c = c + g2 * gcache[:, k - m] * qq2
    if not np.all(np.isfinite(c)):
        rows = np.flatnonzero(~np.isfinite(c))
        raise BlowUpError(f"non-finite state at step {k}", k, rows)
    y_delay_next = values[:, k + 1]
    y, iters = _solve(spec, radius, grid.time(k + 1), y_delay_next, c, cfg.theta * dt, cfg, k)
    hit = (np.abs(yk) > radius) | (np.abs(ykd) > radius) | (np.abs(y_delay_next) > radius)
    if cfg.theta > 0:
        hit |= np.abs(y) > radius
    if milstein and k >= m:
        hit |= np.abs(values[:, k - m]) > radius
    return y, iters, hit


def _run(spec, policy, grid, cfg, store, milstein, radius=None) -> Trajectory:
    cfg.check(grid.h)
    if radius is None:
        policy.check([grid.h])
        radius = truncation_radius(policy, grid.h)
    single = store.increments.ndim == 1
    level = _level_noise(store, grid, milstein)
    db, qq1, qq2 = (np.atleast_2d(a) for a in (level.db, level.q1, level.q2))
    n_paths = db.shape[0]
    m, mt = grid.m_delay, grid.m_total
    values = np.empty((n_paths, m + mt + 1))
    values[:, : m + 1] = spec.xi(grid.time(np.arange(-m, 1)))
    gcache = np.empty((n_paths, mt))
    iters = np.zeros((n_paths, mt), dtype=np.int64)
    hits = np.zeros((n_paths, mt), dtype=bool)
    for k in range(mt):
        try:
            y, it, hit = _advance(spec, radius, grid, cfg, values, gcache, k,
                                  db[:, k], qq1[:, k], qq2[:, k], milstein)
        except CoefficientError as e:
            rows = () if e.index is None else (e.index,)
            raise BlowUpError(f"step {k}: {e}", k, rows) from e
        except SimulationError as e:
            if e.step is None:
                e.step = k
            raise
        if not np.all(np.isfinite(y)):
            raise BlowUpError(f"non-finite state at step {k + 1}", k, np.flatnonzero(~np.isfinite(y)))
        values[:, k + m + 1] = y
        iters[:, k] = it
        hits[:, k] = hit
    if single:
        return Trajectory(values[0], grid, iters[0], hits[0], radius)
    return Trajectory(values, grid, iters, hits, radius)


def simulate(spec: ProblemSpec, policy: TruncationPolicy, grid: TimeGrid, cfg: SchemeConfig,
             store: BrownianStore, radius=None) -> Trajectory:
    """Truncated theta-Milstein trajectory driven by ``store``.

    ``radius`` overrides the policy's truncation radius (``math.inf`` turns
    truncation off).
    """
    return _run(spec, policy, grid, cfg, store, True, radius)


def simulate_em(spec: ProblemSpec, policy: TruncationPolicy, grid: TimeGrid, cfg: SchemeConfig,
                store: BrownianStore, radius=None) -> Trajectory:
    """Truncated theta-Euler-Maruyama: the same recursion without Q1/Q2 terms."""
    return _run(spec, policy, grid, cfg, store, False, radius)


def step(spec: ProblemSpec, radius, grid: TimeGrid, cfg: SchemeConfig, store: BrownianStore,
         k: int, history, milstein=True):
    """Y_{k+1} from the values Y_j, j <= k, held in ``history``.

    ``history`` is a :class:`Trajectory` or an array laid out like
    ``Trajectory.values`` (column M is t = 0); entries beyond k are ignored.
    """
    m, mt = grid.m_delay, grid.m_total
    if not 0 <= k < mt:
        raise IndexError(f"step index {k} outside [0, {mt})")
    cfg.check(grid.h)
    vals = history.values if isinstance(history, Trajectory) else np.asarray(history, dtype=float)
    single = vals.ndim == 1
    vals = np.atleast_2d(vals).copy()
    # the delayed argument of the implicit drift is Y_{k+1-M}, already known
    dbk = np.atleast_1d(coarse_increment(store, grid.dt, k))
    if milstein:
        q1k = q1(dbk, grid.h)
        if k >= m:
            q2k = np.atleast_1d(q2(store, grid.dt, k, m))
        else:
            q2k = np.zeros_like(dbk)
    else:
        q1k = q2k = np.zeros_like(dbk)
    gcache = np.zeros((vals.shape[0], mt))
    if milstein and k >= m:
        _, gd, _, _ = truncated_coeffs(spec, radius, grid.time(k - m), vals[:, k], vals[:, k - m])
        gcache[:, k - m] = gd
    y, _, _ = _advance(spec, radius, grid, cfg, vals, gcache, k, dbk, q1k, q2k, milstein)
    return float(y[0]) if single else y
