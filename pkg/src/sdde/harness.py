"""Monte Carlo strong-error studies, rate fitting and moment probes."""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .model import ProblemSpec, TimeGrid, TruncationPolicy
from .noise import BrownianStore
from .scheme import SchemeConfig, SimulationError, simulate, simulate_em

# fixed batch size: batching never changes per-path results, but keeping it
# independent of the thread count makes that obvious
CHUNK = 250


class StudyError(RuntimeError):
    def __init__(self, message, path=None, seed=None):
        self.path = path
        self.seed = seed
        super().__init__(message)


class DegenerateFitError(ValueError):
    pass


def _frac(v) -> Fraction:
    return v if isinstance(v, Fraction) else Fraction(v)


@dataclass(frozen=True)
class StudyPlan:
    levels: tuple = (Fraction(1, 64), Fraction(1, 128), Fraction(1, 256), Fraction(1, 512))
    reference_dt: Fraction = Fraction(1, 2048)
    num_paths: int = 2000
    q_bars: tuple = (2.0,)
    seed: int = 0
    # fine-grid refinement below reference_dt used for the Brownian store
    substeps: int = 1

    def __post_init__(self):
        object.__setattr__(self, "levels", tuple(_frac(v) for v in self.levels))
        object.__setattr__(self, "reference_dt", _frac(self.reference_dt))
        object.__setattr__(self, "q_bars", tuple(float(q) for q in self.q_bars))
        if self.num_paths < 2:
            raise ValueError("num_paths must be >= 2")
        if not self.q_bars or min(self.q_bars) < 2:
            raise ValueError("q_bars must be non-empty and all >= 2")
        if self.substeps < 1:
            raise ValueError("substeps must be >= 1")
        for lv in self.levels:
            if (lv / self.reference_dt).denominator != 1:
                raise ValueError(f"level {lv} is not a multiple of reference_dt {self.reference_dt}")

    @property
    def fine_dt(self) -> Fraction:
        return self.reference_dt / self.substeps

    def grids(self, spec: ProblemSpec):
        return [TimeGrid.build(lv, spec.delay, spec.horizon) for lv in self.levels]


@dataclass
class ErrorTable:
    """L^q errors at the terminal time, one row per level, one column per q."""

    levels: tuple
    q_bars: tuple
    error: np.ndarray  # (levels, q_bars)
    stderr: np.ndarray
    num_paths: int
    # sqrt(mean(max_k |diff_k|^2)) over the coarse grid; diagnostic only
    sup_error: np.ndarray = field(default=None)

    def rows(self):
        for i, lv in enumerate(self.levels):
            for j, q in enumerate(self.q_bars):
                yield lv, q, float(self.error[i, j]), float(self.stderr[i, j]), self.num_paths

    def slope(self, q_bar=2.0) -> float:
        return fit_rate(self, q_bar)[0]


def lq_error(diffs: np.ndarray, q: float):
    """(mean |d|^q)^(1/q) and its delta-method standard error."""
    d = np.abs(diffs)
    scale = d.max() if d.size else 0.0
    if scale == 0 or not math.isfinite(scale):
        return (0.0, 0.0) if scale == 0 else (math.inf, math.inf)
    # scaled so |d|^q neither underflows nor overflows
    a = (d / scale) ** q
    m = a.mean()
    se_m = a.std(ddof=1) / math.sqrt(a.size)
    err = m ** (1.0 / q)
    return float(scale * err), float(scale * err / (q * m) * se_m)


def error_table(levels, q_bars, diffs, sup=None) -> ErrorTable:
    """Build a table from per-level terminal differences ``diffs[i]`` (one entry per path)."""
    diffs = [np.asarray(d, dtype=float) for d in diffs]
    err = np.empty((len(levels), len(q_bars)))
    se = np.empty_like(err)
    for i, d in enumerate(diffs):
        for j, q in enumerate(q_bars):
            err[i, j], se[i, j] = lq_error(d, q)
    return ErrorTable(tuple(levels), tuple(q_bars), err, se, int(diffs[0].size), sup)


def fit_rate(table: ErrorTable, q_bar: float = 2.0):
    """Least-squares line through (log2 dt, log2 error): (slope, intercept, r^2)."""
    j = table.q_bars.index(float(q_bar))
    dts = np.array([float(v) for v in table.levels])
    errs = table.error[:, j]
    if len(dts) < 2:
        raise DegenerateFitError("need at least two levels")
    if np.any(errs <= 0):
        bad = [float(d) for d, e in zip(dts, errs) if e <= 0]
        raise DegenerateFitError(f"zero error at dt={bad}; drop the level or check the coupling")
    x = np.log2(dts)
    y = np.log2(errs)
    slope, intercept = np.polyfit(x, y, 1)
    resid = y - (slope * x + intercept)
    ss_tot = float(((y - y.mean()) ** 2).sum())
    r2 = 1.0 - float((resid**2).sum()) / ss_tot if ss_tot > 0 else 1.0
    return float(slope), float(intercept), r2


def _simulator(method):
    if method == "milstein":
        return simulate
    if method == "em":
        return simulate_em
    raise ValueError(f"unknown method {method!r}")


def _chunks(n):
    return [range(s, min(s + CHUNK, n)) for s in range(0, n, CHUNK)]


def _threads(threads):
    if threads is None:
        threads = int(os.environ.get("SDDE_THREADS", "1") or 1)
    return max(1, int(threads))


def _map(fn, items, threads):
    threads = _threads(threads)
    if threads == 1:
        return [fn(it) for it in items]
    with ThreadPoolExecutor(max_workers=threads) as ex:
        return list(ex.map(fn, items))


def strong_errors(spec: ProblemSpec, policy: TruncationPolicy, cfg: SchemeConfig, plan: StudyPlan,
                  reference="self", method="milstein", threads=None, radius=None,
                  sup_grid=False) -> ErrorTable:
    """Terminal-time L^q errors of each level against a coupled reference.

    Every path uses one Brownian store at ``plan.fine_dt``; the reference
    (``"self"``: same scheme at ``plan.reference_dt``; ``"exact"``: the
    problem's exact solution) and every level read it.
    """
    if reference == "exact" and spec.exact_solution is None:
        raise ValueError(f"problem {spec.name!r} has no exact solution")
    if reference not in ("self", "exact"):
        raise ValueError(f"unknown reference {reference!r}")
    sim = _simulator(method)
    grids = plan.grids(spec)
    ref_grid = TimeGrid.build(plan.reference_dt, spec.delay, spec.horizon)
    for g in grids + [ref_grid]:
        cfg.check(g.h)
    policy.check(sorted({g.h for g in grids + [ref_grid]}))

    def run(paths):
        store = BrownianStore.ensemble(plan.seed, paths, plan.fine_dt, spec.delay, spec.horizon)
        try:
            if reference == "self":
                ref_traj = sim(spec, policy, ref_grid, cfg, store, radius)
                ref = ref_traj.terminal
            else:
                ref = spec.exact_solution(spec.horizon, store.b_at(spec.horizon))
            out, sup = [], []
            for g in grids:
                tr = sim(spec, policy, g, cfg, store, radius)
                out.append(ref - tr.terminal)
                if sup_grid and reference == "self":
                    stride = int(g.dt / ref_grid.dt)
                    common = ref_traj.values[:, ref_grid.m_delay::stride]
                    sup.append(np.abs(common - tr.values[:, g.m_delay:]).max(axis=1))
        except SimulationError as e:
            p = paths[e.rows[0]] if e.rows else paths[0]
            raise StudyError(f"path {p} (seed {plan.seed}) failed: {e}", p, plan.seed) from e
        return out, sup

    results = _map(run, _chunks(plan.num_paths), threads)
    diffs = [np.concatenate([r[0][i] for r in results]) for i in range(len(grids))]
    sup = None
    if sup_grid and reference == "self":
        sup = np.array([math.sqrt(np.mean(np.concatenate([r[1][i] for r in results]) ** 2))
                        for i in range(len(grids))])
    return error_table(plan.levels, plan.q_bars, diffs, sup)


@dataclass(frozen=True)
class MomentEstimate:
    """max_k of the sample mean of |Y(t_k)|^p, or a blow-up record."""

    value: float
    blown_up: bool = False
    step: int | None = None
    path: int | None = None
    detail: str = ""


def moment_estimate(spec: ProblemSpec, policy: TruncationPolicy, cfg: SchemeConfig, grid: TimeGrid,
                    num_paths: int, p_exp: float, seed: int, radius=None, method="milstein",
                    threads=None, fine_dt=None) -> MomentEstimate:
    """Empirical sup over the grid of E|Y(t_k)|^p.

    A non-finite state is reported as ``blown_up=True`` with the step and
    path where it happened rather than raised.
    """
    if p_exp < 1:
        raise ValueError("p_exp must be >= 1")
    sim = _simulator(method)
    fine = grid.dt if fine_dt is None else _frac(fine_dt)

    def run(paths):
        store = BrownianStore.ensemble(seed, paths, fine, spec.delay, spec.horizon)
        try:
            tr = sim(spec, policy, grid, cfg, store, radius)
        except SimulationError as e:
            p = paths[e.rows[0]] if e.rows else paths[0]
            return MomentEstimate(math.inf, True, e.step, p, str(e))
        with np.errstate(over="ignore"):
            return (np.abs(tr.values) ** p_exp).sum(axis=0)

    parts = _map(run, _chunks(num_paths), threads)
    for part in parts:
        if isinstance(part, MomentEstimate):
            return part
    total = np.sum(parts, axis=0) / num_paths
    value = float(total.max())
    if not math.isfinite(value):
        return MomentEstimate(math.inf, True, detail="moment overflowed")
    return MomentEstimate(value)
