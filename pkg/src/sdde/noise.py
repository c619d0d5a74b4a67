"""Brownian paths on a master fine grid and the iterated integrals Q1, Q2.

A store holds the fine increments of one path (or a stack of paths, one per
row) covering ``[-tau, T]``.  Every coarser level reads the same increments,
so all step sizes in a convergence study see the same Brownian path.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from fractions import Fraction

import numpy as np
from scipy.special import ndtri

MAGIC = b"SDDEB1"
_HEADER = struct.Struct("<6sQQQQQ")


class GridAlignmentError(ValueError):
    pass


def _as_fraction(v) -> Fraction:
    if isinstance(v, Fraction):
        return v
    return Fraction(v)


def standard_normals(seed: int, path: int, n: int) -> np.ndarray:
    """``n`` N(0,1) variates for stream ``(seed, path)``.

    Philox keyed by (seed, path); variate ``i`` comes from the i-th 64-bit
    output, so the sequence never depends on how paths are scheduled.
    Inverse-CDF transform of ``u = (2k + 1) / 2**53`` with ``k`` the top 52
    bits, which keeps ``u`` strictly inside (0, 1).
    """
    if not (0 <= seed < 2**64 and 0 <= path < 2**64):
        raise ValueError("seed and path must fit in 64 bits")
    bg = np.random.Philox(key=seed | (path << 64))
    raw = bg.random_raw(n)
    k = (raw >> np.uint64(12)).astype(np.float64)
    u = (2.0 * k + 1.0) * 2.0**-53
    return ndtri(u)


@dataclass(frozen=True)
class BrownianStore:
    """Fine increments of B on ``[-tau, T]``; trailing axis is time.

    ``increments[..., j]`` is ``B(s_{j+1}) - B(s_j)`` with
    ``s_j = (j - n_pre) * fine_dt``, so index ``n_pre`` starts at time 0.
    """

    fine_dt: Fraction
    n_pre: int
    increments: np.ndarray
    seed: int = 0
    paths: tuple = (0,)

    @classmethod
    def generate(cls, seed, path, fine_dt, delay, horizon) -> "BrownianStore":
        return cls.ensemble(seed, [path], fine_dt, delay, horizon).row(0)

    @classmethod
    def ensemble(cls, seed, paths, fine_dt, delay, horizon) -> "BrownianStore":
        """One row of increments per path index in ``paths``."""
        d = _as_fraction(fine_dt)
        n_pre = Fraction(delay) / d
        n_post = Fraction(horizon) / d
        if n_pre.denominator != 1 or n_post.denominator != 1:
            raise GridAlignmentError(f"fine_dt={fine_dt} does not divide delay and horizon")
        n = int(n_pre + n_post)
        scale = np.sqrt(float(d))
        paths = tuple(int(p) for p in paths)
        inc = np.empty((len(paths), n))
        for row, p in enumerate(paths):
            inc[row] = standard_normals(seed, p, n) * scale
        return cls(d, int(n_pre), inc, seed, paths)

    def row(self, i: int) -> "BrownianStore":
        return BrownianStore(self.fine_dt, self.n_pre, self.increments[i], self.seed, (self.paths[i],))

    @property
    def n_post(self) -> int:
        return self.increments.shape[-1] - self.n_pre

    def ratio(self, level_dt) -> int:
        r = _as_fraction(level_dt) / self.fine_dt
        if r.denominator != 1 or r < 1:
            raise GridAlignmentError(f"level dt {level_dt} is not a multiple of fine dt {self.fine_dt}")
        return int(r)

    def brownian(self) -> np.ndarray:
        """B at fine grid points ``s_{-n_pre} .. s_{n_post}`` with B(0) = 0."""
        inc = self.increments
        zero = np.zeros(inc.shape[:-1] + (1,))
        b = np.concatenate([zero, np.cumsum(inc, axis=-1)], axis=-1)
        return b - b[..., self.n_pre : self.n_pre + 1]

    def b_at(self, t) -> np.ndarray:
        """B(t) for t on the fine grid, shape ``increments.shape[:-1]``."""
        j = _as_fraction(t) / self.fine_dt
        if j.denominator != 1:
            raise GridAlignmentError(f"t={t} is not on the fine grid")
        return self.brownian()[..., self.n_pre + int(j)]

    def level_increments(self, level_dt, include_pre=False) -> np.ndarray:
        """Coarse increments of the level, for steps k = 0 .. M'-1 (or from -M)."""
        r = self.ratio(level_dt)
        start = 0 if include_pre else self.n_pre
        if self.n_pre % r:
            raise GridAlignmentError(f"level dt {level_dt} does not divide the delay")
        seg = self.increments[..., start:]
        if seg.shape[-1] % r:
            raise GridAlignmentError(f"level dt {level_dt} does not divide the horizon")
        return seg.reshape(seg.shape[:-1] + (-1, r)).sum(axis=-1)

    def level_q2(self, level_dt) -> np.ndarray:
        """Q2 for every step k = 0 .. M'-1 of the level (left-point fine sums)."""
        r = self.ratio(level_dt)
        m_total = self.n_post // r
        if self.n_post % r or self.n_pre % r:
            raise GridAlignmentError(f"level dt {level_dt} is not aligned with the store")
        db = self.increments[..., self.n_pre : self.n_pre + m_total * r]
        # step k's delayed window starts at fine index k*r (time t_k - tau)
        dd = self.increments[..., : m_total * r]
        return _q2_windows(db.reshape(db.shape[:-1] + (m_total, r)), dd.reshape(dd.shape[:-1] + (m_total, r)))


def _q2_windows(db, dd):
    w = np.cumsum(dd, axis=-1) - dd
    return (w * db).sum(axis=-1)


def coarse_increment(store: BrownianStore, level_dt, k: int):
    """B(t_{k+1}) - B(t_k) on the level grid, -M <= k < M'."""
    r = store.ratio(level_dt)
    j = store.n_pre + k * r
    if j < 0 or j + r > store.increments.shape[-1]:
        raise GridAlignmentError(f"step {k} lies outside the stored path")
    return store.increments[..., j : j + r].sum(axis=-1)


def q1(delta_b, dt):
    """Closed-form ``int int dB dB = ((dB)^2 - dt) / 2``."""
    return (delta_b * delta_b - dt) / 2


def q2(store: BrownianStore, level_dt, k: int, m_delay: int):
    """Left-point Ito sum of ``int_{t_k}^{t_{k+1}} (B(s - tau) - B(t_k - tau)) dB(s)``."""
    if k < m_delay:
        raise ValueError(f"Q2 is only used for k >= m_delay ({k} < {m_delay})")
    r = store.ratio(level_dt)
    j = store.n_pre + k * r
    if j + r > store.increments.shape[-1]:
        raise GridAlignmentError(f"step {k} lies outside the stored path")
    jd = j - store.n_pre
    db = store.increments[..., j : j + r]
    dd = store.increments[..., jd : jd + r]
    return _q2_windows(db[..., None, :], dd[..., None, :])[..., 0]


def dump(store: BrownianStore) -> bytes:
    """Binary image of a single path: header then little-endian float64 increments."""
    if store.increments.ndim != 1:
        raise ValueError("dump expects a single path")
    d = store.fine_dt
    inc = np.ascontiguousarray(store.increments, dtype="<f8")
    header = _HEADER.pack(MAGIC, store.seed, store.paths[0], d.numerator, d.denominator, inc.size)
    return header + inc.tobytes()


def load(data: bytes, delay) -> BrownianStore:
    """Inverse of :func:`dump`; ``delay`` fixes where time 0 sits."""
    magic, seed, path, num, den, count = _HEADER.unpack_from(data)
    if magic != MAGIC:
        raise ValueError("not a Brownian path dump")
    inc = np.frombuffer(data, dtype="<f8", count=count, offset=_HEADER.size).astype(float)
    d = Fraction(num, den)
    n_pre = Fraction(delay) / d
    if n_pre.denominator != 1:
        raise GridAlignmentError("delay is not a multiple of the stored fine dt")
    return BrownianStore(d, int(n_pre), inc, seed, (path,))
