"""Skorokhod-embedding couplings of Brownian motion with the Donsker and
Kac-Stroock approximations on the unit horizon.

Two routes are provided.  The path-level couplers simulate ``beta`` on a
fine grid and detect barrier crossings there (overshoot snapped to the
barrier).  The ensemble engine :func:`coupled_ensemble` runs the same
construction without a time grid: inside each embedding period ``beta`` is
observed on the spatial lattice ``A_i / m * Z`` at its successive hitting
times, which form a simple symmetric random walk whose steps last
``(A_i / m)^2 tau`` with ``tau`` the exit time of ``[-1, 1]``.  Barrier
hits are then exact and only the values reported at fixed times carry an
error, bounded by one lattice spacing.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.special import erfc

from .noise import ScalarPath, SeedLike, TimeGrid, as_rng


class CouplingError(RuntimeError):
    def __init__(self, msg: str, embedded: int):
        super().__init__(msg)
        self.embedded = embedded


@dataclass
class CouplingResult:
    brownian: ScalarPath
    approx: ScalarPath
    stopping_times: np.ndarray
    embedded: np.ndarray          # beta at the stopping times, snapped

    @property
    def increments(self) -> np.ndarray:
        return np.diff(np.concatenate([[0.0], self.embedded]))


def default_fine_grid(n: int, horizon: float | None = None, kind: str = "donsker") -> TimeGrid:
    # Kac embedding times have a heavy right tail at small n (random barriers)
    horizon = horizon or (3.0 if kind == "donsker" else 10.0)
    step = 1.0 / (64 * n * n) if kind == "donsker" else 1.0 / (128 * n * n)
    return TimeGrid(horizon, int(np.ceil(horizon / step)))


def _unit_subgrid(fine_grid: TimeGrid) -> tuple[TimeGrid, int]:
    if fine_grid.T < 1.0:
        raise ValueError("coupling horizon must be at least 1")
    n1 = int(round(1.0 / fine_grid.dt))
    if abs(n1 * fine_grid.dt - 1.0) > 1e-9:
        raise ValueError("t = 1 must be a node of the fine grid")
    return TimeGrid(1.0, n1), n1


class _FineBrownian:
    """Brownian path on a fine grid, generated in blocks on demand."""

    def __init__(self, grid: TimeGrid, rng: np.random.Generator, block: int = 1 << 16):
        self.grid, self.rng, self.block = grid, rng, block
        self.vals = np.zeros(1)

    def _extend(self):
        room = self.grid.N + 1 - self.vals.size
        if room <= 0:
            return False
        m = min(self.block, room)
        steps = self.rng.standard_normal(m) * np.sqrt(self.grid.dt)
        self.vals = np.concatenate([self.vals, self.vals[-1] + np.cumsum(steps)])
        self.block *= 2
        return True

    def first_exit(self, j0: int, barrier: float) -> int | None:
        """First index ``j > j0`` with ``|beta_j - beta_{j0}| >= barrier``."""
        j = j0 + 1
        while True:
            if j >= self.vals.size and not self._extend():
                return None
            hit = np.flatnonzero(np.abs(self.vals[j:] - self.vals[j0]) >= barrier)
            if hit.size:
                return j + int(hit[0])
            j = self.vals.size

    def upto(self, n1: int) -> np.ndarray:
        while self.vals.size < n1 + 1:
            self._extend()
        return self.vals[: n1 + 1]


def skorokhod_couple_donsker(n: int, fine_grid: TimeGrid | None = None,
                             seed: SeedLike = None) -> CouplingResult:
    """Embed a Rademacher walk of ``n`` steps in a Brownian path.

    ``T_i`` is the first grid time after ``T_{i-1}`` at which ``beta`` has moved
    by ``n^{-1/2}``; the sign of the move is ``Z_i``.
    """
    fine_grid = fine_grid or default_fine_grid(n)
    unit, n1 = _unit_subgrid(fine_grid)
    bm = _FineBrownian(fine_grid, as_rng(seed))
    a = 1.0 / np.sqrt(n)
    idx = np.zeros(n + 1, dtype=int)
    for i in range(1, n + 1):
        j = bm.first_exit(idx[i - 1], a)
        if j is None:
            raise CouplingError(f"horizon {fine_grid.T} exhausted after {i - 1} of {n} "
                                "embeddings", i - 1)
        idx[i] = j
    z = np.sign(bm.vals[idx[1:]] - bm.vals[idx[:-1]])
    knots = np.concatenate([[0.0], np.cumsum(z)]) * a
    u = unit.times * n
    k = np.minimum(np.floor(u).astype(int), n - 1)
    approx = knots[k] + (u - k) * (knots[k + 1] - knots[k])
    return CouplingResult(ScalarPath(unit, bm.upto(n1).copy()), ScalarPath(unit, approx),
                          idx[1:] * fine_grid.dt, knots[1:])


def skorokhod_couple_kac(n: int, fine_grid: TimeGrid | None = None,
                         seed: SeedLike = None) -> CouplingResult:
    """Exponential-barrier coupling of ``beta`` with a Kac-Stroock path.

    Barriers ``A_i ~ Exp(2 sqrt(n))``; the reconstructed path runs through
    ``(T~_i, beta_{T_i})`` with ``T~_i = sum_{j<=i} A_j / sqrt(n)``, so its
    slope is exactly ``+-sqrt(n)``.  Embeddings continue until ``T~ >= 1``.
    """
    fine_grid = fine_grid or default_fine_grid(n, kind="kac")
    unit, n1 = _unit_subgrid(fine_grid)
    rng = as_rng(seed)
    bm = _FineBrownian(fine_grid, rng)
    rn = np.sqrt(n)
    idx, A, signs = [0], [], []
    ttilde = 0.0
    while ttilde < 1.0:
        a = rng.exponential(1.0 / (2.0 * rn))
        j = bm.first_exit(idx[-1], a)
        if j is None:
            raise CouplingError(f"horizon {fine_grid.T} exhausted after {len(A)} "
                                "embeddings", len(A))
        signs.append(np.sign(bm.vals[j] - bm.vals[idx[-1]]))
        A.append(a)
        idx.append(j)
        ttilde += a / rn
    A, signs = np.array(A), np.array(signs)
    emb = np.cumsum(signs * A)
    tt = np.concatenate([[0.0], np.cumsum(A) / rn])
    approx = np.interp(unit.times, tt, np.concatenate([[0.0], emb]))
    return CouplingResult(ScalarPath(unit, bm.upto(n1).copy()), ScalarPath(unit, approx),
                          np.array(idx[1:]) * fine_grid.dt, emb)


# --- exit time of [-1, 1] ------------------------------------------------------

def exit_time_cdf(t) -> np.ndarray:
    """``P(tau <= t)`` for the exit time of ``[-1, 1]`` by standard BM from 0.

    Image series for small ``t``, eigenfunction series otherwise; both are
    alternating and truncated far beyond double precision.
    """
    t = np.atleast_1d(np.asarray(t, dtype=float))
    out = np.empty_like(t)
    small = t < 0.5
    k = np.arange(60)[:, None]
    if np.any(small):
        ts = t[small][None, :]
        out[small] = 4.0 * np.sum((-1.0) ** k * 0.5 * erfc((2 * k + 1) / np.sqrt(2 * ts)), axis=0)
    if np.any(~small):
        tl = t[~small][None, :]
        s = np.sum((-1.0) ** k / (2 * k + 1) * np.exp(-((2 * k + 1) * np.pi) ** 2 * tl / 8), axis=0)
        out[~small] = 1.0 - 4.0 / np.pi * s
    return out


@lru_cache(maxsize=1)
def _exit_time_table():
    t = np.concatenate([np.geomspace(5e-3, 0.5, 4000, endpoint=False),
                        np.linspace(0.5, 45.0, 12000)])
    F = exit_time_cdf(t)
    keep = np.concatenate([[True], np.diff(F) > 0])
    return F[keep], t[keep]


def sample_exit_time(rng: np.random.Generator, size) -> np.ndarray:
    """Inverse-CDF draws of the exit time of ``[-1, 1]`` (mean 1)."""
    F, t = _exit_time_table()
    return np.interp(rng.random(size), F, t)


# --- lattice ensemble engine ----------------------------------------------------

@dataclass
class CoupledEnsemble:
    eval_times: np.ndarray
    brownian: np.ndarray          # (P, E) beta at eval times (last lattice hit)
    approx: np.ndarray            # (P, E) coupled approximation at eval times
    stopping_times: list          # per path, embedding times actually used
    barriers: list                # per path, |beta_{T_i} - beta_{T_{i-1}}|

    @property
    def error(self) -> np.ndarray:
        return self.approx - self.brownian


def coupled_ensemble(kind: str, n: int, n_paths: int, eval_times, seed: SeedLike = None,
                     lattice: int = 4) -> CoupledEnsemble:
    """Sample ``n_paths`` independent coupled pairs on ``[0, 1]``.

    ``kind`` is ``"donsker"`` (barrier ``n^{-1/2}``) or ``"kac"`` (barriers
    ``Exp(2 sqrt(n))``).  ``beta`` is reported at each eval time as its
    value at the last lattice hit, which is within ``A_i / lattice`` of the
    true value.
    """
    if kind not in ("donsker", "kac"):
        raise ValueError(f"unknown coupling {kind!r}")
    rng = as_rng(seed)
    ev = np.asarray(eval_times, dtype=float)
    if np.any(np.diff(ev) <= 0) or ev[0] < 0 or ev[-1] > 1:
        raise ValueError("eval times must be increasing inside [0, 1]")
    P, E, m, rn = n_paths, ev.size, lattice, np.sqrt(n)

    def draw_barriers(rows, cols):
        if kind == "donsker":
            return np.full((rows, cols), 1.0 / rn)
        return rng.exponential(1.0 / (2.0 * rn), size=(rows, cols))

    cap = int(2 * n + 10 * np.sqrt(2 * n) + 50) if kind == "kac" else int(n + 10 * np.sqrt(n) + 50)
    A = draw_barriers(P, cap)
    sgn = np.zeros((P, cap))
    Tst = np.zeros((P, cap))
    if kind == "donsker":
        need = np.full(P, n)
    else:
        # periods needed for T~ = sum A / sqrt(n) to reach 1
        cs = np.cumsum(A, axis=1) / rn
        while np.any(cs[:, -1] < 1.0):
            extra = draw_barriers(P, cap)
            A, sgn, Tst = (np.concatenate([A, extra], 1), np.concatenate([sgn, 0 * extra], 1),
                           np.concatenate([Tst, 0 * extra], 1))
            cs = np.cumsum(A, axis=1) / rn
            cap = A.shape[1]
        need = np.argmax(cs >= 1.0, axis=1) + 1

    t = np.zeros(P)
    pos = np.zeros(P, dtype=np.int64)
    centre = np.zeros(P)
    period = np.zeros(P, dtype=np.int64)
    nxt = np.zeros(P, dtype=np.int64)
    brown = np.zeros((P, E))
    act = np.arange(P)
    while act.size:
        delta = A[act, period[act]] / m
        t_new = t[act] + delta**2 * sample_exit_time(rng, act.size)
        val = centre[act] + pos[act] * delta
        while True:
            j = nxt[act]
            rec = (j < E) & (ev[np.minimum(j, E - 1)] < t_new)
            if not rec.any():
                break
            r = act[rec]
            brown[r, nxt[r]] = val[rec]
            nxt[r] += 1
        step = np.where(rng.random(act.size) < 0.5, -1, 1)
        pos[act] += step
        t[act] = t_new
        out = np.abs(pos[act]) == m
        if out.any():
            r = act[out]
            s = np.sign(pos[r]).astype(float)
            sgn[r, period[r]] = s
            Tst[r, period[r]] = t[r]
            centre[r] += s * A[r, period[r]]
            pos[r] = 0
            period[r] += 1
            full = r[period[r] >= cap]
            if full.size:
                extra = draw_barriers(P, cap)
                A = np.concatenate([A, extra], 1)
                sgn = np.concatenate([sgn, np.zeros_like(extra)], 1)
                Tst = np.concatenate([Tst, np.zeros_like(extra)], 1)
                cap = A.shape[1]
        done = (nxt[act] >= E) & (period[act] >= need[act])
        act = act[~done]

    approx = np.empty((P, E))
    if kind == "donsker":
        knots = np.concatenate([np.zeros((P, 1)), np.cumsum(sgn[:, :n], axis=1)], 1) / rn
        u = ev * n
        k = np.minimum(np.floor(u).astype(int), n - 1)
        approx[:] = knots[:, k] + (u - k) * (knots[:, k + 1] - knots[:, k])
    else:
        for p in range(P):
            q = need[p]
            tt = np.concatenate([[0.0], np.cumsum(A[p, :q]) / rn])
            xx = np.concatenate([[0.0], np.cumsum(sgn[p, :q] * A[p, :q])])
            approx[p] = np.interp(ev, tt, xx)
    return CoupledEnsemble(ev, brown, approx,
                           [Tst[p, : need[p]] for p in range(P)],
                           [A[p, : need[p]] for p in range(P)])
