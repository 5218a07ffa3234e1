"""Trace-class Wiener noise and its Wong-Zakai, Donsker and Kac-Stroock approximations.

Scalar paths live on a uniform :class:`TimeGrid` over ``[0, T]``.  On a
horizon ``T != 1`` the approximations are the Brownian rescalings
``sqrt(T) X^n(t / T)`` of the unit-horizon processes, so ``n`` always counts
approximation cells (Donsker, Wong-Zakai) or expected sign flips (Kac-Stroock)
per horizon.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .spectral import CovarianceSpec, SpectralField, basis_values

SeedLike = int | np.random.SeedSequence | np.random.Generator | None


def as_rng(seed: SeedLike) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def derive_rng(base_seed: int, *keys: int) -> np.random.Generator:
    """Independent stream for ``(base_seed, *keys)``; stable across runs and workers."""
    return np.random.default_rng(np.random.SeedSequence(base_seed, spawn_key=tuple(keys)))


@dataclass(frozen=True)
class TimeGrid:
    T: float
    N: int

    def __post_init__(self):
        if self.N < 1:
            raise ValueError(f"TimeGrid needs N >= 1, got {self.N}")
        if self.T <= 0:
            raise ValueError(f"TimeGrid needs T > 0, got {self.T}")

    @property
    def dt(self) -> float:
        return self.T / self.N

    @property
    def times(self) -> np.ndarray:
        return np.linspace(0.0, self.T, self.N + 1)

    def index(self, t: float) -> int:
        i = int(round(t / self.dt))
        if not 0 <= i <= self.N or abs(i * self.dt - t) > 1e-9 * max(1.0, self.T):
            raise ValueError(f"time {t} is not a node of {self}")
        return i

    def refine(self, factor: int) -> "TimeGrid":
        return TimeGrid(self.T, self.N * factor)


@dataclass
class ScalarPath:
    grid: TimeGrid
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape[-1] != self.grid.N + 1:
            raise ValueError("path length does not match its grid")

    def at(self, t):
        """Linear interpolation between grid values."""
        return np.interp(t, self.grid.times, self.values)


# --- scalar samplers (vectorised over a leading ``size``) --------------------

def brownian_values(grid: TimeGrid, rng: np.random.Generator, size=()) -> np.ndarray:
    size = tuple(np.atleast_1d(size)) if size != () else ()
    dB = rng.standard_normal(size + (grid.N,)) * np.sqrt(grid.dt)
    out = np.zeros(size + (grid.N + 1,))
    np.cumsum(dB, axis=-1, out=out[..., 1:])
    return out


def sample_brownian(grid: TimeGrid, seed: SeedLike = None) -> ScalarPath:
    """Standard Brownian path with ``values[0] = 0``."""
    return ScalarPath(grid, brownian_values(grid, as_rng(seed)))


def _unit_variance(z_dist: str, rng: np.random.Generator, shape) -> np.ndarray:
    if z_dist == "rademacher":
        return rng.integers(0, 2, size=shape) * 2.0 - 1.0
    if z_dist == "gaussian":
        return rng.standard_normal(shape)
    if z_dist == "uniform":
        return rng.uniform(-np.sqrt(3.0), np.sqrt(3.0), size=shape)
    raise ValueError(f"unknown increment law {z_dist!r}")


def _check_resolves(grid: TimeGrid, n: int):
    if n < 1:
        raise ValueError("n must be >= 1")
    if grid.N < n:
        raise ValueError(f"grid with N={grid.N} steps is coarser than mesh T/{n}")


def donsker_from_increments(Z: np.ndarray, grid: TimeGrid) -> np.ndarray:
    """Piecewise-linear rescaled walk with knots ``i T / n`` and slopes from ``Z``."""
    n = Z.shape[-1]
    h = grid.T / n
    knots = np.zeros(Z.shape[:-1] + (n + 1,))
    np.cumsum(Z, axis=-1, out=knots[..., 1:])
    knots *= np.sqrt(h)
    u = grid.times / h
    i = np.minimum(np.floor(u).astype(int), n - 1)
    frac = u - i
    return knots[..., i] + frac * (knots[..., i + 1] - knots[..., i])


def donsker_values(n: int, grid: TimeGrid, rng: np.random.Generator, z_dist="rademacher", size=()):
    _check_resolves(grid, n)
    size = tuple(np.atleast_1d(size)) if size != () else ()
    return donsker_from_increments(_unit_variance(z_dist, rng, size + (n,)), grid)


def donsker_path(n: int, z_dist: str, grid: TimeGrid, seed: SeedLike = None) -> ScalarPath:
    """Donsker walk ``S^n``; at knot ``i`` it equals ``sqrt(T/n) sum_{j<=i} Z_j``."""
    return ScalarPath(grid, donsker_values(n, grid, as_rng(seed), z_dist))


def poisson_events(rate: float, T: float, rng: np.random.Generator, size: int) -> np.ndarray:
    """Event times of ``size`` independent Poisson processes on ``[0, T]``.

    Returned as a ``(size, m + 1)`` array whose first column is 0 and whose
    trailing entries exceed ``T`` (so every row covers the horizon).
    """
    mean = rate * T
    m = int(mean + 6 * np.sqrt(mean) + 10)
    while True:
        gaps = rng.exponential(1.0 / rate, size=(size, m))
        ev = np.concatenate([np.zeros((size, 1)), np.cumsum(gaps, axis=1)], axis=1)
        if np.all(ev[:, -1] > T):
            return ev
        m *= 2


def kac_stroock_values(n: int, grid: TimeGrid, rng: np.random.Generator, size=()) -> np.ndarray:
    """Kac-Stroock paths evaluated exactly on the grid.

    The telegraph sign flips at Poisson times of rate ``n / T``; the path is
    the exact integral of the ``+-sqrt(n / T)`` slope, so between events it is
    linear and grid evaluation carries no discretisation error.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    shape = tuple(np.atleast_1d(size)) if size != () else ()
    B = int(np.prod(shape)) if shape else 1
    rate = n / grid.T
    slope = np.sqrt(rate)
    ev = poisson_events(rate, grid.T, rng, B)
    sign0 = np.where(rng.integers(0, 2, size=B) == 1, -1.0, 1.0)
    m1 = ev.shape[1]
    seg_sign = sign0[:, None] * (-1.0) ** np.arange(m1)
    theta_ev = np.zeros_like(ev)
    np.cumsum(slope * seg_sign[:, :-1] * np.diff(ev, axis=1), axis=1, out=theta_ev[:, 1:])
    # batched searchsorted: shift each row into its own disjoint window
    span = ev[:, -1].max() + 1.0
    offs = np.arange(B)[:, None] * span
    flat = (ev + offs).ravel()
    t = grid.times[None, :] + offs
    idx = np.searchsorted(flat, t.ravel(), side="right").reshape(B, -1) - 1
    j = idx - np.arange(B)[:, None] * m1
    rows = np.arange(B)[:, None]
    vals = theta_ev[rows, j] + slope * seg_sign[rows, j] * (grid.times[None, :] - ev[rows, j])
    vals[:, 0] = 0.0
    return vals.reshape(shape + (grid.N + 1,)) if shape else vals[0]


def kac_stroock_path(n: int, grid: TimeGrid, seed: SeedLike = None) -> ScalarPath:
    return ScalarPath(grid, kac_stroock_values(n, grid, as_rng(seed)))


def wong_zakai_values(values: np.ndarray, grid: TimeGrid, n: int) -> np.ndarray:
    _check_resolves(grid, n)
    if grid.N % n:
        raise ValueError(f"Wong-Zakai knots T/{n} are not nodes of a {grid.N}-step grid")
    stride = grid.N // n
    knots = values[..., ::stride]
    frac = (np.arange(grid.N + 1) % stride) / stride
    i = np.arange(grid.N + 1) // stride
    i_hi = np.minimum(i + 1, n)
    return knots[..., i] + frac * (knots[..., i_hi] - knots[..., i])


def wong_zakai(beta: ScalarPath, n: int) -> ScalarPath:
    """Linear interpolation of ``beta`` on the knots ``i T / n``."""
    return ScalarPath(beta.grid, wong_zakai_values(beta.values, beta.grid, n))


# --- per-mode makers --------------------------------------------------------

PathMaker = Callable[[TimeGrid, np.random.Generator], np.ndarray]


def brownian_maker() -> PathMaker:
    return lambda grid, rng: brownian_values(grid, rng)


def donsker_maker(n: int, z_dist: str = "rademacher") -> PathMaker:
    return lambda grid, rng: donsker_values(n, grid, rng, z_dist)


def kac_stroock_maker(n: int) -> PathMaker:
    return lambda grid, rng: kac_stroock_values(n, grid, rng)


def wong_zakai_maker(n: int) -> PathMaker:
    """Brownian mode path replaced by its mesh-``T/n`` interpolation.

    With the same seed this interpolates exactly the path ``brownian_maker``
    would have produced, which is what couples the two solutions.
    """
    return lambda grid, rng: wong_zakai_values(brownian_values(grid, rng), grid, n)


# --- B-valued noise ---------------------------------------------------------

@dataclass
class NoiseField:
    """Truncated ``W_t = sum_{k<=K} sqrt(lambda_k) X^k_t e_k`` on a shared grid.

    ``modes`` holds the unscaled scalar paths, shape ``(K, N + 1)``.
    """

    cov: CovarianceSpec
    grid: TimeGrid
    modes: np.ndarray

    def __post_init__(self):
        self.modes = np.asarray(self.modes, dtype=float)
        if self.modes.shape != (self.cov.K, self.grid.N + 1):
            raise ValueError(
                f"noise modes have shape {self.modes.shape}, expected "
                f"{(self.cov.K, self.grid.N + 1)}"
            )

    @property
    def K(self) -> int:
        return self.cov.K

    def coefficients(self) -> np.ndarray:
        """Sine coefficients of ``W_t`` at each grid time, shape ``(N + 1, K)``."""
        return (self.modes * self.cov.sqrt_lambdas[:, None]).T

    def increments(self) -> np.ndarray:
        return np.diff(self.coefficients(), axis=0)

    def at_index(self, i: int) -> SpectralField:
        return SpectralField(self.coefficients()[i])

    def evaluate(self, t, kind: str = "linear") -> np.ndarray:
        """Coefficients of ``W`` at arbitrary times ``t`` (last axis modes).

        ``kind="linear"`` interpolates linearly between grid values (the
        continuous path); ``kind="step"`` is the right-continuous path that
        jumps by the whole increment at the left end of each cell, the path
        for which the exponential Euler sum is an exact convolution.
        """
        t = np.asarray(t, dtype=float)
        c = self.coefficients()
        if kind == "linear":
            u = np.clip(t / self.grid.dt, 0.0, self.grid.N)
            i = np.minimum(np.floor(u).astype(int), self.grid.N - 1)
            frac = (u - i)[..., None]
            return c[i] + frac * (c[i + 1] - c[i])
        if kind == "step":
            i = np.ceil(t / self.grid.dt - 1e-9).astype(int)
            return c[np.clip(i, 0, self.grid.N)]
        raise ValueError(f"unknown interpolation {kind!r}")

    def norm(self, i: int) -> float:
        return float(np.linalg.norm(self.coefficients()[i]))


def mode_rngs(seed: int, K: int, path_index: int = 0):
    return [derive_rng(seed, k, path_index) for k in range(K)]


def assemble_noise(cov: CovarianceSpec, maker: PathMaker, grid: TimeGrid, seed: int,
                   path_index: int = 0) -> NoiseField:
    """Sample one noise path; mode ``k`` uses the stream ``(seed, k, path_index)``."""
    cov.check()
    modes = np.stack([maker(grid, rng) for rng in mode_rngs(seed, cov.K, path_index)])
    return NoiseField(cov, grid, modes)


def noise_ensemble(cov: CovarianceSpec, maker: PathMaker, grid: TimeGrid, seed: int,
                   paths) -> np.ndarray:
    """Coefficient paths for several path indices, shape ``(P, N + 1, K)``."""
    out = np.empty((len(paths), grid.N + 1, cov.K))
    for j, p in enumerate(paths):
        out[j] = assemble_noise(cov, maker, grid, seed, p).coefficients()
    return out


def physical_noise(coeff_increments: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Nodal values of noise increments given their sine coefficients."""
    return coeff_increments @ basis_values(coeff_increments.shape[-1], x).T
