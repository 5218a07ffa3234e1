"""Norm estimators, moment-condition checks, ensemble statistics and rate fits.

Expectations are Monte-Carlo means carrying plug-in standard errors; interval
suprema are grid suprema over explicit pair sets.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .coupling import coupled_ensemble
from .noise import NoiseField, ScalarPath, TimeGrid, as_rng
from .solver import SolutionPath
from .spectral import (Grid1D, basis_values, eigenvalues, semigroup_factors,
                       sobolev_norm)


# --- statistics -----------------------------------------------------------------

@dataclass
class EnsembleStats:
    """Mean and central moments of samples along axis 0, with standard errors."""

    samples: np.ndarray
    max_order: int = 4

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=float)
        if self.samples.shape[0] < 2:
            raise ValueError("need at least two samples")
        if not np.all(np.isfinite(self.samples)):
            raise ValueError("samples must be finite")

    @property
    def count(self) -> int:
        return self.samples.shape[0]

    @property
    def mean(self):
        return self.samples.mean(axis=0)

    @property
    def se(self):
        return self.samples.std(axis=0, ddof=1) / np.sqrt(self.count)

    def central_moment(self, r: int):
        if r > self.max_order:
            raise ValueError(f"order {r} above max_order {self.max_order}")
        return np.mean((self.samples - self.mean) ** r, axis=0)

    def moment(self, r: int):
        """Raw absolute moment ``E|X|^r`` and its standard error."""
        x = np.abs(self.samples) ** r
        return x.mean(axis=0), x.std(axis=0, ddof=1) / np.sqrt(self.count)


def mean_se(x, axis=0):
    x = np.asarray(x, dtype=float)
    n = x.shape[axis]
    return x.mean(axis=axis), x.std(axis=axis, ddof=1) / np.sqrt(n)


@dataclass
class RateFit:
    """Least-squares line through ``(log x, log y)``."""

    x: np.ndarray
    y: np.ndarray
    slope: float = field(init=False)
    intercept: float = field(init=False)
    r2: float = field(init=False)

    def __post_init__(self):
        self.x = np.asarray(self.x, dtype=float)
        self.y = np.asarray(self.y, dtype=float)
        if self.x.size < 3 or self.x.size != self.y.size:
            raise ValueError("a rate fit needs at least three (x, y) points")
        if np.any(self.x <= 0) or np.unique(self.x).size != self.x.size:
            raise ValueError("abscissae must be positive and distinct")
        if np.any(self.y <= 0):
            raise ValueError("ordinates must be positive for a log-log fit")
        lx, ly = np.log(self.x), np.log(self.y)
        self.slope, self.intercept = (float(v) for v in np.polyfit(lx, ly, 1))
        resid = ly - (self.slope * lx + self.intercept)
        ss = np.sum((ly - ly.mean()) ** 2)
        self.r2 = float(1.0 - np.sum(resid**2) / ss) if ss > 0 else 1.0

    def as_dict(self):
        return {"slope": self.slope, "intercept": self.intercept, "r2": self.r2}


# --- Hölder-type seminorms -------------------------------------------------------

def dyadic_index_pairs(N: int, max_per_level: int | None = None):
    """All pairs ``(i, i + 2^l)``, ``2^l <= N``; optionally thinned per level."""
    pairs = []
    m = 1
    while m <= N:
        starts = np.arange(0, N - m + 1)
        if max_per_level is not None and starts.size > max_per_level:
            starts = starts[:: int(np.ceil(starts.size / max_per_level))]
        pairs += [(int(i), int(i + m)) for i in starts]
        m *= 2
    return pairs


def _as_path(path):
    """``(times, values)`` with values shaped ``(n_t,)`` or ``(n_t, K)``."""
    if isinstance(path, ScalarPath):
        return path.grid.times, path.values
    if isinstance(path, SolutionPath):
        return path.times, path.coeffs
    if isinstance(path, NoiseField):
        return path.grid.times, path.coefficients()
    times, values = path
    return np.asarray(times, dtype=float), np.asarray(values, dtype=float)


def _norm(diff: np.ndarray, norm, g: Grid1D | None):
    """Norm of increments: scalar abs, or ``(alpha, p)`` Sobolev norm of fields."""
    if norm is None or norm == "abs":
        return np.abs(diff) if diff.ndim == 1 else np.linalg.norm(diff, axis=-1)
    if norm == "sup":
        from .spectral import sup_norm
        return sup_norm(diff, g)
    alpha, p = norm
    return sobolev_norm(diff, alpha, p, g)


def _check_lambda(lam):
    if not 0 < lam <= 1:
        raise ValueError(f"Hölder exponent must lie in (0, 1], got {lam}")


def holder_seminorm(path, lam: float, norm=None, pairs=None, g: Grid1D | None = None) -> float:
    """``max_{(s,t)} ||y_t - y_s|| / |t - s|^lam`` over index pairs."""
    _check_lambda(lam)
    times, v = _as_path(path)
    pairs = dyadic_index_pairs(len(times) - 1) if pairs is None else pairs
    if len(pairs) == 0:
        raise ValueError("empty pair set")
    i, j = np.asarray(pairs).T
    r = _norm(v[j] - v[i], norm, g)
    return float(np.max(r / (times[j] - times[i]) ** lam))


def holder_seminorm_hat(path, lam: float, norm=None, pairs=None, g: Grid1D | None = None,
                        semigroup: bool = True) -> float:
    """As :func:`holder_seminorm` with ``y_t - S_{t-s} y_s`` increments."""
    _check_lambda(lam)
    times, v = _as_path(path)
    if v.ndim != 2:
        raise ValueError("twisted increments need a field-valued path")
    pairs = dyadic_index_pairs(len(times) - 1) if pairs is None else pairs
    if len(pairs) == 0:
        raise ValueError("empty pair set")
    i, j = np.asarray(pairs).T
    h = times[j] - times[i]
    if semigroup:
        lamk = eigenvalues(v.shape[-1])
        diff = v[j] - np.exp(-h[:, None] * lamk) * v[i]
    else:
        diff = v[j] - v[i]
    return float(np.max(_norm(diff, norm, g) / h**lam))


def noise_holder_norm(W: NoiseField, eps: float, p: int, pairs=None, g: Grid1D | None = None,
                      eta: float | None = None) -> float:
    """Hölder-(1/2 - eps) seminorm of ``t -> W_t`` in ``B_{eta, 2p}``."""
    if not 0 < eps < 0.5:
        raise ValueError("eps must lie in (0, 1/2)")
    eta = W.cov.eta if eta is None else eta
    g = g or Grid1D(max(4 * W.K, 8))
    return holder_seminorm(W, 0.5 - eps, (eta, 2 * p), pairs, g)


# --- moment conditions -------------------------------------------------------------

def grid_pairs(grid: TimeGrid, stride: int = 1):
    """All index pairs ``i < j`` on the (optionally sub-sampled) grid."""
    idx = np.arange(0, grid.N + 1, stride)
    iu, ju = np.triu_indices(idx.size, k=1)
    return idx[iu], idx[ju]


@dataclass
class MomentRow:
    n: int
    ratio: float
    se: float
    t: float
    s: float

    def as_dict(self):
        return {"n": self.n, "ratio": self.ratio, "se": self.se, "s": self.s, "t": self.t}


def _pair_moments(sampler, n, grid, rng, count, i, j, h, p, chunk):
    s1 = np.zeros(i.size)
    s2 = np.zeros(i.size)
    done = 0
    while done < count:
        m = min(chunk, count - done)
        paths = sampler(n, grid, rng, m)
        x = (paths[:, j] - paths[:, i]) ** (2 * p) / h**p
        s1 += x.sum(0)
        s2 += (x**2).sum(0)
        done += m
    mean = s1 / count
    var = np.maximum(s2 / count - mean**2, 0.0) * count / (count - 1)
    return mean, np.sqrt(var / count)


def moment_condition_i(sampler: Callable, n_list, p: int, mc_count: int, grid: TimeGrid,
                       seed: int = 0, pair_stride: int = 1, chunk: int = 2000) -> list[MomentRow]:
    """Per ``n``: ``max_(s,t) E|b^n_t - b^n_s|^(2p) / |t - s|^p`` over grid pairs.

    ``sampler(n, grid, rng, size)`` returns an array of paths ``(size, N + 1)``.
    The maximising pair is selected on half of the samples and its ratio is
    re-estimated on the other half, so the reported value and standard error
    carry no selection bias.
    """
    i, j = grid_pairs(grid, pair_stride)
    h = (j - i) * grid.dt
    half = mc_count // 2
    rows = []
    for k, n in enumerate(n_list):
        rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(k,)))
        sel, _ = _pair_moments(sampler, n, grid, rng, half, i, j, h, p, chunk)
        a = int(np.argmax(sel))
        m, se = _pair_moments(sampler, n, grid, rng, mc_count - half, i[a:a + 1], j[a:a + 1],
                              h[a:a + 1], p, chunk)
        rows.append(MomentRow(n if n is not None else 0, float(m[0]), float(se[0]),
                              float(j[a] * grid.dt), float(i[a] * grid.dt)))
    return rows


def coupling_moments(kind: str, n_list, p: int, mc_count: int, seed: int = 0,
                     eval_points: int = 128, lattice: int = 4):
    """Per ``n``: ``sup_t E|b^n_t - b_t|^(2p)`` for a Skorokhod coupling on ``[0, 1]``."""
    ev = np.linspace(0.0, 1.0, eval_points + 1)
    rows = []
    for k, n in enumerate(n_list):
        ens = coupled_ensemble(kind, n, mc_count, ev,
                               np.random.SeedSequence(seed, spawn_key=(k,)), lattice)
        x = np.abs(ens.error) ** (2 * p)
        m, se = mean_se(x)
        a = int(np.argmax(m))
        rows.append({"n": n, "sup_moment": float(m[a]), "se": float(se[a]), "t": float(ev[a])})
    return rows


def moment_condition_ii(kind: str, n_list, p: int, mc_count: int, seed: int = 0, **kw):
    """Coupling-rate fit of ``sup_t E|b^n_t - b_t|^(2p)`` against ``n``."""
    rows = coupling_moments(kind, n_list, p, mc_count, seed, **kw)
    fit = RateFit([r["n"] for r in rows], [r["sup_moment"] for r in rows])
    return fit, rows


def interpolation_ratios(error: np.ndarray, eval_times, n: int, p: int, eps: float,
                         nu: float) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Per pair ``s < t`` of eval times: mean and SE of
    ``|d(b^n - b)_ts|^(2p) n^(p eps nu) / |t - s|^((1 - eps) p)`` from coupled errors ``(P, E)``.

    Returns ``(mean, se, i, j)`` with the pair index arrays.
    """
    if not 0 < eps < 1:
        raise ValueError("eps must lie in (0, 1)")
    ev = np.asarray(eval_times, dtype=float)
    iu, ju = np.triu_indices(ev.size, k=1)
    h = ev[ju] - ev[iu]
    e = np.asarray(error, dtype=float)
    x = np.abs(e[:, ju] - e[:, iu]) ** (2 * p) * n ** (p * eps * nu) / h ** ((1 - eps) * p)
    m, se = mean_se(x)
    return m, se, iu, ju


def interpolation_bound_check(kind: str, n_list, p: int, eps: float, nu: float, mc_count: int,
                              seed: int = 0, eval_points: int = 64, lattice: int = 4):
    """Per ``n``: ``max_(s,t) E|d(b^n - b)_ts|^(2p) n^(p eps nu) / |t - s|^((1 - eps) p)``."""
    if not 0 < eps < 1:
        raise ValueError("eps must lie in (0, 1)")
    ev = np.linspace(0.0, 1.0, eval_points + 1)
    rows = []
    for k, n in enumerate(n_list):
        ens = coupled_ensemble(kind, n, mc_count, ev,
                               np.random.SeedSequence(seed, spawn_key=(k,)), lattice)
        m, se, iu, ju = interpolation_ratios(ens.error, ev, n, p, eps, nu)
        a = int(np.argmax(m))
        rows.append({"n": n, "ratio": float(m[a]), "se": float(se[a]),
                     "s": float(ev[iu[a]]), "t": float(ev[ju[a]])})
    return rows


def weighted_sum_oracle(weights: np.ndarray, m4: float = 1.0) -> float:
    """Exact ``E(sum f_i X_i)^4 / (sum f_i^2)^2`` for i.i.d. centred unit-variance symmetric X."""
    f2 = np.asarray(weights, dtype=float) ** 2
    s2 = f2.sum()
    exact = m4 * np.sum(f2**2) + 3.0 * (s2**2 - np.sum(f2**2))
    return float(exact / s2**2)


def weighted_sum_ratio(weights: np.ndarray, samples: int, rng) -> tuple[float, float]:
    """MC estimate (and SE) of ``E|sum f_i X_i|^4 / (sum f_i^2)^2`` for Rademacher X."""
    rng = as_rng(rng)
    f = np.asarray(weights, dtype=float)
    s2 = np.sum(f**2)
    vals = np.empty(samples)
    chunk = 20000
    for a in range(0, samples, chunk):
        b = min(samples, a + chunk)
        X = rng.integers(0, 2, size=(b - a, f.size)) * 2.0 - 1.0
        vals[a:b] = (X @ f) ** 4 / s2**2
    m, se = mean_se(vals)
    return float(m), float(se)


# --- solution-level metrics ----------------------------------------------------------

def solution_distance(Y, Yt, gamma: float, g: Grid1D | None = None, index=None) -> np.ndarray:
    """``max_t ||Y_t - Y~_t||_{B_gamma}`` over grid times (or the subset ``index``).

    Accepts :class:`SolutionPath` pairs or coefficient arrays ``(..., n_t, K)``;
    batched input gives one distance per leading index.
    """
    if isinstance(Y, SolutionPath) or isinstance(Yt, SolutionPath):
        if not (isinstance(Y, SolutionPath) and isinstance(Yt, SolutionPath)):
            raise ValueError("compare two solution paths")
        if Y.grid != Yt.grid:
            raise ValueError("solutions live on different time grids")
        a, b = Y.coeffs, Yt.coeffs
    else:
        a, b = np.asarray(Y, dtype=float), np.asarray(Yt, dtype=float)
        if a.shape != b.shape:
            raise ValueError(f"shape mismatch {a.shape} vs {b.shape}")
    d = a - b
    if index is not None:
        d = d[..., index, :]
    nrm = np.sqrt(np.sum((d * eigenvalues(d.shape[-1]) ** gamma) ** 2, axis=-1))
    out = nrm.max(axis=-1)
    return float(out) if np.ndim(out) == 0 else out


def functional_values(name: str, coeffs: np.ndarray) -> np.ndarray:
    """Built-in functionals of final-time coefficients ``(..., K)``."""
    if name == "e1":
        return coeffs[..., 0]
    if name == "l2sq":
        return np.sum(coeffs**2, axis=-1)
    if name == "mid":
        return coeffs @ basis_values(coeffs.shape[-1], 0.5)
    raise ValueError(f"unknown functional {name!r}; choose e1, l2sq or mid")


FUNCTIONALS = ("e1", "l2sq", "mid")


def weak_error(g, ensA, ensB, paired: bool = False) -> tuple[float, float]:
    """``|E_A g - E_B g|`` with its standard error.

    ``g`` is a functional name (applied to coefficient arrays) or a callable.
    Independent ensembles use the pooled error ``sqrt(se_A^2 + se_B^2)``;
    ``paired=True`` treats ``ensA[i], ensB[i]`` as coupled draws and uses the
    standard error of the differences.
    """
    fn = (lambda c: functional_values(g, c)) if isinstance(g, str) else g
    a = np.asarray(fn(np.asarray(ensA)), dtype=float)
    b = np.asarray(fn(np.asarray(ensB)), dtype=float)
    if paired:
        if a.shape != b.shape:
            raise ValueError("paired ensembles must have equal size")
        m, se = mean_se(a - b)
        return float(abs(m)), float(se)
    ma, sa = mean_se(a)
    mb, sb = mean_se(b)
    return float(abs(ma - mb)), float(np.hypot(sa, sb))


def decay_verdict(gaps, ses, k: float = 3.0) -> dict:
    """Monotone-decrease reading used for weak-error trends.

    Consecutive estimates must decrease unless both lie within ``k`` standard
    errors of zero; the last gap must be below half the first or itself
    within ``k`` standard errors of zero.
    """
    gaps, ses = np.asarray(gaps), np.asarray(ses)
    noise = gaps <= k * ses
    mono = all(g1 < g0 or (noise[i] and noise[i + 1])
               for i, (g0, g1) in enumerate(zip(gaps[:-1], gaps[1:])))
    halved = bool(gaps[-1] < gaps[0] / 2 or noise[-1])
    return {"monotone": bool(mono), "halved": halved, "pass": bool(mono and halved)}


def semigroup_decay_error(coeffs: np.ndarray, times: np.ndarray) -> float:
    """Max deviation of a coefficient path from ``exp(-k^2 pi^2 t) a_k(0)``."""
    K = coeffs.shape[-1]
    ref = np.stack([semigroup_factors(K, t) for t in times]) * coeffs[0]
    return float(np.max(np.abs(coeffs - ref)))
