"""Dirichlet sine basis on (0, 1) and the operators that act diagonally on it.

A field is stored by its coefficients on ``e_k(x) = sqrt(2) sin(k pi x)``,
``k = 1..K``.  Coefficient arrays may carry leading batch axes; the mode axis
is always the last one.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import fft as sfft


@dataclass(frozen=True)
class Grid1D:
    """Interior collocation nodes ``x_m = m / (M + 1)``, ``m = 1..M``."""

    M: int

    def __post_init__(self):
        if self.M < 1:
            raise ValueError(f"Grid1D needs M >= 1, got {self.M}")

    @property
    def nodes(self) -> np.ndarray:
        return np.arange(1, self.M + 1) / (self.M + 1)

    @property
    def spacing(self) -> float:
        return 1.0 / (self.M + 1)


@dataclass
class SpectralField:
    """Coefficients ``a_1..a_K`` of ``sum_k a_k e_k``."""

    coeffs: np.ndarray

    def __post_init__(self):
        self.coeffs = np.asarray(self.coeffs, dtype=float)
        if self.coeffs.ndim == 0 or self.coeffs.shape[-1] < 1:
            raise ValueError("SpectralField needs at least one mode")
        if not np.all(np.isfinite(self.coeffs)):
            raise ValueError("SpectralField coefficients must be finite")

    @property
    def K(self) -> int:
        return self.coeffs.shape[-1]

    @classmethod
    def mode(cls, k: int, K: int, amplitude: float = 1.0) -> "SpectralField":
        a = np.zeros(K)
        a[k - 1] = amplitude
        return cls(a)

    @classmethod
    def zeros(cls, K: int) -> "SpectralField":
        return cls(np.zeros(K))

    def __add__(self, other):
        return SpectralField(self.coeffs + _coeffs(other))

    def __sub__(self, other):
        return SpectralField(self.coeffs - _coeffs(other))

    def __mul__(self, scalar):
        return SpectralField(self.coeffs * scalar)

    __rmul__ = __mul__

    def norm(self) -> float:
        """L2(0,1) norm; exact by orthonormality."""
        return float(np.sqrt(np.sum(self.coeffs**2, axis=-1)))


def _coeffs(phi) -> np.ndarray:
    return phi.coeffs if isinstance(phi, SpectralField) else np.asarray(phi, dtype=float)


def _wrap(phi, a):
    return SpectralField(a) if isinstance(phi, SpectralField) else a


def eigenvalues(K: int) -> np.ndarray:
    """Eigenvalues ``k^2 pi^2`` of ``-Delta`` for ``k = 1..K``."""
    k = np.arange(1, K + 1)
    return (k * np.pi) ** 2


def basis_values(K: int, x) -> np.ndarray:
    """``e_k(x)`` for ``k = 1..K``; shape ``x.shape + (K,)``."""
    x = np.asarray(x, dtype=float)
    k = np.arange(1, K + 1)
    return np.sqrt(2.0) * np.sin(np.pi * x[..., None] * k)


# --- CovarianceSpec ---------------------------------------------------------

@dataclass(frozen=True)
class CovarianceSpec:
    """Eigenvalues of the noise covariance on the sine basis.

    ``family="power"`` gives ``lambda_k = k^-r``; ``family="resolvent"`` gives
    ``lambda_k = (1 + k^2 pi^2)^-r``, i.e. ``Q = (Id - Delta)^-r``.
    ``family="custom"`` takes the sequence from ``values`` (used for
    single-mode checks); its admissibility is only checked on the
    truncation.
    """

    family: str = "power"
    r: float = 3.0
    eta: float = 0.12
    K: int = 32
    values: tuple = field(default=())

    def __post_init__(self):
        if self.family not in ("power", "resolvent", "custom"):
            raise ValueError(f"unknown covariance family {self.family!r}")
        if not 0.0 < self.eta < 0.125:
            raise ValueError(f"eta must lie in (0, 1/8), got {self.eta}")
        if self.K < 1:
            raise ValueError("K must be >= 1")
        if self.family == "custom" and len(self.values) != self.K:
            raise ValueError("custom covariance needs exactly K values")

    @classmethod
    def single_mode(cls, K: int = 1, eta: float = 0.12, k: int = 1, lam: float = 1.0):
        vals = [0.0] * K
        vals[k - 1] = lam
        return cls(family="custom", eta=eta, K=K, values=tuple(vals))

    @property
    def lambdas(self) -> np.ndarray:
        k = np.arange(1, self.K + 1, dtype=float)
        if self.family == "power":
            return k ** (-self.r)
        if self.family == "resolvent":
            return (1.0 + (k * np.pi) ** 2) ** (-self.r)
        return np.asarray(self.values, dtype=float)

    @property
    def sqrt_lambdas(self) -> np.ndarray:
        return np.sqrt(self.lambdas)

    def is_admissible(self) -> bool:
        """Whether ``sum_k lambda_k k^(4 eta)`` converges for the full family."""
        if self.family == "power":
            return self.r - 4 * self.eta > 1
        if self.family == "resolvent":
            return 2 * self.r - 4 * self.eta > 1
        lam = self.lambdas
        return bool(np.all(lam >= 0) and np.all(np.isfinite(lam)))

    def check(self) -> "CovarianceSpec":
        if not self.is_admissible():
            raise ValueError(
                f"covariance {self.family} r={self.r} violates "
                f"sum lambda_k k^(4 eta) < inf at eta={self.eta}"
            )
        return self

    def weighted_trace(self) -> float:
        """Truncated ``sum_{k<=K} lambda_k k^(4 eta)``."""
        k = np.arange(1, self.K + 1)
        return float(np.sum(self.lambdas * k ** (4 * self.eta)))


# --- transforms ------------------------------------------------------------

def synthesize(phi, g: Grid1D) -> np.ndarray:
    """Values of ``phi`` at the nodes of ``g`` (batch axes preserved)."""
    a = _coeffs(phi)
    K = a.shape[-1]
    if g.M < K:
        raise ValueError(f"aliasing: grid has M={g.M} < K={K} modes")
    pad = [(0, 0)] * (a.ndim - 1) + [(0, g.M - K)]
    full = np.pad(a, pad)
    return np.sqrt(g.M + 1.0) * sfft.dst(full, type=1, norm="ortho", axis=-1)


def analyze(values, g: Grid1D, K: int | None = None):
    """Sine coefficients of nodal ``values``; exact for band-limited data.

    Returns a :class:`SpectralField` for 1-d input, a raw coefficient array
    for batched input.  ``K`` truncates to the first ``K`` modes.
    """
    v = np.asarray(values, dtype=float)
    if v.shape[-1] != g.M:
        raise ValueError(f"expected {g.M} nodal values, got {v.shape[-1]}")
    a = sfft.dst(v, type=1, norm="ortho", axis=-1) / np.sqrt(g.M + 1.0)
    if K is not None:
        a = a[..., :K]
    return SpectralField(a) if a.ndim == 1 else a


# --- diagonal operators -----------------------------------------------------

def semigroup_factors(K: int, t: float) -> np.ndarray:
    if t < 0:
        raise ValueError(f"semigroup time must be >= 0, got {t}")
    return np.exp(-eigenvalues(K) * t)


def semigroup_apply(phi, t: float):
    """Heat semigroup ``S_t``: ``a_k -> exp(-k^2 pi^2 t) a_k``."""
    a = _coeffs(phi)
    return _wrap(phi, a * semigroup_factors(a.shape[-1], t))


def fractional_apply(phi, alpha: float):
    """``(-Delta)^alpha``: ``a_k -> (k^2 pi^2)^alpha a_k``."""
    a = _coeffs(phi)
    return _wrap(phi, a * eigenvalues(a.shape[-1]) ** alpha)


def laplacian_semigroup_apply(phi, t: float):
    """``Delta S_t``; per mode ``-k^2 pi^2 exp(-k^2 pi^2 t)``."""
    a = _coeffs(phi)
    lam = eigenvalues(a.shape[-1])
    return _wrap(phi, -lam * np.exp(-lam * t) * a)


def yosida_semigroup_apply(phi, t: float, eps: float):
    """Semigroup of the Yosida approximation ``-Delta_eps``.

    ``-Delta_eps = (Id - (Id - eps Delta)^-1) / eps`` has eigenvalues
    ``mu / (1 + eps mu)`` with ``mu = k^2 pi^2``.
    """
    if eps <= 0:
        raise ValueError(f"Yosida parameter must be > 0, got {eps}")
    if t < 0:
        raise ValueError(f"semigroup time must be >= 0, got {t}")
    a = _coeffs(phi)
    mu = eigenvalues(a.shape[-1])
    return _wrap(phi, a * np.exp(-t * mu / (1.0 + eps * mu)))


# --- norms ------------------------------------------------------------------

def sobolev_norm(phi, alpha: float, p: int, g: Grid1D | None = None):
    """``||(-Delta)^alpha phi||_{L^p(0,1)}`` for even ``p``.

    ``p = 2`` is exact in coefficient space; larger ``p`` uses midpoint
    quadrature on the nodes of ``g`` (error ``O(M^-2)``).
    """
    if p < 2 or p % 2:
        raise ValueError(f"p must be an even integer >= 2, got {p}")
    a = fractional_apply(_coeffs(phi), alpha)
    if p == 2:
        return np.sqrt(np.sum(a**2, axis=-1))
    if g is None:
        raise ValueError("a collocation grid is required for p > 2")
    vals = synthesize(a, g)
    # midpoint cells of width h centred on the nodes; equal to the trapezoid
    # rule on [0, 1] since the field vanishes at both ends
    integral = np.sum(vals**p, axis=-1) * g.spacing
    return integral ** (1.0 / p)


def sup_norm(phi, g: Grid1D):
    """Grid supremum of ``|phi|`` over the collocation nodes."""
    return np.max(np.abs(synthesize(phi, g)), axis=-1)


def trace_function(q: CovarianceSpec, g: Grid1D) -> np.ndarray:
    """``P(x) = 1/2 sum_k lambda_k e_k(x)^2`` at the nodes of ``g``."""
    e = basis_values(q.K, g.nodes)
    return 0.5 * e**2 @ q.lambdas


def quadratic_variation_density(q: CovarianceSpec, g: Grid1D) -> np.ndarray:
    """``sum_k lambda_k e_k(x)^2 = 2 P(x)``, the rate of ``E[dW(x)^2] / dt``."""
    return 2.0 * trace_function(q, g)
