"""Experiment configuration: JSON in, validated dataclass out."""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from .noise import TimeGrid
from .solver import VECTOR_FIELDS, SolverConfig
from .spectral import CovarianceSpec, Grid1D, SpectralField


class ConfigError(ValueError):
    """Invalid experiment configuration (CLI exit code 2)."""


@dataclass
class ExperimentConfig:
    tag: str = "default"
    cov_family: str = "power"
    r: float = 3.0
    eta: float = 0.12
    gamma: float = 0.55
    K: int = 32
    M: int = 128
    N: int = 1024
    T: float = 0.25
    vf: str = "sin"
    psi: list = field(default_factory=lambda: [1.0])
    correction_factor: float = 0.5
    n_list: list = field(default_factory=lambda: [4, 8, 16, 32, 64])
    mc_count: int = 2000
    paths: int = 16
    seed: int = 20240601
    p: int = 2
    eps: float = 0.5
    nu: float | None = None
    substeps: int = 1
    save_every: int = 64
    fine_N: int = 4096
    j_min: int = 3
    j_max: int | None = None
    max_starts: int = 32
    quad_steps: list = field(default_factory=lambda: [32, 64, 128, 256])
    chen_N: int = 64
    lattice: int = 4
    eval_points: int = 128
    functionals: list = field(default_factory=lambda: ["e1", "l2sq"])
    chunk: int = 250
    threads: int = 1

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        known = {f.name for f in fields(cls)}
        extra = set(d) - known
        if extra:
            raise ConfigError(f"unknown config keys: {sorted(extra)}")
        cfg = cls(**d)
        cfg.validate()
        return cfg

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        try:
            d = json.loads(Path(path).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        if not isinstance(d, dict):
            raise ConfigError("config root must be a JSON object")
        return cls.from_dict(d)

    def replace(self, **kw) -> "ExperimentConfig":
        d = asdict(self)
        d.update(kw)
        return ExperimentConfig.from_dict(d)

    def to_dict(self) -> dict:
        return asdict(self)

    # --- validation -------------------------------------------------------

    def validate(self) -> "ExperimentConfig":
        def need(cond, msg):
            if not cond:
                raise ConfigError(msg)

        need(0 < self.eta < 0.125, f"eta={self.eta} must lie in (0, 1/8)")
        need(0.5 < self.gamma < 0.5 + self.eta,
             f"gamma={self.gamma} must lie in (1/2, 1/2 + eta) = (0.5, {0.5 + self.eta:g})")
        need(self.K >= 1 and self.M >= 1 and self.N >= 1, "K, M and N must be >= 1")
        need(4 * self.K <= self.M, f"K={self.K} must satisfy K <= M/4 (M={self.M})")
        need(self.T > 0, "T must be > 0")
        need(self.vf in VECTOR_FIELDS, f"vf={self.vf!r} not in {sorted(VECTOR_FIELDS)}")
        need(self.mc_count >= 1 and self.paths >= 1 and self.chunk >= 1,
             "mc_count, paths and chunk must be >= 1")
        need(all(isinstance(n, int) and n >= 1 for n in self.n_list),
             "n_list entries must be integers >= 1")
        need(self.correction_factor in (0, 0.5, 1), "correction_factor must be 0, 0.5 or 1")
        need(len(self.psi) <= self.K, "psi has more coefficients than K")
        need(all(np.isfinite(self.psi)), "psi must be finite")
        need(self.threads >= 1, "threads must be >= 1")
        need(self.p >= 1, "p must be >= 1")
        need(0 < self.eps < 1, "eps must lie in (0, 1)")
        need(self.nu is None or 0 < self.nu <= 0.25, f"nu={self.nu} must lie in (0, 1/4]")
        need(self.substeps >= 1 and self.save_every >= 1, "substeps and save_every must be >= 1")
        need(all(q >= 8 for q in self.quad_steps), "quad_steps entries must be >= 8")
        need(0 <= self.seed < 2**64, "seed must be an unsigned 64-bit integer")
        try:
            self.covariance().check()
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        return self

    # --- builders ---------------------------------------------------------

    def covariance(self) -> CovarianceSpec:
        try:
            return CovarianceSpec(self.cov_family, self.r, self.eta, self.K)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc

    def nu_for(self, kind: str) -> float:
        """Coupling rate exponent: 1/4 for Donsker, 0.2 for Kac-Stroock, whose
        admissible range (0, 1/4) is open."""
        if kind in ("kac", "kac-stroock"):
            nu = 0.2 if self.nu is None else self.nu
            if not nu < 0.25:
                raise ConfigError(f"nu={nu} must lie in the open interval (0, 1/4) for Kac-Stroock")
            return nu
        return 0.25 if self.nu is None else self.nu

    def grid1d(self) -> Grid1D:
        return Grid1D(self.M)

    def time_grid(self, N: int | None = None) -> TimeGrid:
        return TimeGrid(self.T, N or self.N)

    def initial(self) -> SpectralField:
        a = np.zeros(self.K)
        a[: len(self.psi)] = self.psi
        return SpectralField(a)

    def solver(self, N: int | None = None, c: float | None = None) -> SolverConfig:
        return SolverConfig(self.covariance(), self.grid1d(), self.time_grid(N), self.initial(),
                            self.gamma,
                            self.correction_factor if c is None else c, self.substeps)
