"""Spectral simulation lab for the 1-D heat equation with multiplicative
trace-class noise in Stratonovich form."""
from importlib.metadata import PackageNotFoundError, version

try:
    __version__ = version("artifact")
except PackageNotFoundError:  # running from a source tree
    __version__ = "0.1.0"

from .config import ConfigError, ExperimentConfig
from .noise import NoiseField, TimeGrid, assemble_noise
from .solver import SolverConfig, integrate_ito_corrected, integrate_pathwise, vector_field
from .spectral import CovarianceSpec, Grid1D, SpectralField

__all__ = ["ConfigError", "ExperimentConfig", "NoiseField", "TimeGrid", "assemble_noise",
           "SolverConfig", "integrate_ito_corrected", "integrate_pathwise", "vector_field",
           "CovarianceSpec", "Grid1D", "SpectralField"]
