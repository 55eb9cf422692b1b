"""Pseudospectral lab for the log-regularized generalized SQG equation."""

__version__ = "0.1.0"

from .spectral import (Grid, MultiplierSymbol, SpectralField, apply_multiplier, make_grid, pointwise_product,
                       sobolev_norm, velocity_from_scalar)
from .littlewood_paley import DyadicPartition, besov_norm, build_partition
from .commutators import (ConstantReport, LemmaParams, commutator_bracket, convexity_integral, estimate_constant,
                          localized_commutator, trilinear_L)
from .evolution import ClawProblem, SimConfig, Trajectory, div_flux, flux, run_claw, run_gsqg

__all__ = [
    "Grid", "MultiplierSymbol", "SpectralField", "apply_multiplier", "make_grid", "pointwise_product",
    "sobolev_norm", "velocity_from_scalar", "DyadicPartition", "besov_norm", "build_partition",
    "ConstantReport", "LemmaParams", "commutator_bracket", "convexity_integral", "estimate_constant",
    "localized_commutator", "trilinear_L", "ClawProblem", "SimConfig", "Trajectory", "div_flux", "flux",
    "run_claw", "run_gsqg",
]
