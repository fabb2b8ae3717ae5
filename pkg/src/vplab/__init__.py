"""Numerical laboratory for the weakly collisional Vlasov-Poisson-Landau system."""

from .grids import (
    ModeField,
    VelocityGrid,
    WeightSpec,
    build_grid,
    dissipation_norm,
    maxwellian,
    mode_field,
    project_null,
    sqrt_maxwellian,
    velocity_average,
    weighted_norm,
)

__all__ = [
    "ModeField",
    "VelocityGrid",
    "WeightSpec",
    "build_grid",
    "dissipation_norm",
    "maxwellian",
    "mode_field",
    "project_null",
    "sqrt_maxwellian",
    "velocity_average",
    "weighted_norm",
]

__version__ = "0.1.0"
