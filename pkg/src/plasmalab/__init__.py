"""Numerical laboratory for the 2D Coulomb plasma of Laughlin-type states."""

from plasmalab.model import (
    CompositeFactor,
    CorrelationFactor,
    EnergyBreakdown,
    OneBodyPolynomial,
    PairPolynomial,
    PlasmaParams,
    Potential,
    SingularConfigurationError,
    TrivialFactor,
    as_configuration,
    coulomb_kernel,
    energy,
    gradient,
    pair_factor_shift_constant,
    truncate_potential,
)

__all__ = [
    "CompositeFactor",
    "CorrelationFactor",
    "EnergyBreakdown",
    "OneBodyPolynomial",
    "PairPolynomial",
    "PlasmaParams",
    "Potential",
    "SingularConfigurationError",
    "TrivialFactor",
    "as_configuration",
    "coulomb_kernel",
    "energy",
    "gradient",
    "pair_factor_shift_constant",
    "truncate_potential",
]

__version__ = "0.1.0"
