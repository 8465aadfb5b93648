"""specrg: spectral renormalization engine for particle-field Hamiltonians.

Numerical realization of Feshbach-Schur decimation, Wick-ordered kernel
recombination, scaling maps, and the fixed-point eigenvalue equation for
desk-scale Nelson-type models, verified against brute-force diagonalization
on truncated Fock spaces.
"""

from .fock import (
    ConfigurationError,
    FockBasis,
    ModeSet,
    OperatorMatrix,
    build_basis,
    free_field_hamiltonian,
    gauss_radial_modes,
    ladder,
    number_operator,
)

__all__ = [
    "ConfigurationError",
    "FockBasis",
    "ModeSet",
    "OperatorMatrix",
    "build_basis",
    "free_field_hamiltonian",
    "gauss_radial_modes",
    "ladder",
    "number_operator",
]

__version__ = "0.1.0"
