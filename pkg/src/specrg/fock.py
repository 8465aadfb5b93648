"""Truncated bosonic Fock space over a finite set of radial field modes.

Modes are radial quadrature points k_i in (0, 1] with weights that absorb
the k^2 volume Jacobian (angular integral normalized into the coupling).
The dispersion is massless, omega(k) = |k|.  Basis states are occupation
vectors with bounded *total* occupation, matching the field-energy cutoffs
used by the decimation maps downstream.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np


class ConfigurationError(ValueError):
    """Raised when a mode set or basis request is structurally invalid."""


def gauss_radial_modes(n_modes: int, mapping: str = "sqr", k_max: float = 1.0) -> "ModeSet":
    """Gauss-Legendre radial grid on (0, k_max].

    mapping="sqr" substitutes k = k_max * u^2, which concentrates nodes near
    k = 0 where the coupling functions carry |k|^(-1/2) and |k|^mu factors.
    Weights are for integrals of the form  int_0^kmax f(k) k^2 dk.
    """
    u, wu = np.polynomial.legendre.leggauss(n_modes)
    u = 0.5 * (u + 1.0)
    wu = 0.5 * wu
    if mapping == "sqr":
        k = k_max * u**2
        jac = 2.0 * k_max * u
    elif mapping == "linear":
        k = k_max * u
        jac = k_max * np.ones_like(u)
    else:
        raise ConfigurationError(f"unknown grid mapping {mapping!r}")
    weights = wu * jac * k**2
    order = np.argsort(k)
    return ModeSet(momenta=k[order], weights=weights[order])


@dataclass(frozen=True)
class ModeSet:
    """Radial momentum grid with quadrature weights and massless dispersion."""

    momenta: np.ndarray
    weights: np.ndarray
    dispersion: np.ndarray = field(default=None)  # type: ignore[assignment]

    def __post_init__(self):
        momenta = np.asarray(self.momenta, dtype=float)
        weights = np.asarray(self.weights, dtype=float)
        if momenta.size == 0:
            raise ConfigurationError("mode set must contain at least one mode")
        if momenta.shape != weights.shape:
            raise ConfigurationError("momenta and weights must have equal length")
        if np.any(momenta <= 0.0):
            raise ConfigurationError("momenta must be strictly positive")
        if np.any(np.diff(momenta) <= 0.0):
            raise ConfigurationError("momenta must be strictly increasing")
        if np.any(weights <= 0.0):
            raise ConfigurationError("weights must be strictly positive")
        object.__setattr__(self, "momenta", momenta)
        object.__setattr__(self, "weights", weights)
        # massless law: omega(k) = |k|
        object.__setattr__(self, "dispersion", momenta.copy())

    @property
    def n_modes(self) -> int:
        return self.momenta.size

    def scaled(self, factor: float) -> "ModeSet":
        """Mode set with momenta scaled by `factor` (weights carry the k^3 Jacobian)."""
        return ModeSet(self.momenta * factor, self.weights * factor**3)

    def union(self, other: "ModeSet") -> "ModeSet":
        """Merge two grids; coincident momenta are not merged (kept distinct grids invalid)."""
        mom = np.concatenate([self.momenta, other.momenta])
        wts = np.concatenate([self.weights, other.weights])
        order = np.argsort(mom)
        return ModeSet(mom[order], wts[order])


def _enumerate_occupations(n_modes: int, n_max: int):
    """All occupation vectors with total <= n_max, graded-lex ordered, vacuum first."""
    states = []

    def extend(prefix, remaining, budget):
        if remaining == 0:
            states.append(tuple(prefix))
            return
        for occ in range(budget + 1):
            extend(prefix + [occ], remaining - 1, budget - occ)

    for total in range(n_max + 1):
        here = []

        def rec(prefix, remaining, left):
            if remaining == 1:
                here.append(tuple(prefix + [left]))
                return
            for occ in range(left + 1):
                rec(prefix + [occ], remaining - 1, left - occ)

        rec([], n_modes, total)
        states.extend(sorted(here))
    return states


class FockBasis:
    """Occupation-number basis with total occupation <= n_max."""

    def __init__(self, modes: ModeSet, n_max: int):
        if n_max < 0:
            raise ConfigurationError("n_max must be >= 0")
        self.modes = modes
        self.n_max = n_max
        self.states = _enumerate_occupations(modes.n_modes, n_max)
        self.dim = len(self.states)
        self.index = {s: i for i, s in enumerate(self.states)}
        occ = np.array(self.states, dtype=np.int64).reshape(self.dim, modes.n_modes)
        self._occ = occ
        self.field_energies = occ @ modes.dispersion
        self.totals = occ.sum(axis=1)
        self._ladder_cache: dict = {}

    @property
    def occupations(self) -> np.ndarray:
        return self._occ

    def vacuum_index(self) -> int:
        return 0

    def state_vector(self, occupation) -> np.ndarray:
        v = np.zeros(self.dim, dtype=complex)
        v[self.index[tuple(occupation)]] = 1.0
        return v

    def annihilator(self, mode_index: int) -> np.ndarray:
        """Dense matrix of a(k_i) with the canonical sqrt(n) factors."""
        if not 0 <= mode_index < self.modes.n_modes:
            raise ConfigurationError(f"mode index {mode_index} out of range")
        key = ("a", mode_index)
        if key not in self._ladder_cache:
            a = np.zeros((self.dim, self.dim), dtype=complex)
            for col, s in enumerate(self.states):
                n = s[mode_index]
                if n > 0:
                    t = list(s)
                    t[mode_index] = n - 1
                    a[self.index[tuple(t)], col] = np.sqrt(n)
            self._ladder_cache[key] = a
        return self._ladder_cache[key]

    def creator(self, mode_index: int) -> np.ndarray:
        """a*(k_i); exactly the conjugate transpose of the annihilator."""
        key = ("adag", mode_index)
        if key not in self._ladder_cache:
            self._ladder_cache[key] = self.annihilator(mode_index).conj().T.copy()
        return self._ladder_cache[key]


@dataclass(frozen=True)
class OperatorMatrix:
    """Dense complex matrix acting on a FockBasis (possibly tensored with a particle factor)."""

    entries: np.ndarray

    def __post_init__(self):
        entries = np.asarray(self.entries, dtype=complex)
        if entries.ndim != 2 or entries.shape[0] != entries.shape[1]:
            raise ConfigurationError("operator entries must form a square matrix")
        object.__setattr__(self, "entries", entries)

    @property
    def dim(self) -> int:
        return self.entries.shape[0]


def build_basis(modes: ModeSet, n_max: int) -> FockBasis:
    """Enumerate the truncated Fock basis (vacuum at index 0)."""
    return FockBasis(modes, n_max)


def ladder(basis: FockBasis, mode_index: int, kind: str) -> OperatorMatrix:
    """Matrix of a(k_i) (kind='annihilate') or a*(k_i) (kind='create')."""
    if kind == "annihilate":
        return OperatorMatrix(basis.annihilator(mode_index))
    if kind == "create":
        return OperatorMatrix(basis.creator(mode_index))
    raise ConfigurationError(f"ladder kind must be 'annihilate' or 'create', got {kind!r}")


def free_field_hamiltonian(basis: FockBasis) -> OperatorMatrix:
    """H_f = sum_i n_i omega(k_i), diagonal in the occupation basis."""
    return OperatorMatrix(np.diag(basis.field_energies.astype(complex)))


def number_operator(basis: FockBasis) -> OperatorMatrix:
    """Total occupation, diagonal in the occupation basis."""
    return OperatorMatrix(np.diag(basis.totals.astype(complex)))
