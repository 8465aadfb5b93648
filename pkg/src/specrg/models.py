"""Preset desk-scale models used by the test suite and the CLI."""

from __future__ import annotations

import numpy as np

from .fock import ModeSet, gauss_radial_modes
from .hamiltonian import (
    GHHamiltonian,
    ModelError,
    ParticleModel,
    build_nelson,
    identity_exp_ikx,
    pauli_x_exp_ikx,
)

KAPPA_PRESETS = {
    # |kappa(k)| <= min(1, k^mu) on (0, 1] for the stated mu.  The Gaussian
    # factors decay hard by k = 1 so that the truncation to the unit ball does
    # not break dilation analyticity at desk scale (contour-rotation endpoint
    # effects scale with kappa(1)^2).
    "sqrt": (lambda k: np.sqrt(k), 0.5),
    "sqrt_gauss": (lambda k: np.sqrt(k) * np.exp(-((k / 0.38) ** 2)), 0.5),
    "const": (lambda k: np.ones_like(k), 0.0),
    "linear_gauss": (lambda k: k * np.exp(-((k / 0.38) ** 2)), 1.0),
}


def kappa_preset(name: str):
    try:
        return KAPPA_PRESETS[name]
    except KeyError:
        raise ModelError(f"unknown kappa preset {name!r}") from None


def displacement_model(g: float, omega: float = 1.0, weight: float = None) -> GHHamiltonian:
    """Single-mode displacement model: omega a*a + g c (a + a*) with c = 1.

    The exact ground energy is -g^2 c^2 / omega; the default weight makes the
    quadrature leg coefficient sqrt(W/k) equal one, so c = 1 exactly.
    """
    if weight is None:
        weight = omega
    particle = ParticleModel(np.zeros((1, 1)), exp_ikx=identity_exp_ikx)
    modes = ModeSet([omega], [weight])
    return build_nelson(particle, lambda k: np.ones_like(k), g=g, mu=0.0, modes=modes)


def two_level_particle(gap: float, xi_x: float = 1.0) -> ParticleModel:
    """Two-level particle diag(0, gap) with exp(ikx) -> exp(i k xi sigma_x)."""
    return ParticleModel(np.diag([0.0, gap]), exp_ikx=pauli_x_exp_ikx(xi_x))


def two_level_nelson(
    g: float,
    gap: float = 0.5,
    xi_x: float = 1.0,
    kappa: str = "sqrt_gauss",
    n_modes: int = 12,
    mapping: str = "sqr",
) -> GHHamiltonian:
    """Two-level Nelson toy: the primary testbed for decimation and resonances."""
    kfn, mu = kappa_preset(kappa)
    modes = gauss_radial_modes(n_modes, mapping=mapping)
    return build_nelson(two_level_particle(gap, xi_x), kfn, g=g, mu=mu, modes=modes)


def random_two_level_instance(rng: np.random.Generator, n_modes: int = 2) -> GHHamiltonian:
    """Randomized self-adjoint 2-level x n-mode instance for the isospectrality suite."""
    gap = rng.uniform(0.6, 1.4)
    xi = rng.uniform(0.5, 1.5)
    g = rng.uniform(0.01, 0.05)
    momenta = np.sort(rng.uniform(0.3, 1.0, size=n_modes))
    while np.min(np.diff(momenta, prepend=0.0)) < 0.05:
        momenta = np.sort(rng.uniform(0.3, 1.0, size=n_modes))
    weights = rng.uniform(0.05, 0.3, size=n_modes)
    modes = ModeSet(momenta, weights)
    mu = 0.5
    kfn = lambda k: np.sqrt(k) * np.exp(-0.5 * k**2)
    return build_nelson(two_level_particle(gap, xi), kfn, g=g, mu=mu, modes=modes)
