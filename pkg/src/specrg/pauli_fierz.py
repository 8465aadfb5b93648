"""Generalized Pauli-Fierz coupling functions and their infrared bounds.

The transformation replaces the vector-potential coupling by

    f_x(k)   = e^{-ikx} chi(k) |k|^{-1/2} phi(sqrt|k| e(k).x),
    chi_x(k) = e(k) e^{-ikx} chi(k) - grad_x f_x(k),

with a C^2 bounded mollifier phi, phi'(0) = 1.  The gradient is taken
analytically; the module reports the improved coupling chi_x, the
commutator kernel |k| f_x, the potential shift, and the smallest constants
in |chi_x(k)| <= C1 min(1, sqrt|k| <x>) and int |chi_x|^2 / |k| <= C2.

Geometry of the sampled slice: k along z, polarization e_1 along x, and
the particle coordinate x along e_1 (the maximal-coupling orientation);
radial integrals use the full k^2 volume weight.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np


class MollifierError(ValueError):
    pass


CHI_PRESETS: dict = {
    "gauss": lambda k: np.exp(-np.asarray(k) ** 2),
    "gauss_wide": lambda k: np.exp(-np.asarray(k) ** 2 / 4.0),
}

PHI_PRESETS: dict = {
    "tanh": (np.tanh, lambda z: 1.0 / np.cosh(z) ** 2),
    "linear": (lambda z: z, lambda z: np.ones_like(z)),
    "atan": (np.arctan, lambda z: 1.0 / (1.0 + z**2)),
}


@dataclass
class PFCouplingReport:
    x_grid: np.ndarray
    k_grid: np.ndarray
    f_values: np.ndarray          # f_{x,lambda}(k) on the slice
    chi_x_values: np.ndarray      # |chi_{lambda,x}(k)| (vector magnitude)
    g_kernel: np.ndarray          # |k| f_{x,lambda}(k): the commutator kernel
    potential_shift: np.ndarray   # (V_g - V)(x) / g^2
    c1: float                     # sup |chi| / min(1, sqrt|k| <x>)
    c2: float                     # sup_x int |chi|^2 / |k| d^3k
    phi_prime_at_zero: float


def _phi_pair(phi):
    if isinstance(phi, str):
        try:
            return PHI_PRESETS[phi]
        except KeyError:
            raise MollifierError(f"unknown mollifier preset {phi!r}") from None
    fn, deriv = phi
    return fn, deriv


def _chi_fn(chi) -> Callable:
    if isinstance(chi, str):
        try:
            return CHI_PRESETS[chi]
        except KeyError:
            raise MollifierError(f"unknown cutoff preset {chi!r}") from None
    return chi


def pauli_fierz_transform(chi, phi, x_grid, k_grid) -> PFCouplingReport:
    """Evaluate the transformed coupling functions and the infrared constants.

    chi: ultraviolet cutoff (preset name or callable of |k|); phi: mollifier
    (preset name or a (phi, phi') pair), C^2 bounded with phi'(0) = 1.
    """
    chi_fn = _chi_fn(chi)
    phi_fn, phi_prime = _phi_pair(phi)

    dz = 1e-7
    prime0 = float((phi_fn(dz) - phi_fn(-dz)) / (2 * dz))
    if abs(prime0 - 1.0) > 1e-6:
        raise MollifierError(f"mollifier slope at zero is {prime0}, must be 1")
    supplied = float(np.asarray(phi_prime(0.0)))
    if abs(supplied - 1.0) > 1e-10:
        raise MollifierError("phi'(0) != 1 within 1e-10")

    x = np.asarray(x_grid, dtype=float)
    k = np.asarray(k_grid, dtype=float)
    X, K = np.meshgrid(x, k, indexing="ij")
    z = np.sqrt(K) * X                     # sqrt|k| e(k).x on the slice
    chi_k = chi_fn(K)
    # k is orthogonal to x on the slice: the e^{-ikx} phase is unity
    f_vals = chi_k / np.sqrt(K) * phi_fn(z)

    # chi_x(k) = chi(k) [ e (1 - phi'(z)) + i (k/sqrt|k|) phi(z) ]
    comp_e = chi_k * (1.0 - phi_prime(z))
    comp_k = chi_k * np.sqrt(K) * phi_fn(z)
    chi_mag = np.sqrt(comp_e**2 + comp_k**2)

    g_kernel = K * f_vals

    # bound constants
    envelope = np.minimum(1.0, np.sqrt(K) * np.sqrt(1.0 + X**2))
    c1 = float(np.max(chi_mag / envelope))

    # int d^3k |chi|^2 / |k| along the radial slice, k^2 volume weight
    integrand = chi_mag**2 * K  # k^2 / k
    c2 = float(np.max(np.trapezoid(integrand, k, axis=1))) * 4 * np.pi

    # (V_g - V)/g^2 = 2 int |k| |f|^2 d^3k + int |chi|^2/|k| d^3k  (lambda summed;
    # the second polarization vanishes on this slice for odd phi)
    shift = (
        2.0 * np.trapezoid(K * np.abs(f_vals) ** 2 * K**2, k, axis=1)
        + np.trapezoid(integrand, k, axis=1)
    ) * 4 * np.pi

    return PFCouplingReport(
        x_grid=x, k_grid=k, f_values=f_vals, chi_x_values=chi_mag,
        g_kernel=g_kernel, potential_shift=shift, c1=c1, c2=c2,
        phi_prime_at_zero=supplied,
    )


def default_grids(n_x: int = 64, n_k: int = 64, x_max: float = 8.0, k_max: float = 4.0):
    """Geometric-ish grids resolving both the infrared and the far field."""
    x = np.linspace(0.0, x_max, n_x)
    k = np.geomspace(1e-4, k_max, n_k)
    return x, k
