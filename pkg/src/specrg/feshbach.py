"""Smooth Feshbach-Schur decimation on assembled particle-field matrices.

The almost-projection pair pi = P_pj (x) chi_{H_f <= rho} and
pibar = sqrt(1 - pi^2) splits the space smoothly; the map

    F(H - lam) = H_0 - lam + pi I pi - pi I pibar (H_pibar - lam)^(-1) pibar I pi

is isospectral to H - lam and is computed here both through the Neumann
series in pibar^2 (H_0 - lam)^(-1) I (the construction the kernel pipeline
mirrors term by term) and through a dense block inverse used as a
cross-check.  All operators act on the particle eigenframe internally,
where H_0 is diagonal, and are returned in the original frame.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .fock import FockBasis
from .hamiltonian import GHHamiltonian, assemble_gh
from .kernels import chi_rho


class NoConvergenceError(RuntimeError):
    """Neumann series ratio >= 1: rho too small or g too large for decimation."""


class DecimationError(ValueError):
    pass


@dataclass
class Decimation:
    """Almost-projections and assembled pieces for one (j, rho) decimation."""

    j: int
    rho: float
    basis: FockBasis
    hamiltonian: GHHamiltonian
    pi: np.ndarray
    pibar: np.ndarray
    h_total: np.ndarray
    h0: np.ndarray
    ig: np.ndarray
    # eigenframe data: full-space transform and diagonal of H_0
    v_full: np.ndarray
    vinv_full: np.ndarray
    h0_diag: np.ndarray
    pi_diag: np.ndarray
    pibar_sq_diag: np.ndarray

    @property
    def level(self):
        return self._level

    @property
    def rank(self) -> int:
        return self._level.rank


def build_decimation(h: GHHamiltonian, basis: FockBasis, j: int, rho: float) -> Decimation:
    """Assemble pi, pibar and the split H = H_0 + I_g for level j at scale rho.

    Degenerate levels are supported: pi carries the full spectral projection.
    """
    if not (0 < rho <= 0.5):
        raise DecimationError("decimation scale must satisfy 0 < rho <= 1/2")
    if h.field_scale != 1.0:
        raise DecimationError(
            "decimation needs real field energies; use GHHamiltonian.normalized()"
        )
    particle = h.particle_model_effective()
    if j >= len(particle.levels):
        raise DecimationError(f"level index {j} out of range")
    level = particle.levels[j]
    dim_p = particle.dim
    dim_f = basis.dim

    energies = basis.field_energies
    chi = chi_rho(energies, rho)
    chibar_sq = 1.0 - chi**2

    proj = level.projector
    eye_p = np.eye(dim_p)
    chi_diag = np.diag(chi.astype(complex))
    pi = np.kron(proj, chi_diag)
    # pibar^2 = 1 - pi^2 exactly; pibar = Pbar (x) 1 + P (x) sqrt(1 - chi^2)
    pibar = np.kron(eye_p - proj, np.eye(dim_f)) + np.kron(
        proj, np.diag(np.sqrt(chibar_sq).astype(complex))
    )

    h_total = assemble_gh(h, basis).entries
    hp = h.particle_matrix()
    h0 = np.kron(hp, np.eye(dim_f)) + np.kron(eye_p, np.diag(energies.astype(complex)))
    ig = h_total - h0

    vp = particle._vecs
    vpinv = particle._vinv
    v_full = np.kron(vp, np.eye(dim_f))
    vinv_full = np.kron(vpinv, np.eye(dim_f))
    h0_diag = (particle.eigenvalues[:, None] + energies[None, :]).reshape(-1)
    on_level = np.zeros(dim_p)
    on_level[list(level.indices)] = 1.0
    pi_diag = (on_level[:, None] * chi[None, :]).reshape(-1)
    pibar_sq_diag = 1.0 - pi_diag**2

    dec = Decimation(
        j=j, rho=rho, basis=basis, hamiltonian=h,
        pi=pi, pibar=pibar, h_total=h_total, h0=h0, ig=ig,
        v_full=v_full, vinv_full=vinv_full, h0_diag=h0_diag,
        pi_diag=pi_diag, pibar_sq_diag=pibar_sq_diag,
    )
    dec._level = level
    return dec


@dataclass
class PibarInverse:
    """K = pibar (H_pibar - lam)^(-1) pibar with convergence diagnostics."""

    matrix: np.ndarray
    l_used: int
    tail_bound: float
    ratio: float
    norm: float
    rho_bound: float  # the 4 / rho reference bound


def _rbar(dec: Decimation, lam: complex) -> np.ndarray:
    """pibar^2 (H_0 - lam)^(-1) in the original frame (diagonal in eigenframe)."""
    den = dec.h0_diag - lam
    num = dec.pibar_sq_diag
    small = np.abs(den) < 1e-14
    if np.any(small & (num > 1e-14)):
        raise NoConvergenceError("H_0 - lambda singular on the pibar support")
    vals = np.where(small, 0.0, num / np.where(small, 1.0, den))
    return dec.v_full @ (vals[:, None] * dec.vinv_full)


def invert_h_pibar(dec: Decimation, lam: complex, l_max: int = 40, tol: float = 1e-12,
                   dense: bool = False) -> PibarInverse:
    """Neumann series for pibar (H_pibar - lam)^(-1) pibar.

    Stops once the geometric tail estimate ratio^(L+1)/(1-ratio) * ||Rbar||
    falls below tol; raises when the contraction ratio reaches one.  With
    dense=True the series is replaced by a dense inverse of the pibar-block
    (the validation switch).
    """
    rbar = _rbar(dec, lam)
    if dense:
        k = _dense_pibar_inverse(dec, lam)
        norm = float(np.linalg.norm(k, 2))
        return PibarInverse(matrix=k, l_used=-1, tail_bound=0.0, ratio=0.0,
                            norm=norm, rho_bound=4.0 / dec.rho)
    step = dec.ig @ rbar
    ratio = float(np.linalg.norm(step, 2))
    if ratio >= 1.0:
        raise NoConvergenceError(
            f"Neumann ratio {ratio:.3f} >= 1 (needs g << rho <= kappa_j)"
        )
    rbar_norm = float(np.linalg.norm(rbar, 2))
    total = rbar.copy()
    term = rbar.copy()
    l_used = 0
    tail = rbar_norm * ratio / (1.0 - ratio)
    for l in range(1, l_max + 1):
        term = -(term @ step)
        total += term
        l_used = l
        tail = rbar_norm * ratio ** (l + 1) / (1.0 - ratio)
        if tail < tol:
            break
    norm = float(np.linalg.norm(total, 2))
    return PibarInverse(matrix=total, l_used=l_used, tail_bound=tail, ratio=ratio,
                        norm=norm, rho_bound=4.0 / dec.rho)


def _dense_pibar_inverse(dec: Decimation, lam: complex) -> np.ndarray:
    """pibar (H_pibar - lam)^(-1) pibar via a dense inverse on the pibar support."""
    support = dec.pibar_sq_diag > 1e-14
    pibar_t = dec.vinv_full @ dec.pibar @ dec.v_full
    h_pibar_t = (
        np.diag(dec.h0_diag.astype(complex))
        + pibar_t @ (dec.vinv_full @ dec.ig @ dec.v_full) @ pibar_t
    )
    idx = np.where(support)[0]
    block = h_pibar_t[np.ix_(idx, idx)] - lam * np.eye(idx.size)
    inv_block = np.linalg.inv(block)
    k_t = np.zeros_like(h_pibar_t)
    k_t[np.ix_(idx, idx)] = inv_block
    k_t = pibar_t @ k_t @ pibar_t
    return dec.v_full @ k_t @ dec.vinv_full


def feshbach_neumann_truncated(dec: Decimation, lam: complex, l_max: int) -> np.ndarray:
    """F(H - lam) summed to exactly l_max interaction orders:

        H_0 - lam + sum_{L=1..l_max} (-1)^(L-1) pi I (Rbar I)^(L-1) pi.

    Term-for-term the matrix counterpart of the Wick-ordered kernel expansion,
    used for order-matched pipeline comparisons.
    """
    rbar = _rbar(dec, lam)
    n = dec.h0.shape[0]
    f = dec.h0 - lam * np.eye(n)
    left = dec.pi @ dec.ig
    tail = dec.pi.copy()
    for ell in range(1, l_max + 1):
        f += (-1) ** (ell - 1) * left @ tail
        left = left @ rbar @ dec.ig
    return f


@dataclass
class FeshbachResult:
    matrix: np.ndarray
    l_used: int
    tail_bound: float
    pibar_inverse: PibarInverse


def feshbach_map(dec: Decimation, lam: complex, l_max: int = 40, tol: float = 1e-12,
                 dense: bool = False) -> FeshbachResult:
    """F(H - lam) = H_0 - lam + pi I pi - pi I K I pi with K from invert_h_pibar."""
    k = invert_h_pibar(dec, lam, l_max=l_max, tol=tol, dense=dense)
    ipi = dec.ig @ dec.pi
    pii = dec.pi @ dec.ig
    f = (
        dec.h0
        - lam * np.eye(dec.h0.shape[0])
        + dec.pi @ ipi
        - pii @ k.matrix @ ipi
    )
    return FeshbachResult(matrix=f, l_used=k.l_used, tail_bound=k.tail_bound,
                          pibar_inverse=k)


def q_pi(dec: Decimation, lam: complex, which: str = "plain", l_max: int = 40,
         tol: float = 1e-12, dense: bool = False) -> np.ndarray:
    """Eigenvector transport maps Q = pi - K I pi and Q# = pi - pi I K."""
    k = invert_h_pibar(dec, lam, l_max=l_max, tol=tol, dense=dense).matrix
    if which == "plain":
        return dec.pi - k @ dec.ig @ dec.pi
    if which == "sharp":
        return dec.pi - dec.pi @ dec.ig @ k
    raise DecimationError("which must be 'plain' or 'sharp'")


def resolvent_identity_check(dec: Decimation, lam: complex, dense: bool = True) -> float:
    """|| (H-lam)^(-1) - [Q F^(-1) Q# + pibar (H_pibar-lam)^(-1) pibar] ||.

    Raises LinAlgError when lam sits in the spectrum of H or F (singular F
    signals lam in the spectrum).
    """
    n = dec.h_total.shape[0]
    res = feshbach_map(dec, lam, dense=dense)
    k = res.pibar_inverse.matrix
    q = dec.pi - k @ dec.ig @ dec.pi
    qs = dec.pi - dec.pi @ dec.ig @ k
    finv = np.linalg.inv(res.matrix)
    lhs = np.linalg.inv(dec.h_total - lam * np.eye(n))
    rhs = q @ finv @ qs + k
    return float(np.linalg.norm(lhs - rhs, 2))


def feshbach_inverse_identity_residual(dec: Decimation, lam: complex) -> float:
    """|| F^(-1) - [pi (H-lam)^(-1) pi + pibar^2 (H_0-lam)^(-1)] ||."""
    n = dec.h_total.shape[0]
    res = feshbach_map(dec, lam, dense=True)
    finv = np.linalg.inv(res.matrix)
    hinv = np.linalg.inv(dec.h_total - lam * np.eye(n))
    rhs = dec.pi @ hinv @ dec.pi + _rbar(dec, lam)
    return float(np.linalg.norm(finv - rhs, 2))


def kernel_dimension(matrix: np.ndarray, tol: float = 1e-8) -> int:
    """Numerical kernel dimension via singular values below tol * scale."""
    s = np.linalg.svd(matrix, compute_uv=False)
    scale = max(1.0, float(s[0]))
    return int(np.sum(s < tol * scale))


def kernel_vectors(matrix: np.ndarray, tol: float = 1e-8) -> np.ndarray:
    """Orthonormal numerical kernel basis (columns)."""
    u, s, vh = np.linalg.svd(matrix)
    scale = max(1.0, float(s[0]))
    keep = s < tol * scale
    return vh.conj().T[:, keep]
