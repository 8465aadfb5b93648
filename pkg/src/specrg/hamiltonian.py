"""Generalized particle-field Hamiltonians and their matrix assembly.

A model is a finite-dimensional particle matrix plus operator-valued
coupling functions w_{m,n}[k] (dim x dim matrices per momentum tuple),
quadratured against the radial mode grid with the |k|^(-1/2) measure legs.
The continuum particle operator enters the analysis only through its
eigenvalues, projections and resolvent bounds, all of which survive at
finite dimension.
"""

from __future__ import annotations

import cmath
from dataclasses import dataclass, field, replace
from typing import Callable, Optional

import numpy as np
import scipy.linalg

from .fock import FockBasis, ModeSet, OperatorMatrix, free_field_hamiltonian
from .kernels import DILATION_STRIP, DomainError, KernelSequence, smooth_cutoff_chi1


class ModelError(ValueError):
    """Model data violates a structural requirement."""


class GridMismatchError(ValueError):
    """Operator and basis are discretized on different grids."""


# -- particle sector ----------------------------------------------------

@dataclass(frozen=True)
class Level:
    """One (possibly degenerate) particle eigenvalue with its spectral data."""

    value: complex
    indices: tuple
    right: np.ndarray  # dim x rank eigenvector columns
    left: np.ndarray   # rank x dim rows of the inverse eigenbasis

    @property
    def rank(self) -> int:
        return len(self.indices)

    @property
    def projector(self) -> np.ndarray:
        return self.right @ self.left


@dataclass(frozen=True)
class ParticleModel:
    """Finite-dimensional particle Hamiltonian with its eigendecomposition.

    `family` optionally supplies the dilated matrix family theta -> H_p(theta)
    in closed form; the default family is constant (finite toys carry the
    deformation entirely in the field and coupling factors).
    `exp_ikx` supplies matrix elements of e^{ikx} as an analytic function of
    the radial momentum (identity for structureless particles).
    `delta_weights` is the model-supplied bounded substitute for the
    e^{+-delta<x>} conjugation weights entering the coupling norms.
    """

    h_p: np.ndarray
    family: Optional[Callable] = None
    exp_ikx: Optional[Callable] = None
    kappa_par: complex = 0.5
    delta_weights: tuple = ()
    degeneracy_tol: float = 1e-8

    def __post_init__(self):
        h = np.asarray(self.h_p, dtype=complex)
        if h.ndim != 2 or h.shape[0] != h.shape[1]:
            raise ModelError("particle Hamiltonian must be a square matrix")
        object.__setattr__(self, "h_p", h)
        hermitian = np.allclose(h, h.conj().T, atol=1e-13)
        if hermitian:
            vals, vecs = np.linalg.eigh(h)
            vinv = vecs.conj().T
        else:
            vals, vecs = scipy.linalg.eig(h)
            vinv = np.linalg.inv(vecs)
        order = np.argsort(vals.real, kind="stable")
        vals, vecs, vinv = vals[order], vecs[:, order], vinv[order, :]
        recon = (vecs * vals) @ vinv
        scale = max(1.0, np.linalg.norm(h))
        if np.linalg.norm(recon - h) > 1e-12 * scale:
            raise ModelError("eigendecomposition fails to reproduce the particle matrix")
        object.__setattr__(self, "_vals", vals)
        object.__setattr__(self, "_vecs", vecs)
        object.__setattr__(self, "_vinv", vinv)
        object.__setattr__(self, "_hermitian", hermitian)
        levels = []
        used = 0
        while used < vals.size:
            hi = used + 1
            while hi < vals.size and abs(vals[hi] - vals[used]) <= self.degeneracy_tol:
                hi += 1
            idx = tuple(range(used, hi))
            levels.append(
                Level(
                    value=complex(np.mean(vals[used:hi])),
                    indices=idx,
                    right=vecs[:, used:hi],
                    left=vinv[used:hi, :],
                )
            )
            used = hi
        object.__setattr__(self, "levels", tuple(levels))

    @property
    def dim(self) -> int:
        return self.h_p.shape[0]

    @property
    def eigenvalues(self) -> np.ndarray:
        return self._vals

    @property
    def is_hermitian(self) -> bool:
        return self._hermitian

    def level(self, j: int) -> Level:
        return self.levels[j]

    def resolvent_fn(self, shift, lam, chi_sq_j: Optional[np.ndarray] = None, j: int = 0):
        """(H_p + shift - lam)^(-1) over a broadcast array of real shifts,
        optionally damping the level-j contribution by (1 - chi_sq_j).

        On the damped level the numerator vanishes identically where the
        denominator can (the cutoff plateau covers the pole), so that
        coefficient is set to zero there.  A vanishing denominator on an
        undamped level means lam left the working region: that is an error.

        Returns an array of shape shift.shape + (dim, dim).
        """
        shift = np.asarray(shift)
        damped = set(self.levels[j].indices) if chi_sq_j is not None else set()
        damp = None if chi_sq_j is None else 1.0 - np.asarray(chi_sq_j)
        coeffs = np.empty(shift.shape + (self.dim,), dtype=complex)
        for i, lam_i in enumerate(self._vals):
            den = lam_i + shift - lam
            if i in damped:
                dead = np.abs(damp) < 1e-300
                coeffs[..., i] = np.where(dead, 0.0, damp / np.where(dead, 1.0, den))
            else:
                if np.any(np.abs(den) < 1e-12):
                    raise ModelError(
                        "resolvent pole crossed on an undamped level: spectral "
                        "parameter outside the working region"
                    )
                coeffs[..., i] = 1.0 / den
        return np.einsum("ai,...i,ib->...ab", self._vecs, coeffs, self._vinv)

    def at_theta(self, theta: complex) -> np.ndarray:
        if self.family is None:
            return self.h_p
        return np.asarray(self.family(theta), dtype=complex)


def identity_exp_ikx(k):
    """e^{ikx} matrix elements for a structureless (dim = 1) particle."""
    k = np.asarray(k)
    return np.ones(k.shape + (1, 1), dtype=complex)


def pauli_x_exp_ikx(xi: float, dim: int = 2):
    """e^{ikx} surrogate exp(i k xi sigma_x): analytic, unitary for real k."""
    sx = np.zeros((dim, dim), dtype=complex)
    sx[0, 1] = sx[1, 0] = 1.0

    def fn(k):
        k = np.asarray(k, dtype=complex)
        c = np.cos(k * xi)
        s = np.sin(k * xi)
        eye = np.eye(dim, dtype=complex)
        return c[..., None, None] * eye + 1j * s[..., None, None] * sx

    return fn


# -- interactions -------------------------------------------------------

@dataclass(frozen=True)
class CouplingTerm:
    """Operator-valued coupling w_{m,n}[k]: fn(theta, *k) -> (..., dim, dim)."""

    m: int
    n: int
    fn: Callable

    def eval(self, theta, *k_args) -> np.ndarray:
        return np.asarray(self.fn(theta, *k_args), dtype=complex)


@dataclass(frozen=True)
class GHInteraction:
    """Coupling terms g * sum over 1 <= m+n <= 2 of W_{m,n}."""

    terms: dict
    g: float
    mu: float

    def __post_init__(self):
        for (m, n), term in self.terms.items():
            if not 1 <= m + n <= 2:
                raise ModelError("interaction terms must have 1 <= m+n <= 2")
            if (term.m, term.n) != (m, n):
                raise ModelError("coupling term registered under wrong key")
        if self.g < 0:
            raise ModelError("coupling constant g must be nonnegative")


@dataclass(frozen=True)
class GHHamiltonian:
    """H = H_p (x) 1 + field_scale * 1 (x) H_f + g * sum W_{m,n} on its mode grid."""

    particle: ParticleModel
    interaction: GHInteraction
    modes: ModeSet
    theta: complex = 0.0
    field_scale: complex = 1.0
    prefactor: complex = 1.0  # scalar applied to particle and couplings (e^theta form)

    @property
    def g(self) -> float:
        return self.interaction.g

    @property
    def mu(self) -> float:
        return self.interaction.mu

    def particle_matrix(self) -> np.ndarray:
        return self.prefactor * self.particle.at_theta(self.theta)

    def coupling_values(self, mn, *k_args) -> np.ndarray:
        return self.prefactor * self.interaction.terms[mn].eval(self.theta, *k_args)

    def particle_model_effective(self) -> ParticleModel:
        """ParticleModel for the matrix actually entering this Hamiltonian."""
        if self.theta == 0 and self.prefactor == 1.0:
            return self.particle
        return ParticleModel(
            self.particle_matrix(),
            exp_ikx=self.particle.exp_ikx,
            kappa_par=self.particle.kappa_par,
            delta_weights=self.particle.delta_weights,
            degeneracy_tol=self.particle.degeneracy_tol,
        )

    def normalized(self) -> "GHHamiltonian":
        """e^theta * H: real field energies, deformation moved to particle/couplings."""
        if self.field_scale == 1.0:
            return self
        scale = 1.0 / self.field_scale
        return replace(self, field_scale=1.0, prefactor=self.prefactor * scale)


def build_nelson(particle: ParticleModel, kappa_fn, g, mu, modes: ModeSet,
                 kappa_bound: float = 1.0) -> GHHamiltonian:
    """Nelson-type model: linear coupling kappa(k) e^{-+ikx} with |kappa| <= c min(1, k^mu).

    The interaction has only the (1,0) and (0,1) terms; the weighted square
    integrability sum(W_i kappa^2 / k_i) is evaluated on the grid and must be
    finite.
    """
    if particle.exp_ikx is None:
        raise ModelError("particle model must supply e^{ikx} matrix elements")
    k = modes.momenta
    kap = np.asarray(kappa_fn(k.astype(complex)))
    bound = kappa_bound * np.minimum(1.0, k**mu)
    if np.any(np.abs(kap) > bound * (1 + 1e-12)):
        raise ModelError("kappa violates |kappa(k)| <= c min(1, |k|^mu) on the grid")
    weighted = float(np.sum(modes.weights * np.abs(kap) ** 2 / k))
    if not np.isfinite(weighted):
        raise ModelError("weighted square-integrability sum is not finite")

    exp_ikx = particle.exp_ikx

    # The dilated particle eigenfunctions turn <psi_i^th| e^{-ik e^th x} |psi_j^th>
    # into the original matrix-element function at the rotated momentum, so the
    # whole coupling function transforms as w -> e^-theta w(e^-theta k).
    def w10(theta, k):
        rot = np.exp(-theta) * np.asarray(k, dtype=complex)
        return np.exp(-theta) * kappa_fn(rot)[..., None, None] * exp_ikx(-rot)

    def w01(theta, k):
        rot = np.exp(-theta) * np.asarray(k, dtype=complex)
        return np.exp(-theta) * kappa_fn(rot)[..., None, None] * exp_ikx(rot)

    terms = {
        (1, 0): CouplingTerm(1, 0, w10),
        (0, 1): CouplingTerm(0, 1, w01),
    }
    h = GHHamiltonian(
        particle=particle,
        interaction=GHInteraction(terms=terms, g=g, mu=mu),
        modes=modes,
    )
    object.__setattr__(h, "kappa_l2_weighted", weighted)
    return h


def complex_deform(h: GHHamiltonian, theta: complex) -> GHHamiltonian:
    """Dilated family: particle matrix from the model family, field factor
    e^(-theta), couplings rotated with one net e^(-theta) per ladder leg."""
    theta = complex(theta)
    if abs(theta.imag) >= DILATION_STRIP:
        raise DomainError("theta outside the analyticity strip |Im theta| < pi/4")
    return replace(h, theta=theta, field_scale=cmath.exp(-theta))


# -- coupling norms -----------------------------------------------------

def gh_coupling_norm(h: GHHamiltonian, mn) -> float:
    """Finite-dim realization of the weighted coupling norm ||w_{m,n}||^(0)_mu.

    <p>-weights are replaced by the identity; the <x>-dependent factor is
    realized by the model-supplied bounded delta-weights (none by default),
    leaving sup over the grid of ||W w[k] W^-1|| / min(prod sqrt(k_j), 1)^mu.
    """
    m, n = mn
    k = h.modes.momenta
    grids = np.meshgrid(*([k] * (m + n)), indexing="ij")
    vals = h.coupling_values(mn, *grids)
    denom = np.ones(np.broadcast(*grids).shape if m + n > 1 else grids[0].shape)
    for gk in grids:
        denom = denom * np.sqrt(gk)
    denom = np.minimum(denom, 1.0) ** h.mu
    weights = list(h.particle.delta_weights) or [None]
    best = 0.0
    for w in weights:
        if w is None:
            conj = vals
        else:
            winv = np.linalg.inv(w)
            conj = np.einsum("ab,...bc,cd->...ad", winv, vals, w)
        mags = np.linalg.norm(conj, ord=2, axis=(-2, -1))
        best = max(best, float(np.max(mags / denom)))
    return best


def hermiticity_pairing_violation(h: GHHamiltonian) -> float:
    """max over grid of ||w_{m,n}[k] - w_{n,m}[k]^dagger|| for paired terms."""
    worst = 0.0
    k = h.modes.momenta
    for (m, n), term in h.interaction.terms.items():
        if (n, m) not in h.interaction.terms:
            return np.inf
        grids = np.meshgrid(*([k] * (m + n)), indexing="ij")
        a = h.coupling_values((m, n), *grids)
        partner = h.coupling_values((n, m), *grids)
        b = np.conj(np.swapaxes(partner, -1, -2))
        worst = max(worst, float(np.max(np.linalg.norm(a - b, ord=2, axis=(-2, -1)))))
    return worst


# -- assembly -----------------------------------------------------------

def _leg_coeffs(modes: ModeSet) -> np.ndarray:
    # one ladder leg: quadrature weight and the |k|^(-1/2) measure factor
    return np.sqrt(modes.weights / modes.momenta)


def _ladder_product(basis: FockBasis, idx, create: bool) -> np.ndarray:
    out = None
    for i in idx:
        mat = basis.creator(i) if create else basis.annihilator(i)
        out = mat if out is None else out @ mat
    if out is None:
        return np.eye(basis.dim, dtype=complex)
    return out


def _state_codes(basis: FockBasis):
    """Occupation-vector hash for vectorized index lookup."""
    cache = getattr(basis, "_codes_cache", None)
    if cache is None:
        powers = (basis.n_max + 1) ** np.arange(basis.modes.n_modes, dtype=np.int64)
        codes = basis.occupations @ powers
        order = np.argsort(codes)
        cache = (powers, codes[order], order)
        basis._codes_cache = cache
    return cache


def _ladder_action(basis: FockBasis, create_idx, annihilate_idx):
    """Vectorized a*(create) a(annihilate) on every basis state.

    Returns (ok, src, mid, tgt, amp): boolean survival mask, source indices,
    the intermediate state (after annihilation) and target indices, and the
    sqrt-factor amplitudes.  Ladder operators move single occupation slots,
    so the action is an index map rather than a dense matrix.
    """
    powers, sorted_codes, order = _state_codes(basis)
    occ = basis.occupations
    dim = basis.dim
    amp = np.ones(dim)
    cur = occ.copy()
    ok = np.ones(dim, dtype=bool)
    for j in annihilate_idx:
        nj = cur[:, j]
        ok &= nj > 0
        amp = amp * np.sqrt(np.maximum(nj, 0))
        cur = cur.copy()
        cur[:, j] -= 1
    cur = np.maximum(cur, 0)

    def lookup(rows):
        codes = rows @ powers
        pos = np.searchsorted(sorted_codes, codes)
        pos = np.clip(pos, 0, dim - 1)
        idx = order[pos]
        good = sorted_codes[pos] == codes
        return idx, good

    mid, good_mid = lookup(cur)
    ok &= good_mid
    after = cur.copy()
    for i in create_idx:
        amp = amp * np.sqrt(after[:, i] + 1)
        after = after.copy()
        after[:, i] += 1
    ok &= after.sum(axis=1) <= basis.n_max
    tgt, good_tgt = lookup(np.minimum(after, basis.n_max))
    ok &= good_tgt
    src = np.arange(dim)
    return ok, src[ok], mid[ok], tgt[ok], amp[ok]


def _interaction_term_matrix(basis: FockBasis, mn, values, coeffs) -> np.ndarray:
    """Matrix of W_{m,n} given kernel values on the mode tensor grid.

    values: array with (m+n) mode axes and trailing (dim, dim) particle block
    (dim may be 1); no field-energy dependence.
    Returns the matrix on particle (x) Fock ordered as kron(particle, field).
    """
    m, n = mn
    nk = basis.modes.n_modes
    dim = values.shape[-1]
    dimF = basis.dim
    out = np.zeros((dim * dimF, dim * dimF), dtype=complex)
    for multi in np.ndindex(*([nk] * (m + n))):
        coeff = np.prod([coeffs[i] for i in multi]) if multi else 1.0
        ok, src, mid, tgt, amp = _ladder_action(basis, multi[:m], multi[m:])
        if src.size == 0:
            continue
        w = values[multi]
        for a in range(dim):
            for b in range(dim):
                np.add.at(out, (a * dimF + tgt, b * dimF + src), coeff * amp * w[a, b])
    return out


def assemble_gh(h: GHHamiltonian, basis: FockBasis) -> OperatorMatrix:
    """Dense matrix of the generalized Hamiltonian on particle (x) Fock."""
    if not np.allclose(basis.modes.momenta, h.modes.momenta):
        raise GridMismatchError("basis modes do not match the Hamiltonian grid")
    dim = h.particle.dim
    hp = h.particle_matrix()
    hf = free_field_hamiltonian(basis).entries
    total = np.kron(hp, np.eye(basis.dim)) + h.field_scale * np.kron(np.eye(dim), hf)
    coeffs = _leg_coeffs(h.modes)
    k = h.modes.momenta
    for mn in sorted(h.interaction.terms):
        grids = np.meshgrid(*([k] * sum(mn)), indexing="ij")
        vals = h.coupling_values(mn, *grids)
        total += h.g * _interaction_term_matrix(basis, mn, vals, coeffs)
    return OperatorMatrix(total)


def assemble_kernel_hamiltonian(seq: KernelSequence, basis: FockBasis) -> OperatorMatrix:
    """H(w) = w00[H_f] + sum chi_1 W_{m,n} chi_1 on (rank x) Fock.

    Kernel values at the exact field energies of the basis states come from
    the kernels' evaluators when present (interpolation otherwise); the
    smooth cutoff chi_1(H_f) sandwiches every interaction monomial.
    """
    k_seq = seq.k_grid()
    if k_seq.size and (
        k_seq.size != basis.modes.n_modes or not np.allclose(k_seq, basis.modes.momenta)
    ):
        raise GridMismatchError("kernel k-grid does not match the basis modes")
    rank = seq.rank
    dimF = basis.dim
    energies = basis.field_energies
    w00 = seq.w00

    # diagonal part w00[H_f] (affine tail beyond the stored r-range)
    vals00 = _eval_w00(w00, energies)
    if rank == 1:
        total = np.diag(vals00.astype(complex))
    else:
        total = np.zeros((rank * dimF, rank * dimF), dtype=complex)
        for s in range(dimF):
            total[s::dimF, s::dimF] = vals00[s]

    chi = smooth_cutoff_chi1(energies)
    coeffs = _leg_coeffs(basis.modes)
    nk = basis.modes.n_modes
    for (m, n), kernel in seq.interaction_items():
        mesh = kernel.eval_mesh(energies, basis.modes.momenta)
        for multi in np.ndindex(*([nk] * (m + n))):
            coeff = np.prod([coeffs[i] for i in multi])
            ok, src, mid, tgt, amp = _ladder_action(basis, multi[:m], multi[m:])
            if src.size == 0:
                continue
            sl = (slice(None),) + multi
            vals = mesh[sl]
            # chi_1 sandwich and the H_f slot at the intermediate state
            weight = coeff * amp * chi[tgt] * chi[src]
            if rank == 1:
                np.add.at(total, (tgt, src), weight * vals[mid])
            else:
                blocks = vals[mid]
                for a in range(rank):
                    for b in range(rank):
                        np.add.at(
                            total,
                            (a * dimF + tgt, b * dimF + src),
                            weight * blocks[:, a, b],
                        )
    return OperatorMatrix(total)


def _eval_w00(kernel, r_values: np.ndarray) -> np.ndarray:
    """w00 at arbitrary field energies; affine extension beyond the grid tail."""
    r_values = np.asarray(r_values, dtype=float)
    if kernel.fn is not None:
        out = kernel.eval_mesh(r_values)
        return out
    r_max = kernel.r_grid[-1]
    inside = np.minimum(r_values, r_max)
    vals = kernel.eval_mesh(inside)
    over = r_values > r_max
    if np.any(over):
        h = 1e-6 * r_max
        slope = (kernel.eval_mesh(np.array([r_max])) - kernel.eval_mesh(np.array([r_max - h]))) / h
        vals[over] = vals[over] + (r_values[over] - r_max).reshape(
            (-1,) + (1,) * (vals.ndim - 1)
        ) * slope[0]
    return vals
