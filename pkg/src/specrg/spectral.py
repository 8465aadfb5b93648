"""Spectral analysis built on the decimation pipeline.

The eigenvalue/resonance equation phi_j(z) = E_j(z) + e(H_zjs) = 0 is
solved by damped fixed-point iteration; E_j(z) is the vacuum expectation
of the decimated operator and e(H) the distinguished small eigenvalue of
its stable component, realized by diagonalizing the assembled kernel
Hamiltonian on the rescaled mode grid.  Everything here works on the
normalized form e^theta H_theta, whose field energies are real; physical
resonances are read off by undoing the prefactor.
"""

from __future__ import annotations

import cmath
from dataclasses import dataclass, field, replace
from typing import Callable, Optional

import numpy as np

from .fock import FockBasis
from .hamiltonian import GHHamiltonian, ParticleModel, assemble_kernel_hamiltonian
from .kernels import Kernel, KernelSequence, norm_report, seq_norm
from .oracle import exact_spectrum
from .rg import WickConfig, decimation_plan, first_decimation, flow_step


class UngappedError(ValueError):
    """The selected particle level is not isolated from the half-line spectrum."""


class StabilityRegionError(RuntimeError):
    """No eigenvalue of the stable component inside the search disc."""


class SolverError(RuntimeError):
    pass


class ReconstructionError(RuntimeError):
    pass


# -- gap, region, resolvent size -----------------------------------------

def dist_to_halfline(z: complex, base: complex) -> float:
    """Distance from z to base + [0, infinity)."""
    d = z - base
    if d.real >= 0:
        return abs(d.imag)
    return abs(d)


@dataclass(frozen=True)
class SpectralRegion:
    j: int
    lambda_j: complex
    delta_j: float
    half_side: float

    def contains(self, z: complex, slack: float = 0.0) -> bool:
        d = z - self.lambda_j
        return abs(d.real) <= self.half_side + slack and abs(d.imag) <= self.half_side + slack

    def boundary_samples(self, per_side: int = 16) -> np.ndarray:
        corners = [
            self.lambda_j + self.half_side * (sx + 1j * sy)
            for sx, sy in ((-1, -1), (1, -1), (1, 1), (-1, 1))
        ]
        pts = []
        for a, b in zip(corners, corners[1:] + corners[:1]):
            for i in range(per_side):
                pts.append(a + (b - a) * i / per_side)
        return np.array(pts)


def gap_and_region(particle: ParticleModel, j: int, delta_cap: float = 1.0) -> SpectralRegion:
    """delta_j = dist(lambda_j, (spec \\ {lambda_j}) + [0, inf)) and the square Q_j.

    A level with no competitors (one-level particle) has delta_j = inf; the
    square is then capped at delta_cap.
    """
    level = particle.levels[j]
    lam_j = level.value
    others = [lv.value for i, lv in enumerate(particle.levels) if i != j]
    if others:
        delta = min(dist_to_halfline(lam_j, base) for base in others)
    else:
        delta = np.inf
    if delta <= 0:
        raise UngappedError(
            f"level {j} at {lam_j} is embedded in the half-line spectrum (delta_j = 0)"
        )
    return SpectralRegion(
        j=j, lambda_j=lam_j, delta_j=float(delta),
        half_side=min(delta, delta_cap) / 3.0,
    )


def kappa_estimate(particle: ParticleModel, region: SpectralRegion,
                   weights: Optional[list] = None, per_side: int = 16) -> float:
    """kappa_j from resolvent norms sampled on the boundary of Q_j plus its center.

    kappa_j^-1 = sup over samples and delta-weights of
    || (H^delta - lam)^-1 Pbar_j^delta ||; by the maximum principle boundary
    samples control the analytic part, the center guards the interior.
    """
    level = particle.levels[region.j]
    others = [i for i in range(particle.dim) if i not in level.indices]
    if not others:
        return np.inf
    samples = np.concatenate([region.boundary_samples(per_side), [region.lambda_j]])
    weight_list = list(weights if weights is not None else particle.delta_weights) or [None]
    vals = particle.eigenvalues
    vecs, vinv = particle._vecs, particle._vinv
    worst = 0.0
    for w in weight_list:
        winv = None if w is None else np.linalg.inv(w)
        for lam in samples:
            den = vals[others] - lam
            if np.min(np.abs(den)) < 1e-13:
                raise UngappedError(f"singular resolvent at sample {lam}")
            res = (vecs[:, others] / den) @ vinv[others, :]
            if w is not None:
                res = winv @ res @ w
            worst = max(worst, float(np.linalg.norm(res, 2)))
    if worst == 0.0:
        return np.inf
    return 1.0 / worst


def default_rho(particle: ParticleModel, j: int, g: float,
                delta_cap: float = 1.0) -> float:
    """rho = min(kappa_j, 1/2, sqrt(g)): honors g^2/rho, g rho^mu << 1."""
    region = gap_and_region(particle, j, delta_cap)
    kappa = kappa_estimate(particle, region)
    return float(min(kappa, 0.5, np.sqrt(g) if g > 0 else 0.5))


# -- effective energy ------------------------------------------------------

def effective_energy(seq: KernelSequence, basis: FockBasis,
                     search_radius: Optional[float] = None,
                     safety: float = 4.0) -> complex:
    """Distinguished eigenvalue of the stable-component kernel Hamiltonian.

    Returns the eigenvalue with smallest real part inside the disc
    D(0, search_radius); the default radius is safety * (|w00(0)| + the
    operator-norm bound xi ||w_1|| on the interaction part).
    """
    rep = norm_report(seq)
    if search_radius is None:
        bound = rep.w00_at_zero + seq.xi * seq_norm(seq, "interaction", s=0)
        search_radius = safety * max(bound, 1e-12)
    matrix = assemble_kernel_hamiltonian(seq, basis).entries
    spec = exact_spectrum(matrix, vectors=False)
    inside = spec.values[np.abs(spec.values) <= search_radius]
    if inside.size == 0:
        raise StabilityRegionError(
            f"no eigenvalue inside D(0, {search_radius:.3e}); "
            "is the sequence the stable component?"
        )
    return complex(inside[np.argmin(inside.real)])


def effective_energy_rg(seq: KernelSequence, rho: float, cfg: WickConfig,
                        n_steps: int = 6) -> complex:
    """Secondary route: e(H) = sum_t rho^t c_t from the re-centered flow,
    where c_t is the vacuum shift produced at step t."""
    current = seq
    total = 0.0 + 0.0j
    for t in range(1, n_steps + 1):
        current = flow_step(current, cfg)
        c_t = np.asarray(current.w00.at_zero()).reshape(-1)[0]
        total += rho**t * c_t
        # re-center on the stable manifold
        w00 = current.w00
        shifted = w00.values.copy()
        shifted -= c_t if current.rank == 1 else c_t * np.eye(current.rank)
        kernels = dict(current.kernels)
        kernels[(0, 0)] = Kernel(0, 0, w00.r_grid, w00.k_grid, shifted, rank=current.rank)
        current = replace(current, kernels=kernels)
    return complex(total)


# -- the fixed-point solver ------------------------------------------------

@dataclass
class ResonanceResult:
    e: complex                 # root in the normalized frame (e^theta H_theta)
    e_model: complex           # eigenvalue of the supplied (possibly deformed) model
    iterations: int
    residual: float
    rho: float
    theta: complex
    lambda_j: complex
    alpha: float               # |w00(0)| at the root: the 15-alpha bound scale
    history: list = field(default_factory=list)
    fgr_gamma: Optional[float] = None
    cone_ok: Optional[bool] = None

    @property
    def within_15_alpha(self) -> bool:
        return abs(self.e - self.lambda_j) <= 15.0 * max(self.alpha, 1e-300)


def phi_function(h: GHHamiltonian, j: int, rho: float,
                 cfg: Optional[WickConfig] = None,
                 n_max: int = 2) -> Callable:
    """phi_j as a callable z -> (phi, alpha); shares one decimation plan."""
    cfg = cfg or WickConfig(rho=rho, j=j)
    cfg = replace(cfg, rho=rho, j=j, estimate_discards=False)
    hn = h.normalized()
    plan = decimation_plan(hn, cfg)
    scaled_basis = FockBasis(hn.modes.scaled(1.0 / rho), n_max)
    rank = hn.particle_model_effective().levels[j].rank
    if rank != 1:
        raise SolverError(
            "phi solver requires a simple level; degenerate splitting is out of scope"
        )

    def phi(z: complex):
        seq = first_decimation(hn, j, rho, z, cfg=cfg, plan=plan)
        e_big = complex(np.asarray(seq.w00.at_zero()).reshape(-1)[0])
        w00 = seq.w00
        base_fn = w00.fn

        def stable_fn(r):
            return base_fn(r) - e_big

        kernels = dict(seq.kernels)
        from .kernels import kernel_from_fn

        kernels[(0, 0)] = kernel_from_fn(0, 0, stable_fn, r_grid=w00.r_grid)
        seq_s = replace(seq, kernels=kernels)
        e_s = effective_energy(seq_s, scaled_basis)
        return e_big + e_s, abs(e_big)

    return phi


def solve_phi(h: GHHamiltonian, j: int, rho: Optional[float] = None,
              cfg: Optional[WickConfig] = None, n_max: int = 2,
              tol: float = 1e-10, max_iter: int = 50,
              delta_cap: float = 1.0) -> ResonanceResult:
    """Solve phi_j(z) = 0 by damped fixed-point iteration z <- z + s phi(z).

    The step starts undamped and halves whenever the residual grows (the
    effective contraction factor of the undamped map is |1 - s/rho|, so the
    line search settles near s = rho).  Iterates are confined to Q_j.
    """
    hn = h.normalized()
    particle = hn.particle_model_effective()
    region = gap_and_region(particle, j, delta_cap)
    if rho is None:
        rho = default_rho(particle, j, hn.g, delta_cap)
    phi = phi_function(hn, j, rho, cfg, n_max=n_max)
    z = region.lambda_j
    value, alpha = phi(z)
    history = [(z, abs(value))]
    iterations = 0
    step = 1.0
    while abs(value) > tol and iterations < max_iter:
        iterations += 1
        # halve the step while that improves the residual; accept the best
        best = None
        s = step
        while s >= 2.0**-12:
            cand = z + s * value
            if region.contains(cand, slack=region.half_side):
                cand_value, cand_alpha = phi(cand)
                if best is not None and abs(cand_value) >= abs(best[1]):
                    break
                best = (cand, cand_value, cand_alpha, s)
            s *= 0.5
        if best is None or abs(best[1]) >= abs(value):
            raise SolverError(
                f"fixed-point stalled at |phi| = {abs(value):.3e} after "
                f"{iterations} iterations"
            )
        z, value, alpha = best[0], best[1], best[2]
        step = min(1.0, 2.0 * best[3])
        history.append((z, abs(value)))
    if abs(value) > tol:
        raise SolverError(f"no convergence in {max_iter} iterations; |phi| = {abs(value):.3e}")
    e_model = z / hn.prefactor
    return ResonanceResult(
        e=z, e_model=e_model, iterations=iterations, residual=abs(value),
        rho=rho, theta=h.theta, lambda_j=region.lambda_j, alpha=alpha,
        history=history,
    )


# -- Fermi Golden Rule widths ----------------------------------------------

def fgr_width(h: GHHamiltonian, j: int) -> float:
    """Second-order on-shell decay width gamma_j, independent of the pipeline.

    gamma_j = pi sum_{i < j} (lam_j - lam_i) |<psi_i, w10(k_ij) psi_j>|^2
    over channels with on-shell momentum k_ij = lam_j - lam_i inside the
    unit ball; the |k|^-1 measure factor and the k^2 volume cancel to one
    power of k.  Uses the undeformed closed-form couplings.
    """
    if j < 1:
        raise ValueError("decay widths are defined for excited levels (j >= 1)")
    particle = h.particle
    term = h.interaction.terms.get((1, 0))
    if term is None:
        return 0.0
    lam_j = particle.levels[j].value.real
    gamma = 0.0
    for i, level_i in enumerate(particle.levels):
        if i >= j:
            continue
        k_ij = lam_j - level_i.value.real
        if not 0.0 < k_ij <= 1.0:
            continue  # channel closed or outside the interaction support
        w = term.eval(0.0, np.array([k_ij]))[0]
        for col in range(particle.levels[j].rank):
            psi_j = particle.levels[j].right[:, col]
            for row in range(level_i.rank):
                psi_i = level_i.right[:, row]
                amp = np.vdot(psi_i, w @ psi_j)
                gamma += np.pi * k_ij * abs(amp) ** 2
    return float(gamma)


# -- cone confinement --------------------------------------------------------

def cone_check(eigs, e_j: complex, theta: complex, aperture: float = 0.5,
               tol: float = 1e-9) -> bool:
    """All eigenvalues except e_j lie in the half-cone
    Re(e^theta (z - e_j)) >= 0, |Im(e^theta (z - e_j))| <= aperture * Re."""
    eigs = np.asarray(eigs, dtype=complex)
    if eigs.size == 0:
        return True
    keep = np.abs(eigs - e_j) > 1e-12 + np.min(np.abs(eigs - e_j))
    rot = np.exp(theta) * (eigs[keep] - e_j)
    ok_re = rot.real >= -tol
    ok_im = np.abs(rot.imag) <= aperture * np.maximum(rot.real, 0.0) + tol
    return bool(np.all(ok_re & ok_im))


# -- eigenvector reconstruction ----------------------------------------------

def reconstruct_eigenvector(h: GHHamiltonian, dec, e_j: complex,
                            psi_kernel: np.ndarray, scaled_basis: FockBasis,
                            tol_match: float = 1e-10):
    """Psi = Q_pi (H - e_j) Gamma_rho^* psi: lift a kernel-Hamiltonian null
    vector back to an eigenvector of the assembled model.

    Gamma_rho^* is the mode relabeling k -> rho k; it requires the scaled
    basis to be the relabeling of the decimation basis, where it acts as the
    identity on occupation coefficients.  Returns (vector, relative residual).
    """
    from .feshbach import q_pi

    basis = dec.basis
    if scaled_basis.dim != basis.dim or not np.allclose(
        scaled_basis.modes.momenta * dec.rho, basis.modes.momenta, atol=tol_match
    ):
        raise ReconstructionError(
            "scaled basis is not the rho-relabeling of the decimation basis"
        )
    psi = np.asarray(psi_kernel, dtype=complex)
    level = dec.level
    if psi.size == basis.dim and level.rank == 1:
        full = np.kron(level.right[:, 0], psi)
    elif psi.size == level.rank * basis.dim:
        blocks = psi.reshape(level.rank, basis.dim)
        full = sum(np.kron(level.right[:, a], blocks[a]) for a in range(level.rank))
    else:
        raise ReconstructionError("kernel vector has incompatible dimension")
    q = q_pi(dec, e_j, "plain", dense=True)
    out = q @ full
    norm = np.linalg.norm(out)
    if norm < 1e-12:
        raise ReconstructionError("reconstruction produced the zero vector")
    n = dec.h_total.shape[0]
    residual = np.linalg.norm((dec.h_total - e_j * np.eye(n)) @ out) / norm
    return out, float(residual)
