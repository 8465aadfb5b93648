"""The renormalization map at the kernel level.

One application of rho^-1 S_rho o F_pi is computed by expanding the
decimated Hamiltonian in a Neumann series, normal ordering each term with
Wick's theorem, and collecting the coefficient functions:

    what_{M,N}[r; k] = rho^(M+N-1) sum_L (-1)^(L-1) g^L
                       sum_{compositions} prod binomials * V[rho r; rho k],

where V is a vacuum expectation of L interaction vertices separated by
resolvent insertions.  On the vacuum only full pairings of the internal
ladder legs survive; each pairing carries one radial quadrature and shifts
the insertion arguments by the energies of the photons in flight.

The end cutoffs chi(H_f <= rho) of the decimation are not folded into the
interaction kernels: after scaling they coincide exactly with the chi_1
sandwich that the normal-form assembly applies, so keeping them out of
what_{M,N} (M+N >= 1) and multiplying what_{0,0} corrections by chi_1(r)^2
makes the kernel-level map agree with the matrix-level one identically.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field, replace
from typing import Callable, Optional

import numpy as np

from .fock import ModeSet
from .hamiltonian import GHHamiltonian
from .kernels import (
    Kernel,
    KernelSequence,
    chebyshev_points,
    chi_rho,
    kernel_from_fn,
    norm_mu_s,
    smooth_cutoff_chi1,
    symmetrize,
)

CHUNK_ELEMENTS = 8_000_000  # max complex elements per broadcast slab


class WickEnumerationError(ValueError):
    pass


class FlowDivergenceError(RuntimeError):
    def __init__(self, message, trace=None):
        super().__init__(message)
        self.trace = trace


@dataclass
class WickConfig:
    """Controls for one kernel-level decimation / renormalization step."""

    l_max: int = 4
    rho: float = 0.25
    j: int = 0
    lam: complex = 0.0
    internal_modes: Optional[ModeSet] = None
    max_mn: int = 2
    xi: float = 0.25
    r_max: float = 4.0
    nr: int = 16
    nr00: int = 33
    exact_fn_orders: tuple = (0, 1)  # kernel orders m+n kept as exact closures
    discard_orders: int = 2          # how far beyond max_mn discards are estimated
    discard_points: int = 4
    estimate_discards: bool = True   # solver iterates switch this off

    def __post_init__(self):
        if self.l_max < 1:
            raise WickEnumerationError("l_max must be >= 1")
        if not (0 < self.rho <= 0.5):
            raise WickEnumerationError("rho must lie in (0, 1/2]")


# -- composition and pairing enumeration --------------------------------

@dataclass(frozen=True)
class _Vertex:
    m_ext: int
    n_ext: int
    p_int: int
    q_int: int
    key: tuple  # (m', n') term key

    @property
    def order(self):
        return self.m_ext + self.p_int + self.n_ext + self.q_int


def _compositions(total, parts):
    if parts == 1:
        yield (total,)
        return
    for first in range(total + 1):
        for rest in _compositions(total - first, parts - 1):
            yield (first,) + rest


def _enumerate_assignments(term_keys, L, M, N):
    """All per-vertex (m, n, p, q, term) tuples with sum m = M, sum n = N."""
    out = []
    for m_comp in _compositions(M, L):
        for n_comp in _compositions(N, L):
            options = []
            for m_l, n_l in zip(m_comp, n_comp):
                opts = []
                for mp, npp in term_keys:
                    if mp >= m_l and npp >= n_l:
                        opts.append(_Vertex(m_l, n_l, mp - m_l, npp - n_l, (mp, npp)))
                options.append(opts)
            for combo in itertools.product(*options):
                if all(v.order >= 1 for v in combo):
                    out.append(tuple(combo))
    return out


def _enumerate_matchings(assign):
    """Perfect matchings of internal legs: annihilator vertex < creator vertex."""
    annih = []
    create = []
    for ell, v in enumerate(assign):
        annih.extend([(ell, s) for s in range(v.q_int)])
        create.extend([(ell, s) for s in range(v.p_int)])
    if len(annih) != len(create):
        return []
    if not annih:
        return [()]

    results = []

    def rec(remaining_a, remaining_c, acc):
        if not remaining_a:
            results.append(tuple(acc))
            return
        a = remaining_a[0]
        for i, c in enumerate(remaining_c):
            if a[0] < c[0]:
                rec(remaining_a[1:], remaining_c[:i] + remaining_c[i + 1 :], acc + [(a, c)])

    rec(annih, create, [])
    return results


def _binomial_weight(assign):
    w = 1.0
    for v in assign:
        w *= math.comb(v.m_ext + v.p_int, v.p_int) * math.comb(v.n_ext + v.q_int, v.q_int)
    return w


# -- the vacuum-expectation engine ---------------------------------------

@dataclass
class VertexSet:
    """Interaction vertices: key (m', n') -> evaluator (rslot, *k) -> (..., d, d)."""

    evals: dict
    has_r: bool
    dim: int


@dataclass
class WickPlan:
    """Precomputed enumeration plus the model data for one decimation setup."""

    vertices: VertexSet
    insertion: Callable  # lam -> (s-array -> (..., d, d))
    end_left: np.ndarray   # (rank, d)
    end_right: np.ndarray  # (d, rank)
    g_eff: float
    rho: float
    internal: ModeSet
    l_max: int
    _cache: dict = field(default_factory=dict)

    @property
    def rank(self):
        return self.end_left.shape[0]

    def entries(self, M, N):
        key = (M, N)
        if key not in self._cache:
            found = []
            term_keys = sorted(self.vertices.evals.keys())
            for L in range(1, self.l_max + 1):
                for assign in _enumerate_assignments(term_keys, L, M, N):
                    matchings = _enumerate_matchings(assign)
                    if matchings:
                        found.append((L, assign, matchings, _binomial_weight(assign)))
            self._cache[key] = found
        return self._cache[key]

    # ------------------------------------------------------------------

    def _v_value(self, assign, pairs, insertion, r_o, ext_o):
        """One Wick term on original-unit argument arrays (mesh-broadcastable)."""
        L = len(assign)
        shape = np.broadcast(r_o, *ext_o).shape if ext_o else np.asarray(r_o).shape
        nd = len(shape)
        P = len(pairs)
        ni = self.internal.n_modes
        d = self.vertices.dim

        def lift(arr):
            arr = np.asarray(arr)
            return arr.reshape(arr.shape + (1,) * P)

        r_l = lift(r_o)
        ext_l = [lift(e) for e in ext_o]
        xs = []
        for p in range(P):
            sh = (1,) * nd + tuple(ni if q == p else 1 for q in range(P))
            xs.append(self.internal.momenta.reshape(sh))

        # external slot assignment in vertex order
        create_ext, annih_ext = [], []
        ic = 0
        for v in assign:
            create_ext.append(ext_l[ic : ic + v.m_ext])
            ic += v.m_ext
        for v in assign:
            annih_ext.append(ext_l[ic : ic + v.n_ext])
            ic += v.n_ext

        sum_c = [sum(c) if c else 0.0 for c in create_ext]
        sum_a = [sum(a) if a else 0.0 for a in annih_ext]

        # internal legs per vertex, ordered by pair index for reproducibility
        create_int = [[] for _ in range(L)]
        annih_int = [[] for _ in range(L)]
        for p, ((la, _sa), (lc, _sc)) in enumerate(pairs):
            annih_int[la].append(xs[p])
            create_int[lc].append(xs[p])

        chain = None
        for ell in range(L):
            v = assign[ell]
            args = create_ext[ell] + create_int[ell] + annih_ext[ell] + annih_int[ell]
            if self.vertices.has_r:
                r_small = r_l + sum(sum_a[:ell]) + sum(sum_c[ell + 1 :])
                mid = sum(
                    xs[p] for p, ((la, _), (lc, _)) in enumerate(pairs) if la < ell < lc
                )
                rslot = r_small + mid
                val = self.vertices.evals[v.key](rslot, *args)
            else:
                val = self.vertices.evals[v.key](None, *args)
            val = np.asarray(val, dtype=complex)
            if val.ndim < 2 or val.shape[-1] != d:
                val = val.reshape(val.shape + (1, 1)) if d == 1 else val
            chain = val if chain is None else chain @ val
            if ell < L - 1:
                r_tilde = r_l + sum(sum_a[: ell + 1]) + sum(sum_c[ell + 1 :])
                inflight = sum(
                    xs[p] for p, ((la, _), (lc, _)) in enumerate(pairs) if la <= ell < lc
                )
                chain = chain @ insertion(r_tilde + inflight)
        chain = np.matmul(self.end_left, np.matmul(chain, self.end_right))

        if P:
            meas = 1.0
            for p in range(P):
                sh = (1,) * nd + tuple(ni if q == p else 1 for q in range(P))
                meas = meas * (self.internal.weights / self.internal.momenta).reshape(sh)
            chain = chain * meas[..., None, None]
            chain = chain.sum(axis=tuple(range(nd, nd + P)))
        return np.broadcast_to(chain, shape + (self.rank, self.rank)).copy()

    def correction_fn(self, M, N, lam):
        """(r, *k) -> scaled Wick sum for the (M, N) output kernel.

        Arguments are in the scaled frame; the rho^(M+N-1) prefactor and the
        rho-rescaling of all arguments are applied here.  The (0,0) result
        carries neither the leading r nor the chi_1(r)^2 end factors.
        """
        entries = self.entries(M, N)
        insertion = self.insertion(lam)
        rank = self.rank

        def fn(r, *k):
            r = np.asarray(r, dtype=float)
            shape = np.broadcast(r, *k).shape if k else r.shape
            total = np.zeros(shape + (rank, rank), dtype=complex)
            if not entries:
                return _maybe_squeeze(total, rank)
            n_lead = shape[0] if shape else 1
            size = int(np.prod(shape, dtype=np.int64)) if shape else 1
            max_int = self.internal.n_modes ** max(
                (sum(v.p_int for v in a) for _, a, _, _ in entries), default=0
            )
            chunk = max(1, int(CHUNK_ELEMENTS // max(1, (size // max(n_lead, 1)) * max_int)))
            for lo in range(0, n_lead, chunk):
                sl = slice(lo, lo + chunk)
                r_o = self.rho * _take_lead(r, shape, sl)
                ext_o = [self.rho * _take_lead(np.asarray(ki, dtype=float), shape, sl) for ki in k]
                acc = np.zeros(total[sl].shape, dtype=complex)
                for L, assign, matchings, binom in entries:
                    pref = (-1.0) ** (L - 1) * self.g_eff**L * binom
                    for pairs in matchings:
                        acc += pref * self._v_value(assign, pairs, insertion, r_o, ext_o)
                total[sl] = acc
            total *= self.rho ** (M + N - 1)
            return _maybe_squeeze(total, rank)

        return fn


def _take_lead(arr, shape, sl):
    """Slice the leading broadcast axis of a possibly-degenerate operand."""
    arr = np.asarray(arr)
    if len(shape) and arr.ndim == len(shape) and arr.shape[0] == shape[0]:
        return arr[sl]
    return arr


def _maybe_squeeze(values, rank):
    return values[..., 0, 0] if rank == 1 else values


# -- first decimation ----------------------------------------------------

def decimation_plan(h: GHHamiltonian, cfg: WickConfig) -> WickPlan:
    """Wick plan for decimating a generalized Hamiltonian at level cfg.j."""
    hn = h.normalized()
    particle = hn.particle_model_effective()
    level = particle.levels[cfg.j]
    internal = cfg.internal_modes or hn.modes
    rho = cfg.rho

    evals = {}
    for mn in hn.interaction.terms:
        evals[mn] = (lambda mn: lambda rslot, *k: hn.coupling_values(mn, *k))(mn)
    vertices = VertexSet(evals=evals, has_r=False, dim=particle.dim)

    def insertion_factory(lam):
        def insertion(s):
            chi_sq = chi_rho(np.real(s), rho) ** 2
            return particle.resolvent_fn(s, lam, chi_sq_j=chi_sq, j=cfg.j)

        return insertion

    return WickPlan(
        vertices=vertices,
        insertion=insertion_factory,
        end_left=level.left,
        end_right=level.right,
        g_eff=hn.g,
        rho=rho,
        internal=internal,
        l_max=cfg.l_max,
    )


def _output_mns(max_mn):
    return [(m, n) for m in range(max_mn + 1) for n in range(max_mn + 1)
            if 1 <= m + n <= max_mn]


def _discard_mns(max_mn, extra):
    return [(m, n) for m in range(max_mn + extra + 1) for n in range(max_mn + extra + 1)
            if max_mn < m + n <= max_mn + extra]


def _estimate_discards(plan: WickPlan, cfg: WickConfig, lam, k_grid, mu) -> float:
    """xi-weighted norms of the kernels beyond max_mn, on coarse grids.

    Only the leading Neumann order of each discarded kernel is evaluated:
    the higher orders are smaller by further powers of the Neumann ratio
    and the result is an estimate feeding the 10% discard flag.
    """
    total = 0.0
    stride = max(1, k_grid.size // cfg.discard_points)
    k_coarse = k_grid[::stride]
    r_coarse = chebyshev_points(5, 0.0, 1.0)
    for m, n in _discard_mns(cfg.max_mn, cfg.discard_orders):
        entries = plan.entries(m, n)
        if not entries:
            continue
        l_min = min(entry[0] for entry in entries)
        lead = [e for e in entries if e[0] == l_min]
        fn = _entries_fn(plan, lead, m, n, lam)
        ker = kernel_from_fn(m, n, fn, r_grid=r_coarse, k_grid=k_coarse, rank=plan.rank)
        ker = Kernel(m, n, ker.r_grid, ker.k_grid, ker.values, rank=plan.rank)
        total += cfg.xi ** (-(m + n)) * norm_mu_s(ker, mu, 1)
    return total


def _entries_fn(plan: WickPlan, entries, M, N, lam):
    insertion = plan.insertion(lam)
    rank = plan.rank

    def fn(r, *k):
        r = np.asarray(r, dtype=float)
        shape = np.broadcast(r, *k).shape if k else r.shape
        r_o = plan.rho * r
        ext_o = [plan.rho * np.asarray(ki, dtype=float) for ki in k]
        total = np.zeros(shape + (rank, rank), dtype=complex)
        for L, assign, matchings, binom in entries:
            pref = (-1.0) ** (L - 1) * plan.g_eff**L * binom
            for pairs in matchings:
                total += pref * plan._v_value(assign, pairs, insertion, r_o, ext_o)
        return _maybe_squeeze(plan.rho ** (M + N - 1) * total, rank)

    return fn


def first_decimation(h: GHHamiltonian, j: int, rho: float, lam: complex,
                     cfg: Optional[WickConfig] = None,
                     plan: Optional[WickPlan] = None) -> KernelSequence:
    """Kernel sequence of R_rho,j (H - lam) restricted to the level-j block.

    The (0,0) kernel is the full one: r + rho^-1 (lambda_j - lam) plus the
    chi_1(r)^2-weighted vacuum corrections; interaction kernels are produced
    in post-scaling form on the rescaled model grid.
    """
    cfg = cfg or WickConfig(rho=rho, j=j, lam=lam)
    if cfg.rho != rho or cfg.j != j:
        cfg = replace(cfg, rho=rho, j=j)
    hn = h.normalized()
    particle = hn.particle_model_effective()
    level = particle.levels[j]
    lam_j = level.value
    if plan is None:
        plan = decimation_plan(hn, cfg)
    rank = level.rank

    k_out = hn.modes.momenta / rho
    kernels = {}
    for m, n in _output_mns(cfg.max_mn):
        fn = plan.correction_fn(m, n, lam)
        r_grid = chebyshev_points(cfg.nr, 0.0, 1.0)
        ker = kernel_from_fn(m, n, fn, r_grid=r_grid, k_grid=k_out, rank=rank)
        if (m + n) not in cfg.exact_fn_orders:
            ker = Kernel(m, n, ker.r_grid, ker.k_grid, ker.values, fn=None, rank=rank,
                         ir_power=hn.mu)
        kernels[(m, n)] = symmetrize(ker)

    corr00 = plan.correction_fn(0, 0, lam)
    discarded = (_estimate_discards(plan, cfg, lam, k_out, hn.mu)
                 if cfg.estimate_discards else 0.0)
    eye = np.eye(rank, dtype=complex)

    def w00_full(r):
        r = np.asarray(r, dtype=float)
        chi_sq = smooth_cutoff_chi1(r) ** 2
        corr = corr00(r)
        if rank == 1:
            return r + (lam_j - lam) / rho + chi_sq * corr
        base = (r.astype(complex) + (lam_j - lam) / rho)[..., None, None] * eye
        return base + chi_sq[..., None, None] * corr

    r00 = chebyshev_points(cfg.nr00, 0.0, cfg.r_max)
    kernels[(0, 0)] = kernel_from_fn(0, 0, w00_full, r_grid=r00, rank=rank)

    return KernelSequence(
        kernels=kernels, mu=hn.mu, xi=cfg.xi, max_mn=cfg.max_mn,
        discarded_norm=discarded, rank=rank,
    )


def wick_recombine(plan: WickPlan, cfg: WickConfig, lam: complex, k_out: np.ndarray,
                   mu: float) -> KernelSequence:
    """Interaction kernels of one renormalization step (no (0,0) entry); see
    first_decimation / flow_step for the callers that complete the sequence."""
    rank = plan.rank
    kernels = {}
    k_out = np.asarray(k_out, dtype=float)
    if k_out.size == 0 or not plan.vertices.evals:
        # interaction-free sequence: nothing to recombine
        return KernelSequence(kernels={}, mu=mu, xi=cfg.xi, max_mn=cfg.max_mn,
                              discarded_norm=0.0, rank=rank)
    for m, n in _output_mns(cfg.max_mn):
        fn = plan.correction_fn(m, n, lam)
        r_grid = chebyshev_points(cfg.nr, 0.0, 1.0)
        ker = kernel_from_fn(m, n, fn, r_grid=r_grid, k_grid=k_out, rank=rank)
        if (m + n) not in cfg.exact_fn_orders:
            ker = Kernel(m, n, ker.r_grid, ker.k_grid, ker.values, fn=None, rank=rank,
                         ir_power=mu)
        kernels[(m, n)] = symmetrize(ker)
    discarded = _estimate_discards(plan, cfg, lam, k_out, mu)
    return KernelSequence(kernels=kernels, mu=mu, xi=cfg.xi, max_mn=cfg.max_mn,
                          discarded_norm=discarded, rank=rank)


# -- matrix-level comparator ---------------------------------------------

def matrix_rg_map(h: GHHamiltonian, basis, j: int, rho: float, lam: complex,
                  l_max: Optional[int] = None, dense: bool = False):
    """rho^-1 S_rho F_pi(H - lam) on the level-j block as a dense matrix.

    The scaling is realized by relabeling the mode grid k -> k / rho with
    requadrature; the returned FockBasis carries the relabeled modes.  With
    l_max set, the Neumann expansion is truncated to exactly that many
    interaction orders (for term-matched comparison with the kernel route).
    """
    from .feshbach import build_decimation, feshbach_map, feshbach_neumann_truncated
    from .fock import FockBasis

    hn = h.normalized()
    dec = build_decimation(hn, basis, j, rho)
    if l_max is not None:
        f = feshbach_neumann_truncated(dec, lam, l_max)
    else:
        f = feshbach_map(dec, lam, dense=dense).matrix
    level = dec.level
    dim_f = basis.dim
    left = np.kron(level.left, np.eye(dim_f))
    right = np.kron(level.right, np.eye(dim_f))
    block = left @ f @ right
    scaled_basis = FockBasis(basis.modes.scaled(1.0 / rho), basis.n_max)
    return block / rho, scaled_basis


# -- the iterated flow ----------------------------------------------------

@dataclass
class FlowRecord:
    step: int
    alpha: float
    beta: float
    gamma: float
    w00_at_0: complex
    interaction_norm: float
    discarded_norm: float
    ratio: float
    b_value: float
    contraction_flag: bool
    discard_flag: bool


@dataclass
class FlowTrace:
    records: list

    CSV_HEADER = (
        "step,alpha,beta,gamma,w00_at_0_re,w00_at_0_im,"
        "interaction_norm,discarded_norm,ratio"
    )

    def to_csv(self) -> str:
        lines = [self.CSV_HEADER]
        for r in self.records:
            lines.append(
                f"{r.step},{r.alpha:.12e},{r.beta:.12e},{r.gamma:.12e},"
                f"{r.w00_at_0.real:.12e},{r.w00_at_0.imag:.12e},"
                f"{r.interaction_norm:.12e},{r.discarded_norm:.12e},{r.ratio:.12e}"
            )
        return "\n".join(lines) + "\n"


def _flow_plan(seq: KernelSequence, cfg: WickConfig) -> WickPlan:
    """Wick plan for one flow step: vertices from the running kernels, the
    insertion from the running (0,0) kernel, trivial particle factor."""
    rank = seq.rank
    d = rank
    evals = {}
    for (m, n), ker in seq.interaction_items():
        def ev(rslot, *k, _ker=ker):
            val = _ker.eval_points(rslot, *k)
            return val if _ker.rank > 1 else val[..., None, None]
        evals[(m, n)] = ev
    vertices = VertexSet(evals=evals, has_r=True, dim=d)
    w00 = seq.w00
    rho = cfg.rho
    floor = 0.05 * rho

    def insertion_factory(lam):
        def insertion(s):
            s = np.asarray(np.real(s), dtype=float)
            chibar_sq = 1.0 - chi_rho(s, rho) ** 2
            vals = w00.eval_points(s)
            if rank == 1:
                bad = (np.abs(vals) < floor) & (chibar_sq > 1e-12)
                if np.any(bad):
                    raise FlowDivergenceError(
                        "running w00 denominator vanishes on the pibar support"
                    )
                out = chibar_sq / np.where(np.abs(vals) < floor, 1.0, vals)
                return out[..., None, None]
            inv = np.linalg.inv(vals)
            return chibar_sq[..., None, None] * inv

        return insertion

    eye = np.eye(d, dtype=complex)
    return WickPlan(
        vertices=vertices,
        insertion=insertion_factory,
        end_left=eye,
        end_right=eye,
        g_eff=1.0,
        rho=rho,
        internal=cfg.internal_modes or _default_internal(seq),
        l_max=cfg.l_max,
    )


def _default_internal(seq: KernelSequence) -> ModeSet:
    from .fock import gauss_radial_modes

    k = seq.k_grid()
    n = int(k.size) if k.size else 16
    return gauss_radial_modes(max(8, min(n, 24)))


def flow_step(seq: KernelSequence, cfg: WickConfig) -> KernelSequence:
    """One application of the renormalization map to a field-only sequence.

    Every produced kernel is materialized onto its grid (no chained
    evaluators): otherwise each step would re-run the quadratures of all
    previous steps and the cost would compound exponentially.
    """
    plan = _flow_plan(seq, cfg)
    rho = cfg.rho
    rank = seq.rank
    cfg_grid = replace(cfg, exact_fn_orders=())
    out = wick_recombine(plan, cfg_grid, lam=0.0, k_out=seq.k_grid(), mu=seq.mu)

    w00_prev = seq.w00
    corr00 = plan.correction_fn(0, 0, 0.0)

    def w00_full(r):
        r = np.asarray(r, dtype=float)
        base = w00_prev.eval_points(rho * r) / rho
        chi_sq = smooth_cutoff_chi1(r) ** 2
        corr = corr00(r)
        if rank == 1:
            return base + chi_sq * corr
        return base + chi_sq[..., None, None] * corr

    r00 = chebyshev_points(cfg.nr00, 0.0, cfg.r_max)
    k00 = kernel_from_fn(0, 0, w00_full, r_grid=r00, rank=rank)
    kernels = dict(out.kernels)
    kernels[(0, 0)] = Kernel(0, 0, k00.r_grid, k00.k_grid, k00.values, fn=None, rank=rank)
    return KernelSequence(
        kernels=kernels, mu=seq.mu, xi=seq.xi, max_mn=cfg.max_mn,
        discarded_norm=seq.discarded_norm + out.discarded_norm, rank=rank,
    )


def flow(seq: KernelSequence, n_steps: int, rho: float,
         cfg: Optional[WickConfig] = None, alpha_max: float = None,
         beta_max: float = 0.5, gamma_max: float = 1.0):
    """Iterate the renormalization map, recording contraction diagnostics.

    Raises FlowDivergenceError (with the partial trace attached) when the
    sequence leaves the working polydisc or a running denominator closes.
    """
    cfg = cfg or WickConfig(rho=rho)
    if cfg.rho != rho:
        cfg = replace(cfg, rho=rho)
    if alpha_max is None:
        alpha_max = 0.5 * rho
    records = []
    prev_gamma = None
    current = seq
    from .kernels import _block_abs, seq_norm

    for step in range(1, n_steps + 1):
        try:
            current = flow_step(current, cfg)
        except FlowDivergenceError as err:
            raise FlowDivergenceError(str(err), trace=FlowTrace(records)) from None
        gamma = seq_norm(current, "interaction", s=1)
        inter0 = seq_norm(current, "interaction", s=0)
        w00_0 = current.w00.at_zero()
        alpha = float(_block_abs(np.asarray(w00_0), current.rank))
        dv = current.w00.r_derivative_grid()
        if current.rank > 1:
            beta = float(np.max(_block_abs(dv - np.eye(current.rank), current.rank)))
        else:
            beta = float(np.max(np.abs(dv - 1.0)))
        ratio = gamma / prev_gamma if prev_gamma not in (None, 0.0) else np.nan
        b_value = inter0 / (rho * (1 - 2 * current.xi) ** 2)
        contraction_flag = bool(
            np.isfinite(ratio) and ratio > 64.0 * max(b_value, 1e-300) * rho**current.mu
        )
        discard_flag = bool(current.discarded_norm > 0.1 * max(gamma, 1e-300))
        records.append(FlowRecord(
            step=step, alpha=alpha, beta=beta, gamma=gamma,
            w00_at_0=complex(np.asarray(w00_0).reshape(-1)[0]),
            interaction_norm=inter0, discarded_norm=current.discarded_norm,
            ratio=float(ratio) if np.isfinite(ratio) else 0.0,
            b_value=b_value, contraction_flag=contraction_flag,
            discard_flag=discard_flag,
        ))
        if alpha > alpha_max or beta > beta_max or gamma > gamma_max:
            raise FlowDivergenceError(
                f"polydisc exit at step {step}: alpha={alpha:.3e} beta={beta:.3e} "
                f"gamma={gamma:.3e}",
                trace=FlowTrace(records),
            )
        prev_gamma = gamma
    return FlowTrace(records), current
