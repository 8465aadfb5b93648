"""Discretized kernel space for the renormalization flow.

A kernel w_{m,n}[r; k_1..k_m, kt_1..kt_n] is stored on a tensor grid:
a Chebyshev r-grid (the field-energy slot) times a shared radial k-grid,
one axis per creation/annihilation argument.  Kernels produced by the
decimation pipeline additionally carry an exact evaluator `fn` so that
operator assembly does not pay interpolation error; grid values are the
canonical representation for norms, snapshots and the flow diagnostics.

Degenerate particle levels are supported by block-valued kernels: `rank`
> 1 appends trailing (rank, rank) axes to `values`, and all norms reduce
blocks by the spectral norm.
"""

from __future__ import annotations

import cmath
import itertools
import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Optional

import numpy as np
from scipy.interpolate import PchipInterpolator


class InvalidKernelError(ValueError):
    """Kernel values contain NaN/Inf or grids are inconsistent."""


class DomainError(ValueError):
    """Operation applied outside its validity domain (strip, range, ...)."""


# -- grids --------------------------------------------------------------

def chebyshev_points(n: int, a: float, b: float) -> np.ndarray:
    """n Chebyshev-Lobatto points on [a, b], ascending (endpoints included)."""
    j = np.arange(n)
    x = np.cos(np.pi * j / (n - 1))
    return np.sort(0.5 * (a + b) + 0.5 * (b - a) * x)


def chebyshev_diff_matrix(x: np.ndarray) -> np.ndarray:
    """Differentiation matrix for an ascending Chebyshev-Lobatto grid."""
    n = x.size
    # classical Trefethen construction on cos(j pi / (n-1)), then reordered
    c = np.ones(n)
    c[0] = c[-1] = 2.0
    c *= (-1.0) ** np.arange(n)
    X = np.tile(x, (n, 1)).T
    dX = X - X.T + np.eye(n)
    D = np.outer(c, 1.0 / c) / dX
    D -= np.diag(D.sum(axis=1))
    return D


DEFAULT_NR = 16
DEFAULT_R_MAX = 4.0
DEFAULT_NR00 = 33


def default_r_grid(m: int, n: int, r_max: float = DEFAULT_R_MAX) -> np.ndarray:
    if m + n == 0:
        return chebyshev_points(DEFAULT_NR00, 0.0, r_max)
    return chebyshev_points(DEFAULT_NR, 0.0, 1.0)


# -- smooth cutoff ------------------------------------------------------

def _smoothstep(t):
    """C-infinity step: 0 for t <= 0, 1 for t >= 1 (exp-bump construction)."""
    t = np.asarray(t, dtype=float)
    lo = t <= 0.0
    hi = t >= 1.0
    mid = ~(lo | hi)
    out = np.zeros_like(t)
    out[hi] = 1.0
    tm = t[mid]
    a = np.exp(-1.0 / tm)
    b = np.exp(-1.0 / (1.0 - tm))
    out[mid] = a / (a + b)
    return out


def smooth_cutoff_chi1(r):
    """Smooth field-energy cutoff: 1 for r <= 9/10, 0 for r >= 1.

    C-infinity, monotone, with |d/dr| < 20 (the slope of the exp-bump step
    over a 0.1-wide transition window).
    """
    scalar = np.isscalar(r)
    val = 1.0 - _smoothstep((np.asarray(r, dtype=float) - 0.9) / 0.1)
    return float(val) if scalar else val


def chi_rho(r, rho: float):
    """chi_1(r / rho): smooth indicator of field energies <= rho."""
    return smooth_cutoff_chi1(np.asarray(r, dtype=float) / rho)


# -- kernels ------------------------------------------------------------

@dataclass(frozen=True)
class Kernel:
    """One coupling function w_{m,n} on its tensor grid.

    values axes: (r, k_1..k_m, kt_1..kt_n[, rank, rank]).
    fn(r, *kargs) -> values is an optional exact (vectorized, broadcasting)
    evaluator; when present it is the source of truth for off-grid points.
    """

    m: int
    n: int
    r_grid: np.ndarray
    k_grid: np.ndarray
    values: np.ndarray
    fn: Optional[Callable] = None
    rank: int = 1
    # known infrared decay |k_j|^ir_power factored out before interpolation,
    # so off-grid queries below the smallest node keep the correct vanishing
    ir_power: float = 0.0

    def __post_init__(self):
        r = np.asarray(self.r_grid, dtype=float)
        k = np.asarray(self.k_grid, dtype=float)
        v = np.asarray(self.values, dtype=complex)
        object.__setattr__(self, "r_grid", r)
        object.__setattr__(self, "k_grid", k)
        object.__setattr__(self, "values", v)
        expected = (r.size,) + (k.size,) * (self.m + self.n)
        if self.rank > 1:
            expected = expected + (self.rank, self.rank)
        if v.shape != expected:
            raise InvalidKernelError(
                f"values shape {v.shape} does not match grids {expected} for (m,n)=({self.m},{self.n})"
            )
        if not (np.all(np.isfinite(v.real)) and np.all(np.isfinite(v.imag))):
            raise InvalidKernelError("kernel values contain NaN/Inf")

    @property
    def order(self) -> int:
        return self.m + self.n

    # exact-or-interpolated evaluation -------------------------------

    def eval_mesh(self, r: np.ndarray, k_target: Optional[np.ndarray] = None) -> np.ndarray:
        """Values on the tensor mesh r x k_target^(m+n).

        Uses the exact evaluator when available, otherwise monotone-cubic
        interpolation axis by axis (affine extrapolation beyond the r-range
        of w_{0,0}, pchip extrapolation in k below the smallest grid node).
        """
        r = np.atleast_1d(np.asarray(r, dtype=float))
        if k_target is None:
            k_target = self.k_grid
        k_target = np.asarray(k_target, dtype=float)
        if self.fn is not None:
            shape = (r.size,) + (k_target.size,) * self.order
            grids = np.meshgrid(r, *([k_target] * self.order), indexing="ij")
            out = np.asarray(self.fn(*grids), dtype=complex)
            want = shape if self.rank == 1 else shape + (self.rank, self.rank)
            return np.broadcast_to(out, want).copy()
        out = self.values
        out = _interp_along(out, self.r_grid, r, axis=0)
        for ax in range(1, 1 + self.order):
            out = _interp_along(out, self.k_grid, k_target, axis=ax)
        return out

    def eval_points(self, r, *k_args) -> np.ndarray:
        """Pointwise values at broadcastable (r, k_1, ..., k_{m+n}) arrays.

        Exact through the evaluator when present; otherwise monotone-cubic
        tensor interpolation on the stored grids (r clamped to its range).
        """
        if self.fn is not None:
            out = np.asarray(self.fn(r, *k_args), dtype=complex)
            return out
        shape = np.broadcast(np.asarray(r), *[np.asarray(k) for k in k_args]).shape
        want = shape if self.rank == 1 else shape + (self.rank, self.rank)
        if self.order == 0:
            vals = self.eval_mesh(np.clip(np.asarray(r, dtype=float).ravel(), 0.0, None))
            return np.broadcast_to(vals.reshape(np.asarray(r).shape + vals.shape[1:]), want).copy()
        interp = self._point_interp()
        pts = np.stack(
            [np.broadcast_to(np.clip(r, self.r_grid[0], self.r_grid[-1]), shape).ravel()]
            + [
                np.broadcast_to(np.clip(k, self.k_grid[0], self.k_grid[-1]), shape).ravel()
                for k in k_args
            ],
            axis=-1,
        ).real
        out = interp(pts).reshape(want)
        if self.ir_power:
            factor = np.ones(shape, dtype=float)
            for k in k_args:
                factor = factor * np.broadcast_to(
                    np.clip(np.real(k), 0.0, None), shape
                ) ** self.ir_power
            out = out * (factor if self.rank == 1 else factor[..., None, None])
        return out

    def _point_interp(self):
        # cached multilinear interpolator; scattered-point queries inside the
        # flow are latency-bound, so the fast linear method is used there
        cache = getattr(self, "_interp_cache", None)
        if cache is None:
            from scipy.interpolate import RegularGridInterpolator

            grids = (self.r_grid,) + (self.k_grid,) * self.order
            vals = self.values
            if self.ir_power:
                for ax in range(1, 1 + self.order):
                    shape = [1] * vals.ndim
                    shape[ax] = self.k_grid.size
                    vals = vals / (self.k_grid**self.ir_power).reshape(shape)
            rgi = RegularGridInterpolator(grids, vals, method="linear")
            object.__setattr__(self, "_interp_cache", rgi)
            cache = rgi
        return cache

    def at_zero(self):
        """w(0...) for the (0,0) kernel: scalar (rank 1) or block."""
        if self.order != 0:
            raise InvalidKernelError("at_zero is defined for the (0,0) kernel only")
        if self.fn is not None:
            v = np.asarray(self.fn(np.zeros(1)), dtype=complex)
            v = v.reshape((-1,) if self.rank == 1 else (-1, self.rank, self.rank))[0]
            return v if self.rank > 1 else complex(v)
        # Lobatto grid includes r = 0
        v = self.values[0]
        return v if self.rank > 1 else complex(v)

    def r_derivative_grid(self) -> np.ndarray:
        """d/dr on the grid: 4th-order FD on the evaluator, else spectral."""
        if self.fn is not None:
            h = 1e-5 * max(1.0, self.r_grid[-1])
            r = self.r_grid
            rp, rm = r + h, np.maximum(r - h, 0.0)
            vp = self.eval_mesh(rp)
            vm = self.eval_mesh(rm)
            den = (rp - rm).reshape((-1,) + (1,) * (vp.ndim - 1))
            diff = vp - vm
            # componentwise real division is exact where complex division is not
            return diff.real / den + 1j * (diff.imag / den)
        D = chebyshev_diff_matrix(self.r_grid)
        return np.tensordot(D, self.values, axes=(1, 0))


def _interp_along(values, grid, target, axis):
    if grid.size == 1:
        if np.allclose(target, grid[0]):
            index = [slice(None)] * values.ndim
            index[axis] = np.zeros(target.size, dtype=int)
            return values[tuple(index)]
        raise DomainError("cannot interpolate a single-point grid off its node")
    # pchip is real-valued: interpolate the real and imaginary parts
    re = PchipInterpolator(grid, values.real, axis=axis, extrapolate=True)(target)
    im = PchipInterpolator(grid, values.imag, axis=axis, extrapolate=True)(target)
    return re + 1j * im


def kernel_from_fn(m, n, fn, r_grid=None, k_grid=None, rank=1, r_max=DEFAULT_R_MAX):
    """Build a Kernel by sampling `fn` on (default) grids, keeping the evaluator."""
    if r_grid is None:
        r_grid = default_r_grid(m, n, r_max)
    r_grid = np.asarray(r_grid, dtype=float)
    k_grid = np.asarray([] if k_grid is None else k_grid, dtype=float)
    if m + n > 0 and k_grid.size == 0:
        raise InvalidKernelError("interaction kernels need a k-grid")
    grids = np.meshgrid(r_grid, *([k_grid] * (m + n)), indexing="ij")
    vals = np.asarray(fn(*grids), dtype=complex)
    shape = (r_grid.size,) + (k_grid.size,) * (m + n)
    want = shape if rank == 1 else shape + (rank, rank)
    vals = np.broadcast_to(vals, want).copy()
    return Kernel(m, n, r_grid, k_grid, vals, fn=fn, rank=rank)


def zero_kernel(m, n, k_grid, r_grid=None, rank=1) -> Kernel:
    if rank == 1:
        return kernel_from_fn(m, n, lambda r, *k: np.zeros_like(r, dtype=complex),
                              r_grid=r_grid, k_grid=k_grid)
    shp = (rank, rank)
    return kernel_from_fn(
        m, n,
        lambda r, *k: np.zeros(np.broadcast(r, *k).shape + shp, dtype=complex),
        r_grid=r_grid, k_grid=k_grid, rank=rank,
    )


# -- symmetrization -----------------------------------------------------

def symmetrize(kernel: Kernel) -> Kernel:
    """Average over permutations within the creation and annihilation slots.

    Linear, idempotent, and the identity on already-symmetric kernels.
    """
    m, n = kernel.m, kernel.n
    if m <= 1 and n <= 1:
        return kernel
    perms_m = list(itertools.permutations(range(m)))
    perms_n = list(itertools.permutations(range(n)))

    def sym_array(values):
        acc = np.zeros_like(values)
        for pm in perms_m:
            for pn in perms_n:
                axes = (0,) + tuple(1 + p for p in pm) + tuple(1 + m + p for p in pn)
                axes += tuple(range(1 + m + n, values.ndim))
                acc += np.transpose(values, axes)
        return acc / (len(perms_m) * len(perms_n))

    new_fn = None
    if kernel.fn is not None:
        base = kernel.fn

        def new_fn(r, *kargs):
            acc = None
            for pm in perms_m:
                for pn in perms_n:
                    args = tuple(kargs[p] for p in pm) + tuple(kargs[m + p] for p in pn)
                    term = base(r, *args)
                    acc = term if acc is None else acc + term
            return acc / (len(perms_m) * len(perms_n))

    return replace(kernel, values=sym_array(kernel.values), fn=new_fn)


# -- norms --------------------------------------------------------------

def _block_abs(values, rank):
    """Pointwise magnitude: |value| for rank 1, spectral norm of the block else."""
    if rank == 1:
        return np.abs(values)
    return np.linalg.norm(values, ord=2, axis=(-2, -1))


def norm_mu_s(kernel: Kernel, mu: float, s: int) -> float:
    """Weighted sup-norm of one kernel.

    m+n >= 1:  max over argument slots j of sup |k_j|^(-mu) |w|, plus (s=1)
    the same for the r-derivative.  (0,0): |w(0)| plus (s=1) sup |dw/dr|.
    """
    if s not in (0, 1):
        raise DomainError("only s in {0, 1} norms are supported")
    if not (np.all(np.isfinite(kernel.values.real)) and np.all(np.isfinite(kernel.values.imag))):
        raise InvalidKernelError("kernel values contain NaN/Inf")
    if kernel.order == 0:
        total = float(_block_abs(np.asarray(kernel.at_zero()), kernel.rank))
        if s >= 1:
            total += float(np.max(_block_abs(kernel.r_derivative_grid(), kernel.rank)))
        return total

    # grids may carry nodes beyond |k| = 1 for assembly on rescaled mode sets;
    # the Banach norms take the sup over the unit ball only
    inside = np.where(kernel.k_grid <= 1.0 + 1e-12)[0]
    if inside.size == 0:
        return 0.0
    kin = kernel.k_grid[inside]

    def weighted_sup(values):
        for ax in range(1, 1 + kernel.order):
            values = np.take(values, inside, axis=ax)
        mags = _block_abs(values, kernel.rank)
        best = 0.0
        for slot in range(kernel.order):
            shape = [1] * mags.ndim
            shape[1 + slot] = kin.size
            w = kin.astype(float) ** (-mu)
            best = max(best, float(np.max(mags * w.reshape(shape))))
        return best

    total = weighted_sup(kernel.values)
    if s >= 1:
        total += weighted_sup(kernel.r_derivative_grid())
    return total


@dataclass(frozen=True)
class PolydiscParams:
    alpha: float
    beta: float
    gamma: float

    def __post_init__(self):
        for name in ("alpha", "beta", "gamma"):
            v = getattr(self, name)
            if not (np.isfinite(v) and v >= 0):
                raise DomainError(f"{name} must be finite and nonnegative")


@dataclass
class NormReport:
    per_kernel: dict
    seq_full: float
    seq_interaction: float
    w00_at_zero: float
    dr_w00_deviation: float


# -- kernel sequences ---------------------------------------------------

@dataclass
class KernelSequence:
    """Truncated sequence (w_{m,n})_{m+n <= max_mn} with the xi-weighted norm."""

    kernels: dict
    mu: float
    xi: float = 0.25
    max_mn: int = 2
    discarded_norm: float = 0.0
    rank: int = 1

    def __post_init__(self):
        if not (0 < self.xi < 1):
            raise DomainError("xi must lie in (0, 1)")
        if self.discarded_norm < 0:
            raise DomainError("discarded_norm must be nonnegative")
        for (m, n), ker in self.kernels.items():
            if (ker.m, ker.n) != (m, n):
                raise InvalidKernelError("kernel registered under wrong (m, n) key")
            if m + n > self.max_mn:
                raise InvalidKernelError("kernel order exceeds max_mn")

    @property
    def w00(self) -> Kernel:
        return self.kernels[(0, 0)]

    def interaction_items(self):
        return [(mn, k) for mn, k in sorted(self.kernels.items()) if sum(mn) >= 1]

    def k_grid(self) -> np.ndarray:
        for (m, n), ker in sorted(self.kernels.items()):
            if m + n >= 1:
                return ker.k_grid
        return np.array([])

    def map_kernels(self, f) -> "KernelSequence":
        return replace(self, kernels={mn: f(mn, k) for mn, k in self.kernels.items()})


def seq_norm(seq: KernelSequence, which: str = "full", s: int = 1) -> float:
    """Sum of xi^-(m+n) ||w_{m,n}||_{mu,s} over m+n >= 0 (full) or >= 1 (interaction)."""
    if which not in ("full", "interaction"):
        raise DomainError("which must be 'full' or 'interaction'")
    lo = 0 if which == "full" else 1
    total = 0.0
    for (m, n), ker in seq.kernels.items():
        if m + n >= lo:
            total += seq.xi ** (-(m + n)) * norm_mu_s(ker, seq.mu, s)
    return total


def _dr_w00_deviation(seq: KernelSequence) -> float:
    dv = seq.w00.r_derivative_grid()
    if seq.rank > 1:
        eye = np.eye(seq.rank)
        return float(np.max(_block_abs(dv - eye, seq.rank)))
    return float(np.max(np.abs(dv - 1.0)))


def norm_report(seq: KernelSequence) -> NormReport:
    per = {mn: norm_mu_s(k, seq.mu, 1) for mn, k in sorted(seq.kernels.items())}
    return NormReport(
        per_kernel=per,
        seq_full=seq_norm(seq, "full"),
        seq_interaction=seq_norm(seq, "interaction"),
        w00_at_zero=float(_block_abs(np.asarray(seq.w00.at_zero()), seq.rank)),
        dr_w00_deviation=_dr_w00_deviation(seq),
    )


def polydisc_check(seq: KernelSequence, p: PolydiscParams):
    """Membership in the polydisc: |w00(0)| <= alpha, sup|dw00/dr - 1| <= beta,
    ||w_1||_{mu,1,xi} <= gamma.  Returns (bool, NormReport)."""
    rep = norm_report(seq)
    ok = (
        rep.w00_at_zero <= p.alpha
        and rep.dr_w00_deviation <= p.beta
        and rep.seq_interaction <= p.gamma
    )
    return ok, rep


# -- scaling and dilation ----------------------------------------------

def scale_kernel(kernel: Kernel, rho: float) -> Kernel:
    """Kernel of rho^-1 S_rho(W[w]): rho^(m+n-1) w[rho r; rho k]."""
    if not (0 < rho <= 0.5):
        raise DomainError("scaling requires 0 < rho <= 1/2")
    if kernel.order and np.any(kernel.k_grid * rho > kernel.k_grid[-1] + 1e-12):
        raise DomainError("scaled momenta leave the grid range")
    pref = rho ** (kernel.order - 1)
    if kernel.fn is not None:
        base = kernel.fn

        def fn(r, *kargs):
            return pref * base(rho * np.asarray(r), *(rho * np.asarray(k) for k in kargs))

        vals = None
    else:
        fn = None
        vals = kernel.eval_mesh(rho * kernel.r_grid, rho * kernel.k_grid) * pref
    if vals is None:
        grids = np.meshgrid(kernel.r_grid, *([kernel.k_grid] * kernel.order), indexing="ij")
        vals = np.asarray(fn(*grids), dtype=complex)
        shape = (kernel.r_grid.size,) + (kernel.k_grid.size,) * kernel.order
        want = shape if kernel.rank == 1 else shape + (kernel.rank, kernel.rank)
        vals = np.broadcast_to(vals, want).copy()
    return replace(kernel, values=vals, fn=fn)


def scale_kernels(seq: KernelSequence, rho: float) -> KernelSequence:
    """Apply rho^-1 S_rho at the kernel level to a whole sequence."""
    return seq.map_kernels(lambda mn, k: scale_kernel(k, rho))


DILATION_STRIP = np.pi / 4


def dilate_kernel(kernel: Kernel, theta: complex) -> Kernel:
    """Dilated kernel: e^(-(m+n) theta) w[e^-theta r; e^-theta k].

    Each ladder-operator leg contributes e^(-3 theta / 2); folding the
    |k|^(-1/2) measure leg leaves the net per-leg factor e^(-theta).
    Requires an exact evaluator (complex arguments are off the grid).
    """
    theta = complex(theta)
    if abs(theta.imag) >= DILATION_STRIP:
        raise DomainError("theta outside the cutoff analyticity strip |Im theta| < pi/4")
    if kernel.fn is None:
        raise DomainError("dilation needs a closed-form kernel (grid-only given)")
    base = kernel.fn
    pref = cmath.exp(-kernel.order * theta)
    shrink = cmath.exp(-theta)

    def fn(r, *kargs):
        return pref * base(shrink * np.asarray(r), *(shrink * np.asarray(k) for k in kargs))

    grids = np.meshgrid(kernel.r_grid, *([kernel.k_grid] * kernel.order), indexing="ij")
    vals = np.asarray(fn(*grids), dtype=complex)
    shape = (kernel.r_grid.size,) + (kernel.k_grid.size,) * kernel.order
    want = shape if kernel.rank == 1 else shape + (kernel.rank, kernel.rank)
    vals = np.broadcast_to(vals, want).copy()
    return replace(kernel, values=vals, fn=fn)


def dilate_kernels(seq: KernelSequence, theta: complex) -> KernelSequence:
    return seq.map_kernels(lambda mn, k: dilate_kernel(k, theta))


# -- snapshots ----------------------------------------------------------

def kernel_to_json(kernel: Kernel, mu: float = 0.0) -> dict:
    flat = kernel.values.reshape(-1)
    return {
        "m": kernel.m,
        "n": kernel.n,
        "mu": mu,
        "rank": kernel.rank,
        "r_grid": kernel.r_grid.tolist(),
        "k_grid": kernel.k_grid.tolist(),
        "values": [[float(v.real), float(v.imag)] for v in flat],
    }


def kernel_from_json(obj: dict) -> Kernel:
    m, n = int(obj["m"]), int(obj["n"])
    rank = int(obj.get("rank", 1))
    r_grid = np.asarray(obj["r_grid"], dtype=float)
    k_grid = np.asarray(obj["k_grid"], dtype=float)
    flat = np.array([complex(re, im) for re, im in obj["values"]], dtype=complex)
    shape = (r_grid.size,) + (k_grid.size,) * (m + n)
    if rank > 1:
        shape = shape + (rank, rank)
    return Kernel(m, n, r_grid, k_grid, flat.reshape(shape), rank=rank)


def sequence_to_json(seq: KernelSequence) -> dict:
    return {
        "xi": seq.xi,
        "mu": seq.mu,
        "max_mn": seq.max_mn,
        "rank": seq.rank,
        "discarded_norm": seq.discarded_norm,
        "kernels": [kernel_to_json(k, seq.mu) for _, k in sorted(seq.kernels.items())],
    }


def sequence_from_json(obj: dict) -> KernelSequence:
    kernels = {}
    for kobj in obj["kernels"]:
        ker = kernel_from_json(kobj)
        kernels[(ker.m, ker.n)] = ker
    return KernelSequence(
        kernels=kernels,
        mu=float(obj["mu"]),
        xi=float(obj["xi"]),
        max_mn=int(obj["max_mn"]),
        discarded_norm=float(obj["discarded_norm"]),
        rank=int(obj.get("rank", 1)),
    )


def save_sequence(seq: KernelSequence, path) -> None:
    Path(path).write_text(json.dumps(sequence_to_json(seq)))


def load_sequence(path) -> KernelSequence:
    return sequence_from_json(json.loads(Path(path).read_text()))
