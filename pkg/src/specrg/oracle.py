"""Brute-force ground truth: dense eigensolves, branch tracking, closed forms."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

DENSE_CAP = 4096


class OracleError(RuntimeError):
    pass


class TrackingError(OracleError):
    pass


@dataclass
class Spectrum:
    values: np.ndarray             # sorted by real part
    vectors: np.ndarray | None     # columns matched to values
    max_residual: float


def exact_spectrum(matrix, hermitian: bool | None = None, vectors: bool = True,
                   cap: int = DENSE_CAP) -> Spectrum:
    """Full dense spectrum sorted by real part, with eigenpair residuals."""
    m = np.asarray(getattr(matrix, "entries", matrix), dtype=complex)
    if m.shape[0] > cap:
        raise OracleError(f"matrix dimension {m.shape[0]} exceeds the dense cap {cap}")
    if hermitian is None:
        hermitian = np.allclose(m, m.conj().T, atol=1e-12)
    if hermitian:
        vals, vecs = np.linalg.eigh(m)
        vals = vals.astype(complex)
    else:
        vals, vecs = scipy.linalg.eig(m)
    order = np.argsort(vals.real, kind="stable")
    vals, vecs = vals[order], vecs[:, order]
    scale = max(1.0, np.linalg.norm(m, 2))
    resid = np.linalg.norm(m @ vecs - vecs * vals, axis=0)
    max_resid = float(np.max(resid)) / scale
    if max_resid > 1e-10:
        raise OracleError(f"eigenpair residual {max_resid:.2e} exceeds 1e-10")
    return Spectrum(values=vals, vectors=vecs if vectors else None, max_residual=max_resid)


@dataclass
class Branch:
    parameters: list
    values: list
    vectors: list
    crossings: list  # parameter indices where the sorted position changed


def track_eigenvalue(family, start_value, start_vector, path) -> Branch:
    """Follow one eigenvalue branch of family(t) along `path` by overlap matching.

    Flags a crossing whenever the branch changes its position in the
    real-part-sorted spectrum; raises when the overlap match is ambiguous.
    """
    vec = np.asarray(start_vector, dtype=complex)
    vec = vec / np.linalg.norm(vec)
    value = complex(start_value)
    branch = Branch(parameters=[], values=[], vectors=[], crossings=[])
    last_pos = None
    for step, t in enumerate(path):
        spec = exact_spectrum(family(t), hermitian=False)
        overlaps = np.abs(vec.conj() @ spec.vectors) / np.linalg.norm(spec.vectors, axis=0)
        pick = int(np.argmax(overlaps))
        if overlaps[pick] < 0.5:
            raise TrackingError(
                f"branch ambiguity at parameter {t!r}: best overlap {overlaps[pick]:.3f}"
            )
        value = spec.values[pick]
        vec = spec.vectors[:, pick] / np.linalg.norm(spec.vectors[:, pick])
        if last_pos is not None and pick != last_pos:
            branch.crossings.append(step)
        last_pos = pick
        branch.parameters.append(t)
        branch.values.append(value)
        branch.vectors.append(vec)
    return branch


def displaced_oscillator_energy(omega: float, c: float) -> float:
    """Exact ground energy of omega a*a + c (a + a*): the Bogoliubov shift -c^2/omega."""
    if omega <= 0:
        raise OracleError("omega must be positive")
    return -(c**2) / omega


def truncation_convergence(build_matrix, n_max_values) -> list:
    """Ground energies of build_matrix(n_max) along increasing truncations."""
    return [float(np.min(exact_spectrum(build_matrix(n), vectors=False).values.real))
            for n in n_max_values]
