import numpy as np
import pytest

from specrg.fock import build_basis, free_field_hamiltonian
from specrg.hamiltonian import assemble_gh, complex_deform
from specrg.models import displacement_model, two_level_nelson
from specrg.oracle import (
    OracleError,
    TrackingError,
    displaced_oscillator_energy,
    exact_spectrum,
    track_eigenvalue,
    truncation_convergence,
)


class TestExactSpectrum:
    def test_diagonal(self):
        d = np.diag([3.0, -1.0, 2.0])
        spec = exact_spectrum(d)
        assert np.allclose(spec.values.real, [-1.0, 2.0, 3.0])

    def test_hf_matches_fock_example(self):
        from specrg.fock import ModeSet

        basis = build_basis(ModeSet([0.3, 0.7], [0.1, 0.1]), 2)
        spec = exact_spectrum(free_field_hamiltonian(basis))
        assert np.allclose(np.sort(spec.values.real), [0, 0.3, 0.6, 0.7, 1.0, 1.4])

    def test_deformed_free_tensor_sum(self):
        theta = 0.3j
        h = complex_deform(two_level_nelson(g=0.0, n_modes=3), theta)
        basis = build_basis(h.modes, 2)
        spec = exact_spectrum(assemble_gh(h, basis)).values
        hf = basis.field_energies
        want = np.concatenate([lam + np.exp(-theta) * hf for lam in (0.0, 0.5)])
        assert np.allclose(np.sort_complex(spec), np.sort_complex(want), atol=1e-12)

    def test_cap_enforced(self):
        with pytest.raises(OracleError):
            exact_spectrum(np.eye(10), cap=5)


class TestTrackEigenvalue:
    def test_displacement_branch(self):
        # e_0(g) = -g^2 for the single-mode displacement model
        def family(g):
            h = displacement_model(g=g)
            return assemble_gh(h, build_basis(h.modes, 14)).entries

        start = exact_spectrum(family(0.0))
        branch = track_eigenvalue(family, 0.0, start.vectors[:, 0], np.linspace(0, 0.1, 6))
        for g, v in zip(branch.parameters, branch.values):
            assert v.real == pytest.approx(-(g**2), abs=1e-8)
        assert branch.crossings == []

    def test_theta_path_keeps_bound_state(self):
        g = 0.01
        h = two_level_nelson(g=g, n_modes=8)
        basis = build_basis(h.modes, 2)

        def family(t):
            return assemble_gh(complex_deform(h, 1j * t), basis).entries

        spec0 = exact_spectrum(family(0.0))
        i0 = int(np.argmin(spec0.values.real))
        branch = track_eigenvalue(
            family, spec0.values[i0], spec0.vectors[:, i0], np.linspace(0.0, 0.3, 7)
        )
        drift = np.abs(np.array(branch.values) - branch.values[0])
        assert np.max(drift) < 1e-6  # bound state stationary while continuum rotates

    def test_crossing_detector(self):
        def family(t):
            return np.diag([t, 1.0 - t]).astype(complex)

        spec0 = exact_spectrum(family(0.0))
        branch = track_eigenvalue(
            family, spec0.values[0], spec0.vectors[:, 0], np.linspace(0, 1, 11)
        )
        assert branch.crossings  # fires at the level crossing
        assert branch.values[-1] == pytest.approx(1.0)

    def test_ambiguity_raises(self):
        # start vector spread over five eigenvectors: every overlap < 0.5
        def family(t):
            return np.diag(np.arange(5.0)) + 0j

        start = np.ones(5) / np.sqrt(5)
        with pytest.raises(TrackingError):
            track_eigenvalue(family, 0.0, start, [0.0])


class TestDisplacedOscillator:
    def test_values(self):
        assert displaced_oscillator_energy(1.0, 0.1) == pytest.approx(-0.01)
        assert displaced_oscillator_energy(1.0, 0.0) == 0.0
        assert displaced_oscillator_energy(2.0, 0.2) == pytest.approx(-0.02)

    def test_truncated_diagonalization_converges(self):
        g = 0.1
        h = displacement_model(g=g)

        def build(n_max):
            return assemble_gh(h, build_basis(h.modes, n_max)).entries

        e12 = truncation_convergence(build, [12])[0]
        assert e12 == pytest.approx(-0.01, abs=1e-12)


class TestOracleInvariants:
    def test_truncation_convergence_acceptance_models(self):
        # ground energy moves < 1e-8 when n_max increases by 2
        h = two_level_nelson(g=0.05, n_modes=6)

        def build(n_max):
            return assemble_gh(h, build_basis(h.modes, n_max)).entries

        e2, e4 = truncation_convergence(build, [2, 4])
        assert abs(e4 - e2) < 1e-8

        hd = displacement_model(g=0.1)

        def build_d(n_max):
            return assemble_gh(hd, build_basis(hd.modes, n_max)).entries

        e10, e12 = truncation_convergence(build_d, [10, 12])
        assert abs(e12 - e10) < 1e-8

    def test_combes_reality_of_bound_states(self):
        # deformed bound-state eigenvalue returns to the undeformed one
        g, nk = 0.01, 16
        h = two_level_nelson(g=g, n_modes=nk)
        basis = build_basis(h.modes, 2)
        e0 = np.min(exact_spectrum(assemble_gh(h, basis), vectors=False).values.real)
        spec = exact_spectrum(
            assemble_gh(complex_deform(h, 0.3j), basis), vectors=False
        ).values
        i = np.argmin(np.abs(spec - e0))
        assert abs(spec[i] - e0) < 1e-9
