import numpy as np
import pytest

from specrg.pauli_fierz import (
    MollifierError,
    default_grids,
    pauli_fierz_transform,
)


class TestPauliFierzTransform:
    def test_f_vanishes_at_x_zero_for_odd_mollifier(self):
        x, k = default_grids()
        rep = pauli_fierz_transform("gauss", "tanh", x, k)
        # x = 0 row: phi(0) = 0 kills f
        assert np.allclose(rep.f_values[0], 0.0)

    def test_infrared_bound_finite(self):
        x, k = default_grids()
        rep = pauli_fierz_transform("gauss", "tanh", x, k)
        assert np.isfinite(rep.c1) and rep.c1 > 0
        assert np.isfinite(rep.c2) and rep.c2 > 0

    def test_bound_stable_under_refinement(self):
        x64, k64 = default_grids(64, 64)
        x128, k128 = default_grids(128, 128)
        c1_64 = pauli_fierz_transform("gauss", "tanh", x64, k64).c1
        c1_128 = pauli_fierz_transform("gauss", "tanh", x128, k128).c1
        assert c1_128 < 2.0 * c1_64
        assert c1_64 < 2.0 * c1_128

    def test_standard_pf_limit_small_argument(self):
        # phi(z) = z reproduces f = chi(k) e.x exactly (phase-free slice);
        # a bounded mollifier agrees with it to third order in sqrt|k| x
        x = np.linspace(0.0, 0.05, 8)
        k = np.linspace(1e-4, 0.02, 8)
        rep = pauli_fierz_transform("gauss", "linear", x, k)
        X, K = np.meshgrid(x, k, indexing="ij")
        want = np.exp(-(K**2)) * X
        assert np.allclose(rep.f_values, want, atol=1e-14)
        rep_t = pauli_fierz_transform("gauss", "tanh", x, k)
        assert np.allclose(rep_t.f_values, want, atol=2e-6)

    def test_linear_mollifier_chi_x_purely_transverse_growth(self):
        # for phi(z) = z the e-component of chi_x vanishes: 1 - phi' = 0
        x, k = default_grids(32, 32)
        rep = pauli_fierz_transform("gauss", "linear", x, k)
        X, K = np.meshgrid(x, k, indexing="ij")
        want = np.exp(-(K**2)) * np.sqrt(K) * (np.sqrt(K) * X)
        assert np.allclose(rep.chi_x_values, np.abs(want), atol=1e-12)

    def test_mollifier_slope_enforced(self):
        with pytest.raises(MollifierError):
            pauli_fierz_transform("gauss", (lambda z: 2 * np.tanh(z), lambda z: 2 / np.cosh(z) ** 2),
                                  *default_grids(16, 16))

    def test_potential_shift_positive_and_finite(self):
        x, k = default_grids()
        rep = pauli_fierz_transform("gauss", "tanh", x, k)
        assert np.all(rep.potential_shift >= 0)
        assert np.all(np.isfinite(rep.potential_shift))

    def test_g_kernel_bounded_in_x(self):
        # the bounded mollifier keeps the commutator kernel |k| f bounded in x,
        # where the standard (linear) choice grows linearly
        x, k = default_grids()
        rep_t = pauli_fierz_transform("gauss", "tanh", x, k)
        X, K = np.meshgrid(x, k, indexing="ij")
        assert np.all(np.abs(rep_t.g_kernel) <= np.exp(-(K**2)) * np.sqrt(K) + 1e-14)
        rep_l = pauli_fierz_transform("gauss", "linear", x, k)
        i_half, i_full = len(x) // 2, len(x) - 1
        grow = np.max(np.abs(rep_l.g_kernel[i_full])) / np.max(np.abs(rep_l.g_kernel[i_half]))
        sat = np.max(np.abs(rep_t.g_kernel[i_full])) / np.max(np.abs(rep_t.g_kernel[i_half]))
        assert grow > 1.8      # linear growth in x
        assert sat < 1.2       # saturation
