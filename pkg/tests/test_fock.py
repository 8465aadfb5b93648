import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from specrg.fock import (
    ConfigurationError,
    ModeSet,
    build_basis,
    free_field_hamiltonian,
    gauss_radial_modes,
    ladder,
    number_operator,
)


def two_modes():
    return ModeSet(momenta=[0.3, 0.7], weights=[0.1, 0.2])


class TestBuildBasis:
    def test_vacuum_only(self):
        b = build_basis(ModeSet([1.0], [1.0]), n_max=0)
        assert b.dim == 1
        assert b.states == [(0,)]

    def test_single_mode_ladder(self):
        b = build_basis(ModeSet([1.0], [1.0]), n_max=3)
        assert b.dim == 4
        assert b.states == [(0,), (1,), (2,), (3,)]

    def test_multiset_count(self):
        # C(3+2, 2) = 10 occupation vectors with total <= 2 over 3 modes,
        # cross-checked by direct enumeration.
        b = build_basis(ModeSet([0.1, 0.2, 0.3], [1, 1, 1]), n_max=2)
        brute = {
            (i, j, k)
            for i in range(3)
            for j in range(3)
            for k in range(3)
            if i + j + k <= 2
        }
        assert b.dim == len(brute) == 10
        assert set(b.states) == brute

    def test_vacuum_first_and_graded_order(self):
        b = build_basis(two_modes(), n_max=2)
        assert b.states[0] == (0, 0)
        totals = [sum(s) for s in b.states]
        assert totals == sorted(totals)

    def test_empty_modes_rejected(self):
        with pytest.raises(ConfigurationError):
            ModeSet([], [])

    def test_invariants_enforced(self):
        with pytest.raises(ConfigurationError):
            ModeSet([0.5, 0.2], [1, 1])
        with pytest.raises(ConfigurationError):
            ModeSet([0.2, 0.5], [1, -1])


class TestLadder:
    def test_two_level_annihilator(self):
        b = build_basis(ModeSet([1.0], [1.0]), n_max=1)
        a = ladder(b, 0, "annihilate").entries
        assert np.array_equal(a, np.array([[0, 1], [0, 0]], dtype=complex))

    def test_annihilate_vacuum(self):
        b = build_basis(two_modes(), n_max=2)
        vac = b.state_vector((0, 0))
        for i in range(2):
            assert np.all(ladder(b, i, "annihilate").entries @ vac == 0)

    def test_create_is_adjoint_bitwise(self):
        b = build_basis(two_modes(), n_max=3)
        for i in range(2):
            a = ladder(b, i, "annihilate").entries
            adag = ladder(b, i, "create").entries
            assert np.array_equal(adag, a.conj().T)

    def test_ccr_same_mode_below_truncation(self):
        b = build_basis(two_modes(), n_max=3)
        keep = b.totals < b.n_max
        for i in range(2):
            a = ladder(b, i, "annihilate").entries
            comm = a @ a.conj().T - a.conj().T @ a
            block = comm[np.ix_(keep, keep)]
            # sqrt(n+1)^2 - sqrt(n)^2 is 1 only up to one ulp in floats
            assert np.allclose(block, np.eye(keep.sum()), atol=1e-14)

    def test_ccr_cross_mode_exact(self):
        b = build_basis(two_modes(), n_max=3)
        a0 = ladder(b, 0, "annihilate").entries
        a1 = ladder(b, 1, "annihilate").entries
        adag1 = ladder(b, 1, "create").entries
        # both orders lower total occupation: no truncation edge, exact zero
        assert np.array_equal(a0 @ a1 - a1 @ a0, np.zeros_like(a0))
        # mixed commutator is exactly zero below the truncation edge
        keep = b.totals < b.n_max
        comm = (a0 @ adag1 - adag1 @ a0)[np.ix_(keep, keep)]
        assert np.array_equal(comm, np.zeros_like(comm))


class TestFreeField:
    def test_vacuum_energy_zero(self):
        b = build_basis(two_modes(), n_max=2)
        hf = free_field_hamiltonian(b).entries
        assert hf[0, 0] == 0

    def test_additivity(self):
        b = build_basis(ModeSet([0.5], [1.0]), n_max=3)
        hf = free_field_hamiltonian(b).entries
        assert hf[b.index[(2,)], b.index[(2,)]] == pytest.approx(1.0)

    def test_spectrum_two_modes(self):
        b = build_basis(two_modes(), n_max=2)
        hf = free_field_hamiltonian(b).entries
        spec = sorted(np.real(np.diag(hf)))
        assert np.allclose(spec, [0.0, 0.3, 0.6, 0.7, 1.0, 1.4])

    def test_vacuum_kernel_simple_and_nonnegative(self):
        b = build_basis(two_modes(), n_max=2)
        e = np.real(np.diag(free_field_hamiltonian(b).entries))
        assert np.all(e >= 0)
        assert np.count_nonzero(e == 0) == 1

    def test_commutes_with_number(self):
        b = build_basis(two_modes(), n_max=2)
        hf = free_field_hamiltonian(b).entries
        n = number_operator(b).entries
        assert np.array_equal(hf @ n, n @ hf)


class TestNumberOperator:
    def test_values(self):
        b = build_basis(two_modes(), n_max=2)
        n = number_operator(b).entries
        assert n[0, 0] == 0
        assert n[b.index[(1, 1)], b.index[(1, 1)]] == 2

    def test_trace_single_mode(self):
        b = build_basis(ModeSet([1.0], [1.0]), n_max=3)
        assert np.trace(number_operator(b).entries) == pytest.approx(6.0)


class TestGaussRadialModes:
    def test_quadrature_integrates_k2(self):
        # weights realize int_0^1 f(k) k^2 dk
        m = gauss_radial_modes(12)
        assert np.sum(m.weights) == pytest.approx(1.0 / 3.0, rel=1e-12)
        assert np.dot(m.weights, m.momenta) == pytest.approx(1.0 / 4.0, rel=1e-10)

    def test_infrared_resolution(self):
        m = gauss_radial_modes(12)
        assert np.count_nonzero(m.momenta < 0.25) >= 5

    def test_scaled_weights_carry_jacobian(self):
        m = gauss_radial_modes(6)
        s = m.scaled(0.5)
        # int over (0, 1/2] of k^2 dk = (1/3)(1/2)^3
        assert np.sum(s.weights) == pytest.approx((0.5**3) / 3.0, rel=1e-12)


@settings(max_examples=25, deadline=None)
@given(
    n_modes=st.integers(min_value=1, max_value=3),
    n_max=st.integers(min_value=0, max_value=3),
)
def test_basis_dimension_formula(n_modes, n_max):
    # multisets of size <= n_max from n_modes symbols: C(n_modes + n_max, n_max)
    from math import comb

    momenta = np.linspace(0.2, 1.0, n_modes)
    b = build_basis(ModeSet(momenta, np.ones(n_modes)), n_max)
    assert b.dim == comb(n_modes + n_max, n_max)
    assert len(set(b.states)) == b.dim


@settings(max_examples=20, deadline=None)
@given(n_max=st.integers(min_value=1, max_value=4))
def test_hf_positive_with_simple_kernel(n_max):
    b = build_basis(ModeSet([0.2, 0.9], [1.0, 1.0]), n_max)
    e = np.real(np.diag(free_field_hamiltonian(b).entries))
    assert np.min(e) == 0 and np.sort(e)[1] > 0
