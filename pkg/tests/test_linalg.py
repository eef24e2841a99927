import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cohix.errors import DimensionError, DomainError, LayoutError, NumericalError
from cohix.linalg import (DensityMatrix, PureState, SystemLayout, eigh,
                          fidelity, fidelity_psd, haar_random_density,
                          haar_random_state, haar_random_unitary, kron,
                          partial_trace, partial_trace_mat, purified_distance,
                          purified_distance_value, purify, reorder_factors,
                          sqrt_psd)


def bell():
    v = np.zeros(4, dtype=complex)
    v[0] = v[3] = 1 / math.sqrt(2)
    return PureState(v, SystemLayout.of(("A", 2), ("B", 2)))


class TestLayout:
    def test_basics(self):
        lay = SystemLayout.of(("A", 2), ("B", 3))
        assert lay.dim == 6
        assert lay.labels == ("A", "B")
        assert lay.dims == (2, 3)
        assert lay.dim_of("B") == 3
        assert lay.index("A") == 0

    def test_duplicate_label_rejected(self):
        with pytest.raises(LayoutError):
            SystemLayout.of(("A", 2), ("A", 2))

    def test_unknown_label(self):
        lay = SystemLayout.of(("A", 2))
        with pytest.raises(LayoutError):
            lay.index("B")


class TestStates:
    def test_density_validation(self):
        lay = SystemLayout.of(("B", 2))
        with pytest.raises(NumericalError):
            DensityMatrix(np.array([[0.5, 0.5], [0.4, 0.5]]), lay)  # not Hermitian
        with pytest.raises(NumericalError):
            DensityMatrix(np.diag([1.5, -0.5]).astype(complex), lay)  # not PSD
        with pytest.raises(NumericalError):
            DensityMatrix(np.eye(2, dtype=complex), lay)  # trace 2

    def test_pure_state_norm(self):
        with pytest.raises(NumericalError):
            PureState(np.array([1.0, 1.0]), SystemLayout.of(("B", 2)))

    def test_to_density(self):
        rho = bell().to_density()
        assert abs(np.trace(rho.mat) - 1) < 1e-12
        w = eigh(rho.mat)[0]
        assert abs(w[-1] - 1.0) < 1e-12


class TestPartialTrace:
    def test_bell_marginal_maximally_mixed(self):
        rho = bell().to_density()
        ra = partial_trace(rho, ["A"])
        assert np.allclose(ra.mat, np.eye(2) / 2)

    def test_product_factorizes(self):
        a = haar_random_density(2, rank=2, seed=1, layout=SystemLayout.of(("A", 2)))
        b = haar_random_density(3, rank=3, seed=2, layout=SystemLayout.of(("B", 3)))
        ab = kron(a, b)
        assert np.allclose(partial_trace(ab, ["A"]).mat, a.mat, atol=1e-12)
        assert np.allclose(partial_trace(ab, ["B"]).mat, b.mat, atol=1e-12)

    def test_partial_trace_mat_oracle(self):
        # brute-force index-sum oracle on a random 2x3 system
        rng = np.random.default_rng(0)
        g = rng.normal(size=(6, 6)) + 1j * rng.normal(size=(6, 6))
        m = g @ g.conj().T
        expect = np.zeros((3, 3), dtype=complex)
        for i in range(3):
            for j in range(3):
                expect[i, j] = sum(m[a * 3 + i, a * 3 + j] for a in range(2))
        assert np.allclose(partial_trace_mat(m, (2, 3), [1]), expect)


class TestReorder:
    def test_swap_two_factors(self):
        a = haar_random_density(2, rank=2, seed=3, layout=SystemLayout.of(("A", 2)))
        b = haar_random_density(3, rank=2, seed=4, layout=SystemLayout.of(("B", 3)))
        ab = kron(a, b)
        ba = reorder_factors(ab, ["B", "A"])
        assert ba.layout.labels == ("B", "A")
        assert np.allclose(ba.mat, np.kron(b.mat, a.mat), atol=1e-12)

    def test_round_trip_three_factors(self):
        lay = SystemLayout.of(("X", 2), ("Y", 2), ("Z", 2))
        rho = haar_random_density(8, rank=3, seed=5, layout=lay)
        perm = reorder_factors(rho, ["Z", "X", "Y"])
        back = reorder_factors(perm, ["X", "Y", "Z"])
        assert np.allclose(back.mat, rho.mat, atol=1e-12)

    def test_marginals_preserved(self):
        lay = SystemLayout.of(("X", 2), ("Y", 3))
        rho = haar_random_density(6, rank=4, seed=6, layout=lay)
        perm = reorder_factors(rho, ["Y", "X"])
        assert np.allclose(partial_trace(perm, ["X"]).mat,
                           partial_trace(rho, ["X"]).mat, atol=1e-12)


class TestFidelity:
    def test_identical_states(self):
        rho = haar_random_density(3, rank=3, seed=7)
        assert abs(fidelity(rho, rho) - 1.0) < 1e-12

    def test_orthogonal_pure(self):
        lay = SystemLayout.of(("B", 2))
        a = DensityMatrix(np.diag([1.0, 0.0]).astype(complex), lay)
        b = DensityMatrix(np.diag([0.0, 1.0]).astype(complex), lay)
        assert fidelity(a, b) < 1e-12
        assert abs(purified_distance(a, b) - 1.0) < 1e-12

    def test_pure_vs_mixed_closed_form(self):
        # F(|psi><psi|, rho) = sqrt(<psi|rho|psi>)
        rho = haar_random_density(4, rank=4, seed=8)
        psi = haar_random_state(4, seed=9)
        f = fidelity_psd(psi.to_density().mat, rho.mat)
        assert abs(f - math.sqrt((psi.vec.conj() @ rho.mat @ psi.vec).real)) < 1e-10

    def test_commuting_closed_form(self):
        p = np.array([0.6, 0.3, 0.1])
        q = np.array([0.2, 0.5, 0.3])
        f = fidelity_psd(np.diag(p).astype(complex), np.diag(q).astype(complex))
        assert abs(f - np.sum(np.sqrt(p * q))) < 1e-12

    def test_symmetry_and_unitary_invariance(self):
        a = haar_random_density(3, rank=2, seed=10).mat
        b = haar_random_density(3, rank=3, seed=11).mat
        u = haar_random_unitary(3, seed=12)
        assert abs(fidelity_psd(a, b) - fidelity_psd(b, a)) < 1e-12
        assert abs(fidelity_psd(u @ a @ u.conj().T, u @ b @ u.conj().T)
                   - fidelity_psd(a, b)) < 1e-10

    @given(st.integers(0, 10_000))
    @settings(max_examples=25, deadline=None)
    def test_fidelity_in_unit_interval(self, seed):
        a = haar_random_density(3, rank=(seed % 3) + 1, seed=seed).mat
        b = haar_random_density(3, rank=(seed % 2) + 2, seed=seed + 1).mat
        f = fidelity_psd(a, b)
        assert -1e-12 <= f <= 1.0 + 1e-9

    def test_purified_distance_snaps_roundoff(self):
        assert purified_distance_value(1.0 - 1e-16) == 0.0
        assert purified_distance_value(1.0) == 0.0
        assert abs(purified_distance_value(0.6) - 0.8) < 1e-12


class TestPurify:
    def test_marginal_recovers_state(self):
        rho = haar_random_density(3, rank=2, seed=13)
        psi = purify(rho, ref_label="R")
        full = psi.to_density()
        back = partial_trace(full, ["B"])
        assert np.allclose(back.mat, rho.mat, atol=1e-10)

    def test_reference_dim_equals_rank(self):
        rho = haar_random_density(4, rank=2, seed=14)
        psi = purify(rho, ref_label="R")
        assert psi.layout.dim_of("R") == 2

    def test_deterministic(self):
        rho = haar_random_density(3, rank=3, seed=15)
        assert np.array_equal(purify(rho).vec, purify(rho).vec)


class TestRandomAndMisc:
    def test_haar_determinism(self):
        assert np.array_equal(haar_random_state(4, seed=1).vec,
                              haar_random_state(4, seed=1).vec)
        assert not np.array_equal(haar_random_state(4, seed=1).vec,
                                  haar_random_state(4, seed=2).vec)

    def test_unitary_is_unitary(self):
        u = haar_random_unitary(5, seed=3)
        assert np.allclose(u @ u.conj().T, np.eye(5), atol=1e-12)

    def test_sqrt_psd(self):
        a = haar_random_density(3, rank=3, seed=16).mat
        s = sqrt_psd(a)
        assert np.allclose(s @ s, a, atol=1e-12)

    def test_dimension_guard(self):
        with pytest.raises(DimensionError):
            haar_random_state(5000, seed=0)
