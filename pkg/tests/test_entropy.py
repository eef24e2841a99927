import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.optimize import linprog
from scipy.special import ndtri

from cohix import entropy as ent
from cohix.errors import DomainError, InfiniteDivergence
from cohix.linalg import haar_random_density, haar_random_state, haar_random_unitary


def plus_state():
    return np.full((2, 2), 0.5, dtype=complex)


def classical_dh_lp(p, q, eps):
    """Independent LP oracle for the commuting case: min q.m subject to
    p.m >= 1 - eps, 0 <= m <= 1."""
    res = linprog(c=q, A_ub=[-np.asarray(p)], b_ub=[-(1 - eps)],
                  bounds=[(0, 1)] * len(p), method="highs")
    assert res.success
    return -math.log2(res.fun)


class TestRelEntropy:
    def test_plus_vs_dephased(self):
        assert abs(ent.rel_entropy(plus_state(), np.eye(2) / 2) - 1.0) < 1e-12
        assert abs(ent.rel_entropy_variance(plus_state(), np.eye(2) / 2)) < 1e-12

    def test_classical_hand_value(self):
        p = np.diag([0.7, 0.3]).astype(complex)
        q = np.diag([0.4, 0.6]).astype(complex)
        d = 0.7 * math.log2(0.7 / 0.4) + 0.3 * math.log2(0.3 / 0.6)
        v = (0.7 * math.log2(0.7 / 0.4) ** 2 + 0.3 * math.log2(0.3 / 0.6) ** 2
             - d * d)
        assert abs(ent.rel_entropy(p, q) - d) < 1e-12
        assert abs(ent.rel_entropy_variance(p, q) - v) < 1e-12

    def test_support_violation(self):
        rho = np.eye(2, dtype=complex) / 2
        sigma = np.diag([1.0, 0.0]).astype(complex)
        with pytest.raises(InfiniteDivergence):
            ent.rel_entropy(rho, sigma)
        with pytest.raises(InfiniteDivergence):
            ent.rel_entropy_variance(rho, sigma)

    def test_nonnegativity_on_states(self):
        for seed in range(5):
            r = haar_random_density(3, rank=3, seed=seed).mat
            s = haar_random_density(3, rank=3, seed=seed + 50).mat
            assert ent.rel_entropy(r, s) >= -1e-10
            assert ent.rel_entropy_variance(r, s) >= -1e-10


class TestDH:
    def test_pure_vs_maximally_mixed_closed_form(self):
        for eps in np.linspace(0.1, 0.9, 9):
            v = ent.dh(plus_state(), np.eye(2) / 2, float(eps)).value_bits
            assert abs(v - (1.0 - math.log2(1.0 - eps))) < 1e-9

    def test_identical_pair_closed_form(self):
        for seed in range(4):
            rho = haar_random_density(3, rank=3, seed=seed).mat
            for eps in (0.15, 0.5, 0.85):
                v = ent.dh(rho, rho, eps).value_bits
                assert abs(v - (-math.log2(1.0 - eps))) < 1e-9

    def test_eps_zero_support_test(self):
        rho = haar_random_density(3, rank=2, seed=7).mat
        sigma = haar_random_density(3, rank=3, seed=8).mat
        res = ent.dh(rho, sigma, 0.0)
        assert res.type1 >= 1.0 - 1e-10

    def test_classical_lp_oracle(self):
        rng = np.random.default_rng(11)
        for _ in range(6):
            p = rng.random(4)
            p /= p.sum()
            q = rng.random(4)
            q /= q.sum()
            eps = float(rng.uniform(0.05, 0.9))
            v = ent.dh(np.diag(p).astype(complex), np.diag(q).astype(complex),
                       eps).value_bits
            assert abs(v - classical_dh_lp(p, q, eps)) < 1e-8

    def test_np_test_feasibility(self):
        rho = haar_random_density(4, rank=4, seed=20).mat
        sigma = haar_random_density(4, rank=4, seed=21).mat
        for eps in (0.1, 0.4, 0.8):
            res = ent.dh(rho, sigma, eps)
            assert res.type1 >= 1.0 - eps - 1e-9
            assert 0.0 <= res.boundary_fraction_x <= 1.0
            assert abs(res.value_bits + math.log2(res.type2)) < 1e-9

    def test_monotone_in_eps(self):
        rho = haar_random_density(3, rank=3, seed=22).mat
        sigma = haar_random_density(3, rank=3, seed=23).mat
        vals = [ent.dh(rho, sigma, e).value_bits for e in np.linspace(0.05, 0.95, 10)]
        for a, b in zip(vals, vals[1:]):
            assert b >= a - 1e-9

    def test_singular_sigma_infinite_value(self):
        # all rho-mass outside supp(sigma) is accepted free of type-II cost
        rho = np.diag([0.8, 0.2]).astype(complex)
        sigma = np.diag([0.0, 1.0]).astype(complex)
        res = ent.dh(rho, sigma, 0.5)  # 1 - eps = 0.5 <= mass 0.8 on ker(sigma)
        assert math.isinf(res.value_bits)
        res2 = ent.dh(rho, sigma, 0.1)  # needs 0.1 of the supported atom
        assert res2.value_bits == pytest.approx(1.0, abs=1e-9)

    def test_eps_domain(self):
        with pytest.raises(DomainError):
            ent.dh(plus_state(), np.eye(2) / 2, 1.0)
        with pytest.raises(DomainError):
            ent.dh(plus_state(), np.eye(2) / 2, -0.1)

    @given(st.integers(0, 10_000))
    @settings(max_examples=20, deadline=None)
    def test_data_processing_under_unitaries(self, seed):
        rho = haar_random_density(3, rank=3, seed=seed).mat
        sigma = haar_random_density(3, rank=3, seed=seed + 1).mat
        u = haar_random_unitary(3, seed=seed + 2)
        a = ent.dh(rho, sigma, 0.3).value_bits
        b = ent.dh(u @ rho @ u.conj().T, u @ sigma @ u.conj().T, 0.3).value_bits
        assert abs(a - b) < 1e-8


class TestDmax:
    def test_identical(self):
        rho = haar_random_density(3, rank=3, seed=30).mat
        assert abs(ent.dmax(rho, rho)) < 1e-9

    def test_plus_vs_mixed(self):
        assert abs(ent.dmax(plus_state(), np.eye(2) / 2) - 1.0) < 1e-9

    def test_classical(self):
        p = np.diag([0.9, 0.1]).astype(complex)
        q = np.diag([0.5, 0.5]).astype(complex)
        assert abs(ent.dmax(p, q) - math.log2(0.9 / 0.5)) < 1e-9


class TestDsSpectrum:
    def test_two_atom_hand_case(self):
        p = np.array([0.7, 0.3])
        q = np.array([0.35, 0.65])
        # atoms: log2(2) = 1 with mass 0.7; log2(0.3/0.65) with mass 0.3
        lo = math.log2(0.3 / 0.65)
        assert ent.ds_spectrum(p, q, 0.1) == pytest.approx(lo)
        assert ent.ds_spectrum(p, q, 0.5) == pytest.approx(1.0)

    def test_atoms_merge(self):
        p = np.array([0.25, 0.25, 0.5])
        q = np.array([0.125, 0.125, 0.75])
        atoms = ent.ds_atoms(p, q)  # (value, cumulative P-mass), ascending
        assert len(atoms) == 2
        assert atoms[0][0] == pytest.approx(math.log2(0.5 / 0.75))
        assert atoms[0][1] == pytest.approx(0.5)
        assert atoms[1] == (pytest.approx(1.0), pytest.approx(1.0))


class TestTheta:
    def test_flat_spectrum_clamped(self):
        val, clamped = ent.theta(np.eye(2, dtype=complex) / 2, return_details=True)
        assert val == 1 and clamped

    def test_two_level(self):
        val, clamped = ent.theta(np.diag([0.9, 0.1]).astype(complex),
                                 return_details=True)
        assert val == 2 and not clamped

    def test_distinct_count_binds(self):
        val, _ = ent.theta(np.diag([0.5, 0.3, 0.2]).astype(complex),
                           return_details=True)
        assert val == 3

    def test_zero_eigenvalues_ignored(self):
        val, _ = ent.theta(np.diag([0.9, 0.1, 0.0]).astype(complex),
                           return_details=True)
        assert val == 2


class TestNormalQuantile:
    def test_against_scipy(self):
        for p in (1e-12, 1e-6, 0.02425, 0.3, 0.5, 0.77, 1 - 1e-6):
            assert abs(ent.inv_normal_cdf(p) - float(ndtri(p))) < 1e-8

    def test_round_trip_accuracy(self):
        for p in (1e-9, 0.01, 0.25, 0.5, 0.75, 0.99, 1 - 1e-9):
            assert abs(ent.normal_cdf(ent.inv_normal_cdf(p)) - p) <= 1e-12

    def test_domain(self):
        with pytest.raises(DomainError):
            ent.inv_normal_cdf(0.0)
        with pytest.raises(DomainError):
            ent.inv_normal_cdf(1.0)


class TestSecondOrder:
    def test_median_is_first_order(self):
        # InvPhi(1/2) = 0 at eps^2 = 1/2
        assert ent.second_order_estimate(1.5, 2.0, math.sqrt(0.5), 9) == \
            pytest.approx(13.5)

    def test_zero_variance_skips_quantile(self):
        assert ent.second_order_estimate(1.0, 0.0, 0.9, 7) == pytest.approx(7.0)

    def test_sign_of_correction(self):
        lo = ent.second_order_estimate(1.0, 1.0, 0.3, 100)  # eps^2 < 1/2
        hi = ent.second_order_estimate(1.0, 1.0, 0.9, 100)  # eps^2 > 1/2
        assert lo < 100 < hi


class TestCorrections:
    def test_frozen_values_maximally_coherent(self):
        plus = plus_state()
        dephased = np.eye(2, dtype=complex) / 2
        assert ent.correction_c_unassisted(plus, dephased, 0.5, 0.01, 0.1) == \
            pytest.approx(57.648349177668614, abs=1e-9)
        assert ent.correction_c_assisted(plus, dephased, 0.5, 0.01) == \
            pytest.approx(41.556315936151194, abs=1e-9)

    def test_parameter_ranges(self):
        plus = plus_state()
        dephased = np.eye(2, dtype=complex) / 2
        with pytest.raises(DomainError):
            ent.correction_c_unassisted(plus, dephased, 0.5, 0.2, 0.1)  # delta cap
        with pytest.raises(DomainError):
            ent.correction_c_unassisted(plus, dephased, 0.5, 0.01, 0.6)  # eta >= eps
        with pytest.raises(DomainError):
            ent.correction_c_assisted(plus, dephased, 0.5, 0.1)  # delta cap
