import math

import numpy as np
import pytest

from cohix.channels import (ClassCertificate, KrausChannel, check_DIIO,
                            check_DIO, check_IO_given_kraus, check_MIO,
                            check_QIP, check_SI_kraus, check_SQI_kraus,
                            choi_matrix, compose, dephase, dephase_channel,
                            identity_channel, incoherent_unitary,
                            is_incoherent_kraus_op, mcs, tensor)
from cohix.errors import NumericalError, WitnessError
from cohix.linalg import (DensityMatrix, SystemLayout, haar_random_density,
                          haar_random_unitary)


def qubit_layout():
    return SystemLayout.of(("B", 2))


def hadamard_channel():
    h = np.array([[1, 1], [1, -1]], dtype=complex) / math.sqrt(2)
    return KrausChannel([h], qubit_layout(), qubit_layout())


class TestKrausChannel:
    def test_completeness_enforced(self):
        with pytest.raises(NumericalError):
            KrausChannel([np.eye(2, dtype=complex) * 0.5],
                         qubit_layout(), qubit_layout())

    def test_apply_matches_kraus_sum(self):
        ch = dephase_channel(qubit_layout(), "B")
        rho = haar_random_density(2, rank=2, seed=1, layout=qubit_layout())
        out = ch.apply(rho)
        assert np.allclose(out.mat, np.diag(np.diag(rho.mat)))

    def test_compose_and_tensor(self):
        ch = dephase_channel(qubit_layout(), "B")
        both = compose(ch, ch)
        rho = haar_random_density(2, rank=2, seed=2, layout=qubit_layout())
        assert np.allclose(both.apply(rho).mat, ch.apply(rho).mat)
        pair = tensor(identity_channel(SystemLayout.of(("A", 2))), ch)
        assert pair.in_dim == 4 and pair.out_dim == 4

    def test_choi_of_identity(self):
        j = choi_matrix(identity_channel(qubit_layout()))
        omega = np.zeros((4, 4), dtype=complex)
        for i in range(2):
            for k in range(2):
                omega[i * 2 + i, k * 2 + k] = 1.0
        assert np.allclose(j, omega)

    def test_choi_trace_is_input_dim(self):
        ch = hadamard_channel()
        assert abs(np.trace(choi_matrix(ch)).real - 2.0) < 1e-12


class TestDephase:
    def test_single_factor(self):
        lay = SystemLayout.of(("A", 2), ("B", 2))
        rho = haar_random_density(4, rank=4, seed=3, layout=lay)
        out = dephase(rho, "B")
        m = out.mat
        # off-diagonal in B zeroed, A coherences preserved
        assert abs(m[0, 1]) < 1e-14 and abs(m[2, 3]) < 1e-14
        assert abs(m[0, 2] - rho.mat[0, 2]) < 1e-14

    def test_idempotent(self):
        lay = SystemLayout.of(("B", 3))
        rho = haar_random_density(3, rank=3, seed=4, layout=lay)
        once = dephase(rho, "B")
        assert np.allclose(dephase(once, "B").mat, once.mat)

    def test_channel_form_agrees(self):
        lay = SystemLayout.of(("A", 2), ("B", 3))
        rho = haar_random_density(6, rank=6, seed=5, layout=lay)
        assert np.allclose(dephase_channel(lay, "B").apply(rho).mat,
                           dephase(rho, "B").mat)


class TestMcs:
    def test_uniform_amplitudes(self):
        psi = mcs(4)
        assert np.allclose(psi.vec, 0.5)

    def test_dephases_to_maximally_mixed(self):
        rho = mcs(3).to_density()
        assert np.allclose(dephase(rho, "B").mat, np.eye(3) / 3)


class TestIncoherentKraus:
    def test_detection(self):
        assert is_incoherent_kraus_op(np.array([[1, 0], [0, 1]]))
        assert is_incoherent_kraus_op(np.array([[0, 1], [1, 0]]))
        assert is_incoherent_kraus_op(np.array([[1, 0], [1, 0]]) / math.sqrt(2)) \
            is False  # two entries in column 0

    def test_incoherent_unitary(self):
        ch = incoherent_unitary([1, 0], [0.3, 1.2])
        assert check_DIIO(ch).verdict

    def test_bad_permutation(self):
        with pytest.raises(NumericalError):
            incoherent_unitary([0, 0], [0.0, 0.0])


class TestCertificates:
    def test_dephasing_is_everything(self):
        ch = dephase_channel(qubit_layout(), "B")
        assert check_MIO(ch).verdict
        assert check_DIO(ch).verdict
        assert check_IO_given_kraus(ch).verdict
        assert check_DIIO(ch).verdict

    def test_hadamard_fails_mio(self):
        cert = check_MIO(hadamard_channel())
        assert not cert.verdict
        assert cert.residuals["max_offdiag"] > 0.4

    def test_unitary_phase_channel_dio_not_io_shape(self):
        # a generic unitary is neither MIO nor DIO
        u = haar_random_unitary(2, seed=9)
        ch = KrausChannel([u], qubit_layout(), qubit_layout())
        assert not check_DIO(ch).verdict

    def test_qip(self):
        layab = SystemLayout.of(("A", 2), ("B", 2))
        ch = tensor(identity_channel(SystemLayout.of(("A", 2))),
                    dephase_channel(qubit_layout(), "B"))
        ch = KrausChannel(ch.kraus_ops, layab, layab)
        assert check_QIP(ch, in_b_label="B").verdict
        # a cross-system swap is not QI-preserving
        swap = np.zeros((4, 4), dtype=complex)
        for a in range(2):
            for b in range(2):
                swap[b * 2 + a, a * 2 + b] = 1.0
        sw = KrausChannel([swap], layab, layab)
        assert not check_QIP(sw, in_b_label="B").verdict

    def test_si_sqi_witness(self):
        proj = [np.diag([1.0, 0.0]).astype(complex),
                np.diag([0.0, 1.0]).astype(complex)]
        pairs = [(a, b) for a in proj for b in proj]
        layab = SystemLayout.of(("A", 2), ("B", 2))
        ch = KrausChannel([np.kron(a, b) for a, b in pairs], layab, layab,
                          witness=pairs)
        assert check_SI_kraus(ch).verdict
        assert check_SQI_kraus(ch).verdict
        # Alice-side Hadamard spoils SI but not SQI
        h = np.array([[1, 1], [1, -1]], dtype=complex) / math.sqrt(2)
        pairs2 = [(h @ a, b) for a, b in pairs]
        ch2 = KrausChannel([np.kron(a, b) for a, b in pairs2], layab, layab,
                           witness=pairs2)
        assert not check_SI_kraus(ch2).verdict
        assert check_SQI_kraus(ch2).verdict

    def test_witness_required(self):
        layab = SystemLayout.of(("A", 2), ("B", 2))
        ch = identity_channel(layab)
        with pytest.raises(WitnessError):
            check_SI_kraus(ch)
