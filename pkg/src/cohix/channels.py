"""Quantum channels, dephasing, and certified free-operation membership.

Channels are Kraus lists (out_dim x in_dim matrices) over labeled layouts.
Membership checks return ClassCertificate values whose verdicts are backed
by explicit residual norms; superoperator equalities are tested on Choi
matrices, which is an exact linear-algebra criterion.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import numpy.linalg as npl

from .errors import DimensionError, LayoutError, NumericalError, WitnessError
from .linalg import DensityMatrix, PureState, SystemLayout

_COMPLETE_TOL = 1e-10
_CHOI_TOL = 1e-9
_COL_TOL = 1e-10


@dataclass
class KrausChannel:
    """Completely positive trace-preserving map given by Kraus operators."""

    kraus_ops: list
    in_layout: SystemLayout
    out_layout: SystemLayout
    witness: list | None = None  # optional product-form witness [(A_i, B_i), ...]

    def __post_init__(self):
        self.kraus_ops = [np.asarray(k, dtype=complex) for k in self.kraus_ops]
        din, dout = self.in_layout.dim, self.out_layout.dim
        for k in self.kraus_ops:
            if k.shape != (dout, din):
                raise DimensionError(f"Kraus shape {k.shape} != ({dout},{din})")
        s = sum(k.conj().T @ k for k in self.kraus_ops)
        if npl.norm(s - np.eye(din)) > _COMPLETE_TOL * max(1.0, din):
            raise NumericalError("Kraus completeness violated")

    @property
    def in_dim(self) -> int:
        return self.in_layout.dim

    @property
    def out_dim(self) -> int:
        return self.out_layout.dim

    def apply_mat(self, mat: np.ndarray) -> np.ndarray:
        return sum(k @ mat @ k.conj().T for k in self.kraus_ops)

    def apply(self, rho: DensityMatrix) -> DensityMatrix:
        return DensityMatrix(self.apply_mat(rho.mat), self.out_layout,
                             psd_tol=max(rho.psd_tol, 1e-9))


@dataclass
class ClassCertificate:
    """Verdict of a free-operation membership check with residual evidence."""

    class_name: str
    verdict: bool
    residuals: dict = field(default_factory=dict)
    note: str = ""


def identity_channel(layout: SystemLayout) -> KrausChannel:
    return KrausChannel([np.eye(layout.dim, dtype=complex)], layout, layout)


def compose(after: KrausChannel, before: KrausChannel) -> KrausChannel:
    """Channel composition after . before."""
    if after.in_dim != before.out_dim:
        raise DimensionError("composition dimension mismatch")
    ops = [a @ b for a in after.kraus_ops for b in before.kraus_ops]
    return KrausChannel(ops, before.in_layout, after.out_layout)


def tensor(left: KrausChannel, right: KrausChannel) -> KrausChannel:
    ops = [np.kron(a, b) for a in left.kraus_ops for b in right.kraus_ops]
    in_layout = SystemLayout(left.in_layout.factors + right.in_layout.factors)
    out_layout = SystemLayout(left.out_layout.factors + right.out_layout.factors)
    return KrausChannel(ops, in_layout, out_layout)


def choi_matrix(channel: KrausChannel) -> np.ndarray:
    """J = sum_ij |i><j| (x) Lambda(|i><j|), built from the Kraus form."""
    din = channel.in_dim
    omega = np.zeros(din * din, dtype=complex)
    for i in range(din):
        omega[i * din + i] = 1.0
    j = np.zeros((din * channel.out_dim,) * 2, dtype=complex)
    eye = np.eye(din, dtype=complex)
    for k in channel.kraus_ops:
        v = np.kron(eye, k) @ omega
        j += np.outer(v, v.conj())
    return j


# ---------------------------------------------------------------------------
# Dephasing and coherence primitives


def _dephase_mask(dims, pos: int) -> np.ndarray:
    """Boolean mask keeping entries whose index at factor `pos` agrees."""
    d = int(np.prod(dims))
    idx = np.unravel_index(np.arange(d), dims)[pos]
    return idx[:, None] == idx[None, :]


def dephase_mat(mat: np.ndarray, dims, pos: int) -> np.ndarray:
    return np.where(_dephase_mask(tuple(dims), pos), mat, 0.0)


def dephase(rho: DensityMatrix, label: str) -> DensityMatrix:
    """Completely dephase one subsystem in its computational basis."""
    pos = rho.layout.index(label)
    return DensityMatrix(dephase_mat(rho.mat, rho.layout.dims, pos),
                         rho.layout, psd_tol=rho.psd_tol)


def dephase_channel(layout: SystemLayout, label: str) -> KrausChannel:
    """The dephasing map on one subsystem as an explicit Kraus channel."""
    pos = layout.index(label)
    dims = layout.dims
    d_sub = dims[pos]
    ops = []
    for i in range(d_sub):
        proj = np.zeros((d_sub, d_sub), dtype=complex)
        proj[i, i] = 1.0
        k = np.eye(1, dtype=complex)
        for p, dp in enumerate(dims):
            k = np.kron(k, proj if p == pos else np.eye(dp, dtype=complex))
        ops.append(k)
    return KrausChannel(ops, layout, layout)


def mcs(d: int, label: str = "B") -> PureState:
    """Maximally coherent state: uniform amplitudes over d basis states."""
    if d < 1:
        raise DimensionError("d must be >= 1")
    return PureState(np.full(d, 1.0 / np.sqrt(d), dtype=complex),
                     SystemLayout.of((label, d)))


def is_incoherent_kraus_op(k: np.ndarray, tol: float = _COL_TOL) -> bool:
    """True iff every column has at most one entry above tolerance."""
    k = np.asarray(k, dtype=complex)
    return bool(np.all((np.abs(k) > tol).sum(axis=0) <= 1))


def incoherent_unitary(g, theta) -> KrausChannel:
    """U = sum_b e^{i theta_b} |g(b)><b| for a permutation g and phases."""
    g = list(g)
    d = len(g)
    if sorted(g) != list(range(d)):
        raise NumericalError(f"g={g} is not a permutation")
    theta = list(theta)
    if len(theta) != d:
        raise DimensionError("phase count must match dimension")
    u = np.zeros((d, d), dtype=complex)
    for b in range(d):
        u[g[b], b] = np.exp(1j * theta[b])
    layout = SystemLayout.of(("B", d))
    return KrausChannel([u], layout, layout)


# ---------------------------------------------------------------------------
# Membership certificates


def check_MIO(channel: KrausChannel) -> ClassCertificate:
    """Maximally incoherent: every basis state maps to a diagonal state."""
    din = channel.in_dim
    worst = 0.0
    offender = None
    for b in range(din):
        e = np.zeros((din, din), dtype=complex)
        e[b, b] = 1.0
        out = channel.apply_mat(e)
        res = float(npl.norm(out - np.diag(np.diag(out))))
        if res > worst:
            worst, offender = res, b
    verdict = worst <= _CHOI_TOL
    return ClassCertificate("MIO", verdict, {"max_offdiag": worst},
                            "" if verdict else f"basis state {offender} gains coherence")


def check_DIO(channel: KrausChannel) -> ClassCertificate:
    """Dephasing-covariant: Delta . Lambda = Lambda . Delta on Choi matrices."""
    din, dout = channel.in_dim, channel.out_dim
    j = choi_matrix(channel)
    # dephasing the output acts on the out factor of the Choi matrix;
    # dephasing the input corresponds to dephasing the in factor
    left = dephase_mat(j, (din, dout), 1)   # J(Delta . Lambda)
    right = dephase_mat(j, (din, dout), 0)  # J(Lambda . Delta)
    res = float(npl.norm(left - right))
    return ClassCertificate("DIO", res <= _CHOI_TOL, {"choi_residual": res})


def check_IO_given_kraus(channel: KrausChannel) -> ClassCertificate:
    """Incoherent relative to the supplied Kraus decomposition."""
    bad = [i for i, k in enumerate(channel.kraus_ops)
           if not is_incoherent_kraus_op(k)]
    verdict = not bad
    return ClassCertificate(
        "IO", verdict, {"offending_kraus": bad},
        "given-decomposition verdict" + ("" if verdict else f"; offenders {bad}"))


def check_DIIO(channel: KrausChannel) -> ClassCertificate:
    dio = check_DIO(channel)
    io = check_IO_given_kraus(channel)
    res = dict(dio.residuals)
    res.update(io.residuals)
    return ClassCertificate("DIIO", dio.verdict and io.verdict, res,
                            "given-decomposition verdict")


def _qip_choi_residual(channel: KrausChannel, in_b_label: str, out_b_label: str) -> float:
    pre = dephase_channel(channel.in_layout, in_b_label)
    post = dephase_channel(channel.out_layout, out_b_label)
    a = compose(channel, pre)
    b = compose(post, a)
    return float(npl.norm(choi_matrix(a) - choi_matrix(b)))


def check_QIP(channel: KrausChannel, in_b_label: str = "B",
              out_b_label: str | None = None) -> ClassCertificate:
    """Quantum-incoherent preserving: (id (x) Delta_B)-fixed states map to
    (id (x) Delta_B')-fixed states, tested as a Choi identity."""
    out_b_label = in_b_label if out_b_label is None else out_b_label
    res = _qip_choi_residual(channel, in_b_label, out_b_label)
    return ClassCertificate("QIP", res <= _CHOI_TOL, {"choi_residual": res})


def _check_product_witness(channel: KrausChannel, require_a_incoherent: bool,
                           name: str) -> ClassCertificate:
    if channel.witness is None:
        raise WitnessError(f"{name} check requires a product-form Kraus witness")
    pairs = [(np.asarray(a, dtype=complex), np.asarray(b, dtype=complex))
             for a, b in channel.witness]
    din = channel.in_dim
    s = sum(np.kron(a, b).conj().T @ np.kron(a, b) for a, b in pairs)
    comp_res = float(npl.norm(s - np.eye(din)))
    bad_b = [i for i, (_, b) in enumerate(pairs) if not is_incoherent_kraus_op(b)]
    bad_a = []
    if require_a_incoherent:
        bad_a = [i for i, (a, _) in enumerate(pairs) if not is_incoherent_kraus_op(a)]
    verdict = comp_res <= _COMPLETE_TOL * max(1.0, din) and not bad_b and not bad_a
    return ClassCertificate(
        name, verdict,
        {"completeness": comp_res, "incoherent_B_offenders": bad_b,
         "incoherent_A_offenders": bad_a},
        "witness-decomposition verdict")


def check_SI_kraus(channel: KrausChannel) -> ClassCertificate:
    """Separable incoherent: product Kraus witness with both sides incoherent."""
    return _check_product_witness(channel, True, "SI_kraus")


def check_SQI_kraus(channel: KrausChannel) -> ClassCertificate:
    """Separable quantum-incoherent: product witness, Bob side incoherent."""
    return _check_product_witness(channel, False, "SQI_kraus")
