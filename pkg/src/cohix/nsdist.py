"""Nussbaum-Szkola distributions and the classical reductions they support.

For a state pair (rho, sigma) with spectral decompositions
rho = sum_x r_x |v_x><v_x| and sigma = sum_y s_y |u_y><u_y|, the attached
joint distributions are P(x,y) = r_x |<v_x|u_y>|^2 and
Q(x,y) = s_y |<v_x|u_y>|^2.  They reproduce the quantum relative entropy
and variance of the pair, and tie the dephased tripartite identities
together at the classical level.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError, InfiniteDivergence, LayoutError
from .linalg import DensityMatrix, PureState, eigh, partial_trace, reorder_factors
from . import entropy as ent
from .channels import dephase
from . import sdp as sdpmod


@dataclass
class JointDistribution:
    """Nonnegative weights over (x, y) index pairs."""

    weights: dict  # (x, y) -> float
    x_label: str = "x"
    y_label: str = "y"

    def __post_init__(self):
        for k, w in self.weights.items():
            if w < -1e-12:
                raise DomainError(f"negative weight {w} at {k}")

    def total(self) -> float:
        return float(sum(self.weights.values()))

    def aligned_arrays(self, other: "JointDistribution"):
        keys = sorted(set(self.weights) | set(other.weights))
        p = np.array([self.weights.get(k, 0.0) for k in keys])
        q = np.array([other.weights.get(k, 0.0) for k in keys])
        return p, q, keys

    def to_json_dict(self) -> dict:
        return {f"({k[0]},{k[1]})": float(w) for k, w in sorted(self.weights.items())}


def ns_pair(rho, sigma) -> tuple[JointDistribution, JointDistribution]:
    """The Nussbaum-Szkola distributions of a state pair."""
    r = rho.mat if isinstance(rho, DensityMatrix) else np.asarray(rho, dtype=complex)
    s = sigma.mat if isinstance(sigma, DensityMatrix) else np.asarray(sigma, dtype=complex)
    if r.shape != s.shape:
        raise DomainError("ns_pair requires equal dimensions")
    wr, vr = eigh(r)
    ws, vs = eigh(s)
    ov = np.abs(vr.conj().T @ vs) ** 2  # |<v_x|u_y>|^2
    p, q = {}, {}
    for x in range(len(wr)):
        for y in range(len(ws)):
            o = ov[x, y]
            if o < 1e-16 and wr[x] * o < 1e-16 and ws[y] * o < 1e-16:
                continue
            p[(x, y)] = max(float(wr[x]), 0.0) * float(o)
            q[(x, y)] = max(float(ws[y]), 0.0) * float(o)
    return JointDistribution(p), JointDistribution(q)


def classical_D_V(P: JointDistribution, Q: JointDistribution) -> tuple[float, float]:
    """Classical relative entropy and variance in base 2."""
    p, q, _ = P.aligned_arrays(Q)
    d = 0.0
    m2 = 0.0
    for pi, qi in zip(p, q):
        if pi <= 1e-15:
            continue
        if qi <= 1e-15:
            raise InfiniteDivergence("P puts mass outside supp(Q)")
        z = math.log2(pi / qi)
        d += pi * z
        m2 += pi * z * z
    return d, max(m2 - d * d, 0.0)


def dephased_tripartite(psi: PureState, r_label: str = "R", a_label: str = "A",
                        b_label: str = "B") -> dict:
    """All the reduced states entering the tripartite reduction identities."""
    labels = set(psi.layout.labels)
    if {r_label, a_label, b_label} != labels:
        raise LayoutError(f"layout {psi.layout.labels} must carry {r_label},{a_label},{b_label}")
    full = psi.to_density()
    rho_ab = reorder_factors(partial_trace(full, [a_label, b_label]), [a_label, b_label])
    deph_ab = dephase(rho_ab, b_label)
    sigma_full = dephase(full, b_label)
    sigma_br = reorder_factors(partial_trace(sigma_full, [b_label, r_label]),
                               [b_label, r_label])
    sigma_r = partial_trace(sigma_full, [r_label])
    return {
        "rho_AB": rho_ab,
        "dephased_rho_AB": deph_ab,
        "sigma_BR": sigma_br,
        "sigma_R": sigma_r,
    }


def verify_reduction_connections(psi: PureState, eps: float, delta: float,
                                 r_label: str = "R", a_label: str = "A",
                                 b_label: str = "B",
                                 check_hmin: bool = True) -> dict:
    """Numerically check the dephased-tripartite reduction identities.

    Reports |LHS - RHS| for the information-spectrum sign-flip identity, the
    relative-entropy negation and the variance equality, plus (optionally)
    the min-entropy lower bound through the hypothesis-testing quantity with
    its correction term.
    """
    parts = dephased_tripartite(psi, r_label, a_label, b_label)
    rho_ab = parts["rho_AB"]
    deph_ab = parts["dephased_rho_AB"]
    sigma_br = parts["sigma_BR"]
    sigma_r = parts["sigma_R"]
    d_b = sigma_br.layout.dim_of(b_label)
    d_r = sigma_br.layout.dim_of(r_label)
    one_sigma = np.kron(np.eye(d_b, dtype=complex), sigma_r.mat)

    p1, q1 = ns_pair(sigma_br.mat, one_sigma)
    p2, q2 = ns_pair(rho_ab.mat, deph_ab.mat)
    pa1, qa1, _ = p1.aligned_arrays(q1)
    pa2, qa2, _ = p2.aligned_arrays(q2)

    report: dict = {}
    # information-spectrum identity (tested away from atoms of either side)
    lhs1 = ent.ds_spectrum(pa1, qa1, eps)
    rhs1 = -ent.ds_spectrum(pa2, qa2, 1.0 - eps)
    report["ds_lhs"] = lhs1
    report["ds_rhs"] = rhs1
    report["ds_residual"] = abs(lhs1 - rhs1)
    report["ds_atoms_side1"] = ent.ds_atoms(pa1, qa1)
    report["ds_atoms_side2"] = ent.ds_atoms(pa2, qa2)

    # relative entropy negation and variance equality (the first argument of
    # the left side is compared against a non-normalized positive operator,
    # so that value is typically negative)
    d_lhs = ent.rel_entropy(sigma_br.mat, one_sigma)
    d_rhs = ent.rel_entropy(rho_ab.mat, deph_ab.mat)
    report["D_residual"] = abs(d_lhs + d_rhs)
    v_lhs = ent.rel_entropy_variance(sigma_br.mat, one_sigma)
    v_rhs = ent.rel_entropy_variance(rho_ab.mat, deph_ab.mat)
    report["V_residual"] = abs(v_lhs - v_rhs)

    # Schmidt symmetry: sigma_R and rho_AB share a spectrum
    w1 = np.sort(eigh(sigma_r.mat)[0])[::-1]
    w2 = np.sort(eigh(rho_ab.mat)[0])[::-1]
    n = min(len(w1), len(w2))
    pad1 = np.concatenate([w1, np.zeros(max(0, len(w2) - len(w1)))])
    pad2 = np.concatenate([w2, np.zeros(max(0, len(w1) - len(w2)))])
    report["schmidt_residual"] = float(np.max(np.abs(pad1 - pad2)))

    if check_hmin:
        hmin_eps = sdpmod.hmin_smooth(sigma_br.mat, d_b, d_r, eps)
        dh_val = ent.dh(rho_ab.mat, deph_ab.mat, eps * eps - 2.0 * delta).value_bits
        c = ent.correction_c_assisted(rho_ab.mat, deph_ab.mat, eps, delta)
        report["hmin_eps"] = hmin_eps
        report["hmin_dh_lower"] = dh_val - c
        report["hmin_dh_holds"] = bool(hmin_eps >= dh_val - c - 1e-9)
    return report
