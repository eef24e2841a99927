"""Dense semidefinite programming on small Hermitian LMI blocks.

Problems are stated in dual LMI form: maximize c'y subject to
F0 - sum_i y_i F_i >= 0 for each block, plus optional scalar linear
inequalities G y <= h.  Complex Hermitian blocks are embedded as real
symmetric matrices [[Re, -Im], [Im, Re]] (dimension doubled; positive
semidefiniteness is preserved exactly).

This module provides the SDP formulations used as cross-checks and
optimizer oracles: the hypothesis-testing program, the fidelity program,
conditional min-entropy (plain and smoothed), and the security-distance
program that also exports its optimizer.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from cvxopt import matrix as cvxmat
from cvxopt import solvers as cvxsolvers

from .errors import DimensionError, DomainError, SolverError
from .linalg import DensityMatrix, eigh

MAX_BLOCK = 128


@dataclass
class SDPProblem:
    """maximize c'y  s.t.  F0^(k) - sum_i y_i F_i^(k) >= 0 per block k,
    and optionally G y <= h entrywise."""

    c: np.ndarray
    blocks: list  # list of (F0, [F_1, ..., F_m]) with complex Hermitian F's
    G: np.ndarray | None = None
    h: np.ndarray | None = None
    Aeq: np.ndarray | None = None
    beq: np.ndarray | None = None

    def __post_init__(self):
        self.c = np.asarray(self.c, dtype=float).reshape(-1)
        for f0, fs in self.blocks:
            if f0.shape[0] > MAX_BLOCK:
                raise DimensionError(f"block dim {f0.shape[0]} exceeds {MAX_BLOCK}")
            if len(fs) != len(self.c):
                raise DimensionError("per-variable matrix count mismatch")


@dataclass
class SDPSolution:
    y: np.ndarray
    primal_objective: float
    dual_objective: float
    duality_gap: float
    status: str  # Optimal | MaxIter | Infeasible


def _embed(m: np.ndarray) -> np.ndarray:
    """Real symmetric embedding of a complex Hermitian matrix."""
    re, im = m.real, m.imag
    return np.block([[re, -im], [im, re]])


def solve(p: SDPProblem) -> SDPSolution:
    """Solve the problem with an interior-point method; deterministic."""
    m = len(p.c)
    cv = cvxmat(-p.c.reshape(m, 1))
    gs, hs = [], []
    for f0, fs in p.blocks:
        e0 = _embed(np.asarray(f0, dtype=complex))
        n2 = e0.shape[0]
        cols = np.zeros((n2 * n2, m))
        for i, fi in enumerate(fs):
            cols[:, i] = _embed(np.asarray(fi, dtype=complex)).reshape(-1, order="F")
        gs.append(cvxmat(cols))
        hs.append(cvxmat(e0))
    gl = hl = None
    if p.G is not None:
        gl = cvxmat(np.asarray(p.G, dtype=float))
        hl = cvxmat(np.asarray(p.h, dtype=float).reshape(-1, 1))
    aeq = beq = None
    if p.Aeq is not None:
        aeq = cvxmat(np.asarray(p.Aeq, dtype=float))
        beq = cvxmat(np.asarray(p.beq, dtype=float).reshape(-1, 1))
    # Tolerance ladder: boundary optima (rank-deficient data) can make the
    # tightest setting stall or divide by zero inside the scaling update;
    # a slightly looser rung still meets the certified gap bound.
    rungs = [
        {"abstol": 1e-8, "reltol": 1e-8, "feastol": 1e-9},
        {"abstol": 1e-7, "reltol": 1e-7, "feastol": 1e-8},
        {"abstol": 1e-7, "reltol": 1e-7, "feastol": 1e-7},
    ]
    saved = dict(cvxsolvers.options)
    sol = None
    last_exc = None
    try:
        for rung in rungs:
            cvxsolvers.options.clear()
            cvxsolvers.options.update({"show_progress": False, "maxiters": 500})
            cvxsolvers.options.update(rung)
            try:
                sol = cvxsolvers.sdp(cv, Gl=gl, hl=hl, Gs=gs, hs=hs, A=aeq, b=beq)
            except (ValueError, ZeroDivisionError, ArithmeticError) as exc:
                last_exc = exc
                continue
            if sol["status"] == "optimal" or "infeasible" in sol["status"]:
                break
    finally:
        cvxsolvers.options.clear()
        cvxsolvers.options.update(saved)
    if sol is None:
        raise SolverError(f"interior-point failure: {last_exc}") from last_exc
    status = sol["status"]
    if status == "optimal":
        mapped = "Optimal"
    elif "infeasible" in status:
        mapped = "Infeasible"
    else:
        mapped = "MaxIter"
    if sol["x"] is None:
        if mapped == "Infeasible":
            return SDPSolution(np.zeros(m), math.nan, math.nan, math.nan, mapped)
        raise SolverError(f"solver returned no iterate (status {status})")
    y = np.asarray(sol["x"]).reshape(-1)
    primal = float(p.c @ y)
    dual = -float(sol["dual objective"]) if sol["dual objective"] is not None else primal
    gap = abs(float(sol["gap"])) if sol["gap"] is not None else math.inf
    if mapped == "MaxIter" and gap <= 1e-7 * (1.0 + abs(primal)):
        # iterate meets the certified gap bound even though the solver's own
        # stopping rule did not fire
        mapped = "Optimal"
    return SDPSolution(y, primal, dual, gap, mapped)


# ---------------------------------------------------------------------------
# Hermitian parameterizations


def hermitian_basis(d: int) -> list[np.ndarray]:
    """Real basis of d x d Hermitian matrices: E_ii, symmetric and
    antisymmetric off-diagonal pairs (unnormalized)."""
    basis = []
    for i in range(d):
        e = np.zeros((d, d), dtype=complex)
        e[i, i] = 1.0
        basis.append(e)
    for i in range(d):
        for j in range(i + 1, d):
            e = np.zeros((d, d), dtype=complex)
            e[i, j] = e[j, i] = 1.0
            basis.append(e)
            e = np.zeros((d, d), dtype=complex)
            e[i, j] = 1j
            e[j, i] = -1j
            basis.append(e)
    return basis


def assemble_hermitian(y: np.ndarray, d: int) -> np.ndarray:
    out = np.zeros((d, d), dtype=complex)
    for coef, b in zip(y, hermitian_basis(d)):
        out += coef * b
    return out


def general_basis(din: int, dout: int | None = None) -> list[np.ndarray]:
    """Real basis of complex matrices: E_ij and i*E_ij."""
    dout = din if dout is None else dout
    basis = []
    for i in range(dout):
        for j in range(din):
            e = np.zeros((dout, din), dtype=complex)
            e[i, j] = 1.0
            basis.append(e)
            basis.append(1j * e)
    return basis


def assemble_general(y: np.ndarray, din: int, dout: int | None = None) -> np.ndarray:
    dout = din if dout is None else dout
    out = np.zeros((dout, din), dtype=complex)
    for coef, b in zip(y, general_basis(din, dout)):
        out += coef * b
    return out


def _require_optimal(sol: SDPSolution, what: str) -> SDPSolution:
    if sol.status == "Infeasible":
        raise SolverError(f"{what}: problem reported infeasible")
    if sol.status != "Optimal":
        raise SolverError(f"{what}: no optimal certificate (status {sol.status}, gap {sol.duality_gap:.2e})")
    return sol


def _mat(x) -> np.ndarray:
    return x.mat if isinstance(x, DensityMatrix) else np.asarray(x, dtype=complex)


# ---------------------------------------------------------------------------
# Formulations


def _support_isometry(m: np.ndarray) -> np.ndarray:
    """d x r isometry onto the support of a PSD matrix."""
    w, v = eigh(m)
    keep = w > 1e-12 * max(float(w[-1]), 1e-12)
    return v[:, keep]


def dh_sdp(rho, sigma, eps: float, return_operator: bool = False):
    """SDP value of the hypothesis-testing program:
    minimize tr(M sigma) s.t. 0 <= M <= I, tr(M rho) >= 1 - eps.
    Returns the value in bits (-log2 of the optimum)."""
    if not (0.0 <= eps < 1.0):
        raise DomainError(f"eps must be in [0,1), got {eps}")
    r, s = _mat(rho), _mat(sigma)
    d = r.shape[0]
    basis = hermitian_basis(d)
    m = len(basis)
    c = np.array([-float(np.trace(b @ s).real) for b in basis])
    zero = np.zeros((d, d), dtype=complex)
    eye = np.eye(d, dtype=complex)
    blocks = [
        (zero, [-b for b in basis]),       # M >= 0
        (eye, [b.copy() for b in basis]),  # M <= I
    ]
    grow = np.array([[-float(np.trace(b @ r).real) for b in basis]])
    h = np.array([-(1.0 - eps)])
    sol = _require_optimal(solve(SDPProblem(c, blocks, grow, h)), "dh_sdp")
    type2 = max(-sol.primal_objective, 0.0)
    if 1e-300 < type2 < 1e-2:
        # a small optimum leaves the solver's absolute gap tolerance
        # dominating the log of the value; re-solve with the objective
        # rescaled to order one so the relative tolerance governs
        scale = 1.0 / type2
        sol2 = _require_optimal(solve(SDPProblem(c * scale, blocks, grow, h)),
                                "dh_sdp")
        type2b = max(-sol2.primal_objective, 0.0) / scale
        if type2b > 0.0:
            type2, sol = type2b, sol2
    bits = math.inf if type2 < 1e-300 else -math.log2(type2)
    if return_operator:
        return bits, assemble_hermitian(sol.y, d)
    return bits


def fidelity_sdp(rho, sigma) -> float:
    """Fidelity as the SDP maximum of Re tr X over [[rho, X],[X', sigma]] >= 0.

    The off-diagonal variable is restricted to supp(rho) x supp(sigma),
    which is lossless and keeps the feasible region strictly solvable."""
    r, s = _mat(rho), _mat(sigma)
    v = _support_isometry(r)
    w = _support_isometry(s)
    rr = v.conj().T @ r @ v
    ss = w.conj().T @ s @ w
    dr, ds_ = rr.shape[0], ss.shape[0]
    basis = general_basis(ds_, dr)  # dr x ds_ matrices
    c = np.array([float(np.trace(v @ b @ w.conj().T).real) for b in basis])
    n = dr + ds_
    f0 = np.zeros((n, n), dtype=complex)
    f0[:dr, :dr] = rr
    f0[dr:, dr:] = ss
    fs = []
    for b in basis:
        f = np.zeros((n, n), dtype=complex)
        f[:dr, dr:] = -b
        f[dr:, :dr] = -b.conj().T
        fs.append(f)
    sol = _require_optimal(solve(SDPProblem(c, [(f0, fs)])), "fidelity_sdp")
    return float(sol.primal_objective)


def hmin(rho_bm, d_b: int, d_r: int) -> float:
    """Conditional min-entropy H_min(B|R) of a state on B (major) x R:
    -log2 min{ tr sigma_R : 1_B (x) sigma_R >= rho_BR }."""
    r = _mat(rho_bm)
    if r.shape[0] != d_b * d_r:
        raise DimensionError("dimension mismatch in hmin")
    basis = hermitian_basis(d_r)
    c = np.array([-float(np.trace(b).real) for b in basis])
    eye_b = np.eye(d_b, dtype=complex)
    blocks = [
        (-r, [-np.kron(eye_b, b) for b in basis]),  # 1 (x) sigma - rho >= 0
        (np.zeros((d_r, d_r), dtype=complex), [-b for b in basis]),  # sigma >= 0
    ]
    sol = _require_optimal(solve(SDPProblem(c, blocks)), "hmin")
    tr_sigma = max(-sol.primal_objective, 1e-300)
    return -math.log2(tr_sigma)


def hmin_smooth(rho_bm, d_b: int, d_r: int, eps: float) -> float:
    """Smooth conditional min-entropy H_min^eps(B|R) over the
    purified-distance ball (subnormalized candidates allowed)."""
    if not (0.0 <= eps < 1.0):
        raise DomainError(f"eps must be in [0,1), got {eps}")
    d = d_b * d_r
    if d > 16:
        raise DimensionError(f"hmin_smooth guard: dim(BR)={d} > 16")
    if eps == 0.0:
        return hmin(rho_bm, d_b, d_r)
    r = _mat(rho_bm)
    w = _support_isometry(r)  # X-variable columns live in supp(rho)
    rk = w.conj().T @ r @ w
    k = rk.shape[0]
    hb_big = hermitian_basis(d)      # rho-tilde coordinates
    gb = general_basis(k, d)         # X coordinates (d x k)
    hb_r = hermitian_basis(d_r)      # sigma_R coordinates
    n_t, n_x, n_s = len(hb_big), len(gb), len(hb_r)
    m = n_t + n_x + n_s

    def split(fs_t, fs_x, fs_s):
        return list(fs_t) + list(fs_x) + list(fs_s)

    c = np.zeros(m)
    c[n_t + n_x:] = [-float(np.trace(b).real) for b in hb_r]  # maximize -tr sigma

    zero_d = np.zeros((d, d), dtype=complex)
    eye_b = np.eye(d_b, dtype=complex)

    # block 1: 1 (x) sigma - rho_tilde >= 0
    b1 = (zero_d,
          split([b.copy() for b in hb_big],
                [zero_d] * n_x,
                [-np.kron(eye_b, b) for b in hb_r]))
    # block 2: [[rho_tilde, X], [X', rho restricted to its support]] >= 0
    n2 = d + k
    f0 = np.zeros((n2, n2), dtype=complex)
    f0[d:, d:] = rk
    fs_t = []
    for b in hb_big:
        f = np.zeros((n2, n2), dtype=complex)
        f[:d, :d] = -b
        fs_t.append(f)
    fs_x = []
    for b in gb:
        f = np.zeros((n2, n2), dtype=complex)
        f[:d, d:] = -b
        f[d:, :d] = -b.conj().T
        fs_x.append(f)
    b2 = (f0, split(fs_t, fs_x, [np.zeros((n2, n2), dtype=complex)] * n_s))
    # block 3: rho_tilde >= 0
    b3 = (zero_d, split([-b for b in hb_big], [zero_d] * n_x, [zero_d] * n_s))
    # block 4: sigma >= 0
    zr = np.zeros((d_r, d_r), dtype=complex)
    b4 = (zr, split([zr] * n_t, [zr] * n_x, [-b for b in hb_r]))

    # linear: tr rho_tilde <= 1 ; Re tr(X W') >= sqrt(1 - eps^2)
    g = np.zeros((2, m))
    g[0, :n_t] = [float(np.trace(b).real) for b in hb_big]
    g[1, n_t:n_t + n_x] = [-float(np.trace(b @ w.conj().T).real) for b in gb]
    h = np.array([1.0, -math.sqrt(max(1.0 - eps * eps, 0.0))])

    sol = _require_optimal(
        solve(SDPProblem(c, [b1, b2, b3, b4], g, h)), "hmin_smooth")
    # primal objective is -tr sigma (we maximized it); recover tr sigma
    tr_sigma = max(-sol.primal_objective, 1e-300)
    return -math.log2(tr_sigma)


def dsec_sdp(rho_xm, d_x: int, d_r: int):
    """Best fidelity of rho_XR (X major) to pi_X (x) sigma_R over states
    sigma_R.  Returns (F*, sigma*_R)."""
    r = _mat(rho_xm)
    d = d_x * d_r
    v = _support_isometry(r)  # X-variable rows live in supp(rho)
    rr = v.conj().T @ r @ v
    dr = rr.shape[0]
    gb = general_basis(d, dr)  # dr x d matrices
    hb_r = hermitian_basis(d_r)
    n_x, n_s = len(gb), len(hb_r)
    m = n_x + n_s
    c = np.zeros(m)
    # objective: maximize Re tr(V Y) over the restricted variable Y
    c[:n_x] = [float(np.trace(v @ b).real) for b in gb]

    pi_x = np.eye(d_x, dtype=complex) / d_x
    n = dr + d
    f0 = np.zeros((n, n), dtype=complex)
    f0[:dr, :dr] = rr
    fs = []
    for b in gb:
        f = np.zeros((n, n), dtype=complex)
        f[:dr, dr:] = -b
        f[dr:, :dr] = -b.conj().T
        fs.append(f)
    for b in hb_r:
        f = np.zeros((n, n), dtype=complex)
        f[dr:, dr:] = -np.kron(pi_x, b)
        fs.append(f)
    big = (f0, fs)
    zr = np.zeros((d_r, d_r), dtype=complex)
    psd = (zr, [zr] * n_x + [-b for b in hb_r])
    tr_row = np.zeros(m)
    tr_row[n_x:] = [float(np.trace(b).real) for b in hb_r]
    sol = _require_optimal(
        solve(SDPProblem(c, [big, psd], Aeq=tr_row.reshape(1, -1), beq=np.array([1.0]))),
        "dsec_sdp")
    sigma = assemble_hermitian(sol.y[n_x:], d_r)
    sigma = (sigma + sigma.conj().T) / 2
    w, v = eigh(sigma)
    w = np.maximum(w, 0.0)
    sigma = (v * w) @ v.conj().T
    tr = float(np.trace(sigma).real)
    if tr > 0:
        sigma /= tr
    fstar = float(min(max(sol.primal_objective, 0.0), 1.0))
    return fstar, sigma
