"""One-shot and asymptotic entropic quantities.

Relative entropy D and variance V, hypothesis-testing relative entropy
D_H^eps via the exact Neyman-Pearson structure, max-relative entropy D_max,
information-spectrum relative entropy D_s^eps, the spectral count theta,
the inverse normal CDF, second-order estimates and correction terms.
Logarithms are base 2 throughout.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, asdict

import numpy as np
import numpy.linalg as npl
import scipy.linalg as sla
from scipy.optimize import brentq

from .errors import DomainError, InfiniteDivergence, NumericalError
from .linalg import DensityMatrix, eigh

_SUPP_TOL = 1e-12


def _mat(x) -> np.ndarray:
    if isinstance(x, DensityMatrix):
        return x.mat
    return np.asarray(x, dtype=complex)


@dataclass
class NPResult:
    """Optimal Neyman-Pearson test for a state pair at type-I level eps.

    The test is M = P_{rho - t sigma > 0} + x * P_{rho - t sigma = 0}.
    """

    threshold_t: float
    boundary_fraction_x: float
    type1: float  # achieved tr(M rho)
    type2: float  # achieved tr(M sigma)
    value_bits: float  # -log2(type2)


@dataclass
class EntropyReport:
    """Bundle of entropic quantities for one state pair."""

    D_bits: float
    V_bits2: float
    dh_bits: float
    dmax_bits: float
    theta: int
    theta_clamped: bool
    second_order_bits: float | None = None

    def to_json_dict(self) -> dict:
        d = asdict(self)
        if d["second_order_bits"] is None:
            del d["second_order_bits"]
        return d


def _support_projector(w: np.ndarray, v: np.ndarray, tol: float) -> np.ndarray:
    cols = v[:, w > tol]
    return cols @ cols.conj().T


def _log_on_support(m: np.ndarray, tol: float) -> tuple[np.ndarray, np.ndarray]:
    """log2 of a PSD matrix on its support (zero on the kernel).

    Returns (log_matrix, support_projector).
    """
    w, v = eigh(m)
    cut = tol * max(w[-1], tol)
    keep = w > cut
    logw = np.zeros_like(w)
    logw[keep] = np.log2(w[keep])
    return (v * logw) @ v.conj().T, _support_projector(w, v, cut)


def _check_support(rho: np.ndarray, sigma_supp: np.ndarray, tol: float = 1e-10):
    d = rho.shape[0]
    leak = float(np.trace((np.eye(d) - sigma_supp) @ rho).real)
    if leak > tol:
        raise InfiniteDivergence(f"supp(rho) leaks {leak:.3e} outside supp(sigma)")


def rel_entropy(rho, sigma) -> float:
    """Quantum relative entropy D(rho||sigma) in bits."""
    r, s = _mat(rho), _mat(sigma)
    ls, psupp = _log_on_support(s, _SUPP_TOL)
    _check_support(r, psupp)
    lr, _ = _log_on_support(r, _SUPP_TOL)
    return float(np.trace(r @ (lr - ls)).real)


def rel_entropy_variance(rho, sigma) -> float:
    """Quantum information variance V(rho||sigma) in bits^2."""
    r, s = _mat(rho), _mat(sigma)
    ls, psupp = _log_on_support(s, _SUPP_TOL)
    _check_support(r, psupp)
    lr, _ = _log_on_support(r, _SUPP_TOL)
    x = lr - ls
    d = float(np.trace(r @ x).real)
    v = float(np.trace(r @ x @ x).real) - d * d
    return max(v, 0.0)


def _np_test_at(r: np.ndarray, s: np.ndarray, t: float):
    """Eigenspace split of r - t*s: returns (A, B, A_sig, B_sig, Ppos, Pzero).

    A/B are the rho-masses of the strictly-positive / zero eigenspaces,
    A_sig/B_sig the sigma-masses.
    """
    m = r - t * s
    w, v = eigh(m)
    scale = max(float(np.max(np.abs(w))), 1.0)
    tol = 1e-10 * scale
    pos = w > tol
    zero = np.abs(w) <= tol
    ppos = v[:, pos] @ v[:, pos].conj().T
    pzero = v[:, zero] @ v[:, zero].conj().T
    a = float(np.trace(ppos @ r).real)
    b = float(np.trace(pzero @ r).real)
    a_s = float(np.trace(ppos @ s).real)
    b_s = float(np.trace(pzero @ s).real)
    return a, b, a_s, b_s, ppos, pzero


def _np_result(t: float, x: float, a: float, b: float, a_s: float, b_s: float) -> NPResult:
    type1 = a + x * b
    type2 = max(a_s + x * b_s, 0.0)
    value = math.inf if type2 < 1e-300 else -math.log2(type2)
    return NPResult(float(t), float(x), float(type1), float(type2), float(value))


def dh(rho, sigma, eps: float) -> NPResult:
    """Hypothesis-testing relative entropy D_H^eps(rho||sigma).

    Exact Neyman-Pearson solution: the optimal test is the projector onto the
    positive part of rho - t*sigma plus a fraction x of the zero eigenspace,
    with t chosen so that tr(M rho) = 1 - eps.  Convention for rank-deficient
    sigma: rho-mass supported outside supp(sigma) is accepted at zero
    sigma-cost; if the whole level 1-eps fits inside ker(sigma) the type-II
    error is 0 and the value is +inf.
    """
    if not (0.0 <= eps < 1.0):
        raise DomainError(f"eps must be in [0,1), got {eps}")
    r, s = _mat(rho), _mat(sigma)
    target = 1.0 - eps

    if target >= 1.0 - 1e-15:
        # eps = 0: accept exactly the support of rho
        w, v = eigh(r)
        psupp = _support_projector(w, v, _SUPP_TOL * max(w[-1], _SUPP_TOL))
        a = float(np.trace(psupp @ r).real)
        a_s = float(np.trace(psupp @ s).real)
        return _np_result(0.0, 0.0, a, 0.0, a_s, 0.0)

    ws = eigh(s)[0]
    sigma_full_rank = ws[0] > 1e-12 * max(ws[-1], 1e-12)
    if sigma_full_rank:
        return _dh_pencil(r, s, target)
    return _dh_bisect(r, s, target)


def _dh_pencil(r: np.ndarray, s: np.ndarray, target: float) -> NPResult:
    """Fast path for positive-definite sigma.

    The acceptance mass A(t) = tr(P_{r-ts>0} r) is nonincreasing in t, smooth
    except for downward jumps exactly at the generalized eigenvalues of the
    pencil (r, s).  Binary-search those candidates for an atom solution, else
    refine on the smooth segment between two of them.
    """
    lam = sla.eigh(r, s, eigvals_only=True)
    lam = np.maximum(lam, 0.0)
    # deduplicate within a relative tolerance
    tol = 1e-9 * (abs(lam[-1]) + 1.0)
    cands: list[float] = []
    for t in lam:
        if not cands or t - cands[-1] > tol:
            cands.append(float(t))
    cache: dict[int, tuple] = {}

    def probe(k: int):
        if k not in cache:
            cache[k] = _np_test_at(r, s, cands[k])
        return cache[k]

    # first candidate index with A_k <= target (exists: A at the top is 0)
    lo, hi = 0, len(cands) - 1
    while lo < hi:
        mid = (lo + hi) // 2
        if probe(mid)[0] <= target + 1e-12:
            hi = mid
        else:
            lo = mid + 1
    k = lo
    a, b, a_s, b_s, _, _ = probe(k)
    if a <= target + 1e-12 and target <= a + b + 1e-12:
        x = 0.0 if b <= 1e-15 else min(max((target - a) / b, 0.0), 1.0)
        return _np_result(cands[k], x, a, b, a_s, b_s)
    # target lies strictly inside the smooth segment (cands[k-1], cands[k])
    t_lo = cands[k - 1] if k > 0 else 0.0
    t_hi = cands[k]

    def f(t):
        return _np_test_at(r, s, t)[0] - target

    t_star = brentq(f, t_lo, t_hi, xtol=1e-15 * (1.0 + t_hi), rtol=8.9e-16, maxiter=200)
    a, b, a_s, b_s, _, _ = _np_test_at(r, s, t_star)
    x = 0.0
    if b > 1e-15 and a <= target:
        x = min(max((target - a) / b, 0.0), 1.0)
    return _np_result(t_star, x, a, b, a_s, b_s)


def _dh_bisect(r: np.ndarray, s: np.ndarray, target: float) -> NPResult:
    """General path (sigma may be rank-deficient): monotone bisection in t."""
    ws, vs = eigh(s)
    cut = 1e-12 * max(ws[-1], 1e-12)
    pker = np.eye(s.shape[0]) - _support_projector(ws, vs, cut)
    if float(np.trace(pker @ r).real) >= target - 1e-12:
        # whole level fits inside ker(sigma): zero type-II error achievable
        return NPResult(math.inf, 0.0, target, 0.0, math.inf)
    t_hi = 1.0
    while _np_test_at(r, s, t_hi)[0] > target:
        t_hi *= 2.0
        if t_hi > 1e18:
            raise NumericalError("NP threshold search failed to bracket")
    t_lo = 0.0
    for _ in range(200):
        t_mid = 0.5 * (t_lo + t_hi)
        a, b, a_s, b_s, _, _ = _np_test_at(r, s, t_mid)
        if a <= target <= a + b:
            x = 0.0 if b <= 1e-15 else (target - a) / b
            return _np_result(t_mid, x, a, b, a_s, b_s)
        if a > target:
            t_lo = t_mid
        else:
            t_hi = t_mid
        if t_hi - t_lo < 1e-15 * (1.0 + t_hi):
            break
    a, b, a_s, b_s, _, _ = _np_test_at(r, s, t_hi)
    x = 0.0 if b <= 1e-15 else min(max((target - a) / b, 0.0), 1.0)
    return _np_result(t_hi, x, a, b, a_s, b_s)


def dh_operator(rho, sigma, eps: float) -> tuple[np.ndarray, NPResult]:
    """The optimal test operator M together with the NP result."""
    res = dh(rho, sigma, eps)
    r, s = _mat(rho), _mat(sigma)
    if math.isinf(res.threshold_t):
        ws, vs = eigh(s)
        cut = 1e-12 * max(ws[-1], 1e-12)
        m = np.eye(s.shape[0]) - _support_projector(ws, vs, cut)
        return m, res
    _, _, _, _, ppos, pzero = _np_test_at(r, s, res.threshold_t)
    if res.threshold_t == 0.0 and res.boundary_fraction_x == 0.0:
        w, v = eigh(r)
        ppos = _support_projector(w, v, _SUPP_TOL * max(w[-1], _SUPP_TOL))
        pzero = np.zeros_like(ppos)
    return ppos + res.boundary_fraction_x * pzero, res


def dmax(rho, sigma) -> float:
    """Max-relative entropy: log2 of the largest eigenvalue of
    sigma^{-1/2} rho sigma^{-1/2} (pseudo-inverse on the kernel)."""
    r, s = _mat(rho), _mat(sigma)
    ws, vs = eigh(s)
    cut = _SUPP_TOL * max(ws[-1], _SUPP_TOL)
    psupp = _support_projector(ws, vs, cut)
    _check_support(r, psupp)
    inv_sqrt = np.zeros_like(ws)
    keep = ws > cut
    inv_sqrt[keep] = 1.0 / np.sqrt(ws[keep])
    si = (vs * inv_sqrt) @ vs.conj().T
    w = eigh(si @ r @ si)[0]
    top = max(float(w[-1]), 0.0)
    if top <= 0.0:
        raise NumericalError("dmax of a zero operator")
    return float(np.log2(top))


def ds_spectrum(P, Q, eps: float) -> float:
    """Information-spectrum relative entropy of two (sub)distributions.

    D_s^eps(P||Q) = sup{ x : P[ P <= 2^x Q ] <= eps }.  Computed exactly by
    sorting the log-likelihood atoms z = log2(P/Q); the cumulative mass F(x)
    is right-continuous, so the supremum is the first atom whose cumulative
    mass exceeds eps (+inf if P puts more than 1-eps mass where Q vanishes).
    """
    if not (0.0 <= eps < 1.0):
        raise DomainError(f"eps must be in [0,1), got {eps}")
    atoms = ds_atoms(P, Q)
    for z, cum in atoms:
        if cum > eps + 1e-15:
            return z
    return math.inf


def ds_atoms(P, Q) -> list[tuple[float, float]]:
    """Sorted log-ratio atoms with cumulative P-mass (discontinuity profile)."""
    p = np.asarray(P, dtype=float).reshape(-1)
    q = np.asarray(Q, dtype=float).reshape(-1)
    if p.shape != q.shape:
        raise DomainError("P and Q must share an index set")
    pairs: dict[float, float] = {}
    for pi, qi in zip(p, q):
        if pi <= 1e-15:
            continue
        z = math.inf if qi <= 1e-15 else math.log2(pi / qi)
        pairs[z] = pairs.get(z, 0.0) + pi
    zs = sorted(pairs)
    # merge atoms that coincide within tolerance
    merged: list[tuple[float, float]] = []
    for z in zs:
        if merged and math.isfinite(z) and math.isfinite(merged[-1][0]) \
                and z - merged[-1][0] <= 1e-12 * (1.0 + abs(z)):
            merged[-1] = (merged[-1][0], merged[-1][1] + pairs[z])
        else:
            merged.append((z, pairs[z]))
    out = []
    cum = 0.0
    for z, m in merged:
        cum += m
        out.append((z, cum))
    return out


def theta(sigma, return_details: bool = False):
    """Spectral count theta(sigma) = min{2*ceil(lambda), nu}, clamped to >= 1.

    lambda is the log2 spread of the nonzero spectrum, nu the number of
    distinct nonzero eigenvalues (clustering tolerance 1e-9 * lambda_max).
    The raw formula returns 0 for flat spectra; the clamp to 1 keeps the
    log-theta penalties zero in that case and is flagged.
    """
    w = eigh(_mat(sigma))[0]
    wmax = float(w[-1])
    if wmax <= 0.0:
        raise NumericalError("theta of a zero matrix")
    nz = w[w > 1e-12 * wmax]
    lam = float(np.log2(nz[-1] / nz[0]))
    lam = max(lam, 0.0)
    nu = 1
    for i in range(1, len(nz)):
        if nz[i] - nz[i - 1] > 1e-9 * wmax:
            nu += 1
    raw = min(2 * math.ceil(lam - 1e-9), nu)
    clamped = raw < 1
    val = max(raw, 1)
    if return_details:
        return val, clamped
    return val


# Rational approximation to the inverse normal CDF (central and tail
# branches), refined with one Halley step against Phi computed from erfc.
_INC_A = (-3.969683028665376e+01, 2.209460984245205e+02, -2.759285104469687e+02,
          1.383577518672690e+02, -3.066479806614716e+01, 2.506628277459239e+00)
_INC_B = (-5.447609879822406e+01, 1.615858368580409e+02, -1.556989798598866e+02,
          6.680131188771972e+01, -1.328068155288572e+01)
_INC_C = (-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e+00,
          -2.549732539343734e+00, 4.374664141464968e+00, 2.938163982698783e+00)
_INC_D = (7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e+00,
          3.754408661907416e+00)


def normal_cdf(x: float) -> float:
    """Standard normal CDF via the complementary error function."""
    return 0.5 * math.erfc(-x / math.sqrt(2.0))


def inv_normal_cdf(p: float) -> float:
    """Inverse standard normal CDF with |Phi(result) - p| <= 1e-12."""
    if not (0.0 < p < 1.0):
        raise DomainError(f"p must be in (0,1), got {p}")
    a, b, c, d = _INC_A, _INC_B, _INC_C, _INC_D
    p_low = 0.02425
    if p < p_low:
        q = math.sqrt(-2.0 * math.log(p))
        x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) / \
            ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0)
    elif p <= 1.0 - p_low:
        q = p - 0.5
        r = q * q
        x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q / \
            (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0)
    else:
        q = math.sqrt(-2.0 * math.log(1.0 - p))
        x = -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) / \
            ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0)
    for _ in range(2):
        e = normal_cdf(x) - p
        u = e * math.sqrt(2.0 * math.pi) * math.exp(0.5 * x * x)
        x = x - u / (1.0 + 0.5 * x * u)
    return x


def second_order_estimate(D: float, V: float, eps: float, n: int) -> float:
    """n*D + sqrt(n*V) * PhiInverse(eps^2) (purified-distance convention)."""
    if V < 0:
        raise DomainError("V must be nonnegative")
    if n < 1:
        raise DomainError("n must be >= 1")
    if not (0.0 < eps < 1.0):
        raise DomainError("eps must be in (0,1)")
    shift = 0.0 if V == 0.0 else math.sqrt(n * V) * inv_normal_cdf(eps * eps)
    return n * D + shift


def _theta_logs(state, dephased) -> tuple[float, float, bool]:
    t1, c1 = theta(state, return_details=True)
    t2, c2 = theta(dephased, return_details=True)
    return math.log2(t1), math.log2(t2), (c1 or c2)


def correction_c_unassisted(rho, dephased_rho, eps: float, delta: float, eta: float) -> float:
    """Correction term for the one-shot lower bound (unassisted case)."""
    if not (0.0 < eta < eps):
        raise DomainError(f"need 0 < eta < eps, got eta={eta}, eps={eps}")
    w = (eps - eta) ** 2
    if not (0.0 < delta < min(w / 3.0, 1.0 - w)):
        raise DomainError(f"delta={delta} outside (0, min({w / 3.0}, {1.0 - w}))")
    lt1, lt2, _ = _theta_logs(rho, dephased_rho)
    return lt1 + lt2 + math.log2(w - delta) \
        - math.log2(delta**5 * eta**4 * w * (1.0 - w + delta)) + 11.0


def correction_c_assisted(rho_ab, dephased_rho_ab, eps: float, delta: float) -> float:
    """Correction term for the assisted one-shot lower bound."""
    if not (0.0 < eps < 1.0):
        raise DomainError(f"eps must be in (0,1), got {eps}")
    w = eps * eps
    if not (0.0 < delta < min(w / 3.0, 1.0 - w)):
        raise DomainError(f"delta={delta} outside (0, min({w / 3.0}, {1.0 - w}))")
    lt1, lt2, _ = _theta_logs(rho_ab, dephased_rho_ab)
    return lt1 + lt2 + math.log2(w - delta) \
        - math.log2(delta**5 * w * (1.0 - w + delta)) + 8.0
