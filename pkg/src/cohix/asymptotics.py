"""Tensor-power (i.i.d.) computations: exact finite-n hypothesis-testing
values, one-shot sandwich bounds per copy count, second-order expansion
curves, and strong-converse error curves.

The exact route forms explicit tensor powers, so copy counts are desk
scale; commuting pairs short-circuit to a classical likelihood-ratio sort
over the product distribution, which reaches much larger n.
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass

import numpy as np
import numpy.linalg as npl
import scipy.linalg as sla
from scipy.optimize import brentq

from .errors import DimensionError, DomainError, NumericalError
from .linalg import DensityMatrix, eigh
from . import entropy as ent

MAX_EXACT_DIM = 4096
MAX_CLASSICAL_ATOMS = 1 << 20
MAX_SYMMETRIC_N = 256

CSV_HEADER = "# cohix curve v1"
CSV_COLUMNS = ("n", "eps", "lower_bits", "upper_bits", "exact_bits",
               "second_order_bits", "eps_lower_bound")


@dataclass
class CurvePoint:
    n: int
    eps: float | None = None
    lower_bits: float | None = None
    upper_bits: float | None = None
    exact_bits: float | None = None
    second_order_bits: float | None = None
    epsilon_lower_bound: float | None = None
    flags: tuple = ()

    def __post_init__(self):
        if (self.lower_bits is not None and self.upper_bits is not None
                and math.isfinite(self.lower_bits) and math.isfinite(self.upper_bits)
                and self.lower_bits > self.upper_bits + 1e-9):
            raise NumericalError(
                f"lower bound {self.lower_bits} exceeds upper {self.upper_bits}")

    def row(self) -> tuple:
        def fmt(v):
            return "" if v is None else repr(float(v))
        return (str(self.n), fmt(self.eps), fmt(self.lower_bits),
                fmt(self.upper_bits), fmt(self.exact_bits),
                fmt(self.second_order_bits), fmt(self.epsilon_lower_bound))


def curve_to_csv(points) -> str:
    out = io.StringIO()
    out.write(CSV_HEADER + "\n")
    out.write(",".join(CSV_COLUMNS) + "\n")
    for p in points:
        out.write(",".join(p.row()) + "\n")
    return out.getvalue()


# ---------------------------------------------------------------------------
# Exact finite-n hypothesis testing


def _as_mat(x) -> np.ndarray:
    return x.mat if isinstance(x, DensityMatrix) else np.asarray(x, dtype=complex)


def classical_dh(p: np.ndarray, q: np.ndarray, eps: float) -> float:
    """Classical D_H^eps in bits: likelihood-ratio sort plus a randomized
    boundary atom (the exact Neyman-Pearson optimum)."""
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    with np.errstate(divide="ignore"):
        return classical_dh_log(np.log(np.maximum(p, 0.0)),
                                np.log(np.maximum(q, 0.0)), eps)


def classical_dh_log(logp: np.ndarray, logq: np.ndarray, eps: float) -> float:
    """Classical D_H^eps from natural-log atom masses; the type-II error is
    accumulated in log space so it survives far below float underflow."""
    if not (0.0 <= eps < 1.0):
        raise DomainError(f"eps must be in [0,1), got {eps}")
    logp = np.asarray(logp, dtype=float)
    logq = np.asarray(logq, dtype=float)
    keep = (logp > -math.inf) | (logq > -math.inf)
    logp, logq = logp[keep], logq[keep]
    order = np.argsort(-(logp - logq), kind="stable")
    logp, logq = logp[order], logq[order]
    target = 1.0 - eps
    cum_p = 0.0
    acc: list[float] = []  # log q-masses of accepted atoms
    for lp, lq in zip(logp, logq):
        pi = math.exp(lp) if lp > -math.inf else 0.0
        if cum_p + pi >= target - 1e-15:
            frac = 0.0 if pi <= 0.0 else (target - cum_p) / pi
            frac = min(max(frac, 0.0), 1.0)
            if frac > 0.0 and lq > -math.inf:
                acc.append(lq + math.log(frac))
            break
        cum_p += pi
        if lq > -math.inf:
            acc.append(lq)
    if not acc:
        return math.inf
    m = max(acc)
    log_beta = m + math.log(sum(math.exp(a - m) for a in acc))
    return -log_beta / math.log(2.0)


def _simultaneous_spectra(r: np.ndarray, s: np.ndarray):
    """Joint spectra (p_i, q_i) of a commuting Hermitian pair, or None."""
    scale = max(npl.norm(r), npl.norm(s), 1e-30)
    if npl.norm(r @ s - s @ r) > 1e-12 * scale:
        return None
    # an irrational mixture generically splits all shared eigenspaces
    _, v = eigh(r + math.sqrt(2.0) * s)
    rd = v.conj().T @ r @ v
    sd = v.conj().T @ s @ v
    if (npl.norm(rd - np.diag(np.diag(rd))) > 1e-10 * scale
            or npl.norm(sd - np.diag(np.diag(sd))) > 1e-10 * scale):
        return None
    return np.diag(rd).real.copy(), np.diag(sd).real.copy()


def _iid_type_classes(p1: np.ndarray, q1: np.ndarray, n: int):
    """Aggregate the product distributions p1^n, q1^n into type classes.

    The likelihood ratio is constant on each type class, so the n-fold
    product collapses to C(n+d-1, d-1) atoms instead of d^n.  Returns
    natural-log masses (-inf for zero mass) so huge n stays representable."""
    d = len(p1)
    logs_p = np.where(p1 > 0.0, np.log(np.where(p1 > 0.0, p1, 1.0)), -math.inf)
    logs_q = np.where(q1 > 0.0, np.log(np.where(q1 > 0.0, q1, 1.0)), -math.inf)
    p_atoms, q_atoms = [], []
    log_fact = [math.lgamma(k + 1) for k in range(n + 1)]

    def rec(pos, remaining, counts):
        if pos == d - 1:
            counts = counts + [remaining]
            log_mult = log_fact[n] - sum(log_fact[k] for k in counts)
            lp = sum(k * lgp for k, lgp in zip(counts, logs_p) if k)
            lq = sum(k * lgq for k, lgq in zip(counts, logs_q) if k)
            p_atoms.append(-math.inf if lp == -math.inf else log_mult + lp)
            q_atoms.append(-math.inf if lq == -math.inf else log_mult + lq)
            return
        for k in range(remaining + 1):
            rec(pos + 1, remaining - k, counts + [k])

    rec(0, n, [])
    return np.array(p_atoms), np.array(q_atoms)


def _sym_power(g: np.ndarray, k: int) -> np.ndarray:
    """Matrix of the k-th symmetric power of a 2x2 operator in the
    orthonormal occupation basis of the symmetric subspace."""
    a, b = g[0, 0], g[0, 1]
    c, d = g[1, 0], g[1, 1]
    out = np.zeros((k + 1, k + 1), dtype=complex)
    for m in range(k + 1):
        first = [math.comb(m, i) * a ** i * c ** (m - i) for i in range(m + 1)]
        second = [math.comb(k - m, i) * b ** i * d ** (k - m - i)
                  for i in range(k - m + 1)]
        poly = np.zeros(k + 1, dtype=complex)
        for i, fi in enumerate(first):
            for jj, se in enumerate(second):
                poly[i + jj] += fi * se
        for p in range(k + 1):
            out[p, m] = poly[p] * math.sqrt(math.comb(k, m) / math.comb(k, p))
    return out


def _qubit_power_blocks(m: np.ndarray, n: int):
    """Block decomposition of the n-fold tensor power of a 2x2 Hermitian
    operator: m^(x)n is unitarily equivalent to a direct sum over spins j of
    det(m)^((n-2j)/2) Sym^(2j)(m), each with the standard multiplicity."""
    det = float(npl.det(m).real)
    det = max(det, 0.0)
    blocks = []
    for two_j in range(n % 2, n + 1, 2):
        k = (n - two_j) // 2
        mult = math.comb(n, k) - (math.comb(n, k - 1) if k >= 1 else 0)
        scale = det ** k if k else 1.0
        if mult <= 0 or (scale == 0.0 and k > 0):
            if mult > 0:
                blocks.append((np.zeros((two_j + 1, two_j + 1), dtype=complex),
                               mult))
            continue
        blk = _sym_power(m, two_j) * scale
        blocks.append(((blk + blk.conj().T) / 2, mult))
    return blocks


def _dh_qubit_symmetric(r: np.ndarray, s: np.ndarray, n: int,
                        eps: float) -> float:
    """Exact D_H^eps(r^(x)n || s^(x)n) for qubit pairs with positive definite
    sigma, via the permutation-symmetric block structure (polynomial in n)."""
    target = 1.0 - eps
    pairs = [(a, b, m) for (a, m), (b, _) in
             zip(_qubit_power_blocks(r, n), _qubit_power_blocks(s, n))]

    def masses(t):
        a = bz = a_s = bz_s = 0.0
        for blk_r, blk_s, mult in pairs:
            w, v = npl.eigh(blk_r - t * blk_s)
            tol = 1e-12 * max(float(np.max(np.abs(w))), 1e-300)
            pos = w > tol
            zer = np.abs(w) <= tol
            if pos.any():
                vp = v[:, pos]
                a += mult * float(np.einsum("ij,jk,ki->", vp.conj().T,
                                            blk_r, vp).real)
                a_s += mult * float(np.einsum("ij,jk,ki->", vp.conj().T,
                                              blk_s, vp).real)
            if zer.any():
                vz = v[:, zer]
                bz += mult * float(np.einsum("ij,jk,ki->", vz.conj().T,
                                             blk_r, vz).real)
                bz_s += mult * float(np.einsum("ij,jk,ki->", vz.conj().T,
                                               blk_s, vz).real)
        return a, bz, a_s, bz_s

    cands: list[float] = []
    for blk_r, blk_s, _ in pairs:
        try:
            lam = sla.eigh(blk_r, blk_s, eigvals_only=True)
        except npl.LinAlgError:
            continue
        cands.extend(float(x) for x in np.maximum(lam, 0.0))
    cands.sort()
    dedup: list[float] = []
    tol = 1e-9 * (abs(cands[-1]) + 1.0)
    for t in cands:
        if not dedup or t - dedup[-1] > tol:
            dedup.append(t)
    cache: dict[int, tuple] = {}

    def probe(k):
        if k not in cache:
            cache[k] = masses(dedup[k])
        return cache[k]

    lo, hi = 0, len(dedup) - 1
    while lo < hi:
        mid = (lo + hi) // 2
        if probe(mid)[0] <= target + 1e-12:
            hi = mid
        else:
            lo = mid + 1
    k = lo
    a, bz, a_s, bz_s = probe(k)
    if a <= target + 1e-12 and target <= a + bz + 1e-12:
        x = 0.0 if bz <= 1e-15 else min(max((target - a) / bz, 0.0), 1.0)
        beta = max(a_s + x * bz_s, 0.0)
        return math.inf if beta < 1e-300 else -math.log2(beta)
    t_lo = dedup[k - 1] if k > 0 else 0.0
    t_hi = dedup[k]
    t_star = brentq(lambda t: masses(t)[0] - target, t_lo, t_hi,
                    xtol=1e-15 * (1.0 + t_hi), rtol=8.9e-16, maxiter=200)
    a, bz, a_s, bz_s = masses(t_star)
    x = 0.0
    if bz > 1e-15 and a <= target:
        x = min(max((target - a) / bz, 0.0), 1.0)
    beta = max(a_s + x * bz_s, 0.0)
    return math.inf if beta < 1e-300 else -math.log2(beta)


def _kron_power(m: np.ndarray, n: int) -> np.ndarray:
    out = np.array([[1.0 + 0.0j]])
    for _ in range(n):
        out = np.kron(out, m)
    return out


def iid_dh(rho, sigma, n: int, eps: float) -> float:
    """D_H^eps(rho^(x)n || sigma^(x)n) in bits, exact.

    Commuting pairs collapse to type classes of the product distribution;
    non-commuting qubit pairs use the permutation-symmetric block structure
    of the tensor power; everything else forms the explicit tensor power."""
    if n < 1:
        raise DomainError("n must be >= 1")
    r, s = _as_mat(rho), _as_mat(sigma)
    spectra = _simultaneous_spectra(r, s)
    if spectra is not None:
        p1, q1 = spectra
        d = len(p1)
        if n * math.log(d) <= math.log(MAX_CLASSICAL_ATOMS):
            p, q = np.array([1.0]), np.array([1.0])
            for _ in range(n):
                p = np.kron(p, np.maximum(p1, 0.0))
                q = np.kron(q, np.maximum(q1, 0.0))
            return classical_dh(p, q, eps)
        if math.comb(n + d - 1, d - 1) <= MAX_CLASSICAL_ATOMS:
            logp, logq = _iid_type_classes(np.maximum(p1, 0.0),
                                           np.maximum(q1, 0.0), n)
            return classical_dh_log(logp, logq, eps)
        raise DimensionError(f"product distribution too large: {d}^{n}")
    if n * math.log(r.shape[0]) <= math.log(MAX_EXACT_DIM):
        return ent.dh(_kron_power(r, n), _kron_power(s, n), eps).value_bits
    if (r.shape[0] == 2 and n <= MAX_SYMMETRIC_N
            and float(np.min(npl.eigvalsh(s))) > 1e-12):
        if not (0.0 <= eps < 1.0):
            raise DomainError(f"eps must be in [0,1), got {eps}")
        return _dh_qubit_symmetric(r, s, n, eps)
    raise DimensionError(
        f"tensor power dimension {r.shape[0]}^{n} exceeds {MAX_EXACT_DIM}")


# ---------------------------------------------------------------------------
# One-shot sandwich on tensor powers


def _dephase_full(m: np.ndarray) -> np.ndarray:
    return np.diag(np.diag(m)).astype(complex)


def default_schedules(eps: float, n: int) -> tuple[float, float]:
    """The 1/sqrt(n)-style (eta, delta) schedule used for finite-n bounds:
    both shrink so the bound's argument approaches eps^2 while the
    correction term stays O(log n)."""
    eta = eps / (2.0 * math.sqrt(n))
    cap = min((eps - eta) ** 2 / 3.0, 1.0 - (eps - eta) ** 2)
    delta = 0.5 * cap / math.sqrt(n)
    return eta, delta


def sandwich_check_unassisted(rho, eps: float, n: int,
                              eta: float | None = None,
                              delta: float | None = None) -> CurvePoint:
    """Per-copy-count evaluation of the one-shot distillation sandwich
    against the fully dephased state: lower = D_H^{(eps-eta)^2 - 2 delta} - c,
    upper = D_H^{eps^2}; asserts lower <= upper."""
    r = _as_mat(rho)
    if eta is None or delta is None:
        eta_d, delta_d = default_schedules(eps, n)
        eta = eta_d if eta is None else eta
        delta = delta_d if delta is None else delta
    if not (0.0 < eta < eps < 1.0):
        raise DomainError(f"need 0 < eta < eps < 1, got eta={eta}, eps={eps}")
    cap = min((eps - eta) ** 2 / 3.0, 1.0 - (eps - eta) ** 2)
    if not (0.0 < delta < cap):
        raise DomainError(f"delta={delta} outside (0, {cap})")
    if float(r.shape[0]) ** n > MAX_EXACT_DIM:
        raise DimensionError("tensor power exceeds the exact-computation guard")
    r_n = _kron_power(r, n)
    d_n = _dephase_full(r_n)  # dephasing each copy == dephasing the product basis
    lo_eps = (eps - eta) ** 2 - 2.0 * delta
    lower_dh = (math.inf if lo_eps >= 1.0
                else ent.dh(r_n, d_n, max(lo_eps, 0.0)).value_bits)
    c = ent.correction_c_unassisted(r_n, d_n, eps, delta, eta)
    upper = ent.dh(r_n, d_n, eps * eps).value_bits
    lower = lower_dh - c
    return CurvePoint(n=n, eps=eps, lower_bits=lower, upper_bits=upper)


# ---------------------------------------------------------------------------
# Second-order curves


def second_order_curve(rho, eps: float, n_list, assisted: bool = False,
                       b_label: str = "B") -> list:
    """Per-n exact values, one-shot bounds, and the normal-approximation
    estimate n D + sqrt(n V) InvPhi(eps^2) against the dephased state."""
    if not (0.0 < eps < 1.0):
        raise DomainError(f"eps must be in (0,1), got {eps}")
    if assisted:
        if not isinstance(rho, DensityMatrix):
            raise DomainError("assisted curves need a labeled DensityMatrix")
        from .channels import dephase
        r = rho.mat
        d = dephase(rho, b_label).mat
    else:
        r = _as_mat(rho)
        d = _dephase_full(r)
    big_d = ent.rel_entropy(r, d)
    big_v = ent.rel_entropy_variance(r, d)
    points = []
    for n in n_list:
        estimate = ent.second_order_estimate(big_d, big_v, eps, n)
        exact = lower = upper = None
        flags = []
        if float(r.shape[0]) ** n <= MAX_EXACT_DIM:
            exact = iid_dh(r, d, n, eps * eps)
            eta, delta = default_schedules(eps, n)
            if assisted:
                lo_eps = eps * eps - 2.0 * delta
                r_n, d_n = _kron_power(r, n), _kron_power(d, n)
                lower = (ent.dh(r_n, d_n, max(lo_eps, 0.0)).value_bits
                         - ent.correction_c_assisted(r_n, d_n, eps, delta))
                upper = ent.dh(r_n, d_n, eps * eps).value_bits
            else:
                pt = sandwich_check_unassisted(r, eps, n, eta, delta)
                lower, upper = pt.lower_bits, pt.upper_bits
        else:
            flags.append("exact-skipped")
        points.append(CurvePoint(n=n, eps=eps, lower_bits=lower,
                                 upper_bits=upper, exact_bits=exact,
                                 second_order_bits=estimate,
                                 flags=tuple(flags)))
    return points


# ---------------------------------------------------------------------------
# Strong converse


def strong_converse_curve(rho, rate: float, n_list) -> list:
    """Error floor of any distillation protocol sequence at a fixed rate:
    eps_lower = sqrt(Phi(sqrt(n / V) (rate - C))) with the O(log n) offset
    neglected (flag "g-neglected"); degenerate V = 0 yields a step."""
    r = _as_mat(rho)
    d = _dephase_full(r)
    c_r = ent.rel_entropy(r, d)
    v_r = ent.rel_entropy_variance(r, d)
    points = []
    for n in n_list:
        if v_r <= 1e-12:
            if rate > c_r + 1e-12:
                bound = 1.0
            elif rate < c_r - 1e-12:
                bound = 0.0
            else:
                bound = 1.0 / math.sqrt(2.0)
            flags = ("g-neglected", "V-degenerate")
        else:
            arg = math.sqrt(n / v_r) * (rate - c_r)
            bound = math.sqrt(ent.normal_cdf(arg))
            flags = ("g-neglected",)
        points.append(CurvePoint(n=n, epsilon_lower_bound=bound, flags=flags))
    return points
