"""Dense complex linear algebra, tensor-layout bookkeeping and fidelity primitives.

All matrices are dense, row-major numpy arrays of complex128.  Dimensions are
capped at MAX_DIM as a desk-scale guard.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import numpy.linalg as npl

from .errors import DimensionError, DomainError, LayoutError, NumericalError

MAX_DIM = 4096

_HERM_TOL = 1e-9


@dataclass(frozen=True)
class SystemLayout:
    """Ordered list of labeled tensor factors, e.g. (("B", 2), ("R", 2))."""

    factors: tuple[tuple[str, int], ...]

    def __post_init__(self):
        labels = [lab for lab, _ in self.factors]
        if len(set(labels)) != len(labels):
            raise LayoutError(f"duplicate labels in layout: {labels}")
        for lab, d in self.factors:
            if d < 1:
                raise LayoutError(f"factor {lab!r} has non-positive dimension {d}")

    @staticmethod
    def of(*factors: tuple[str, int]) -> "SystemLayout":
        return SystemLayout(tuple((str(l), int(d)) for l, d in factors))

    @property
    def labels(self) -> tuple[str, ...]:
        return tuple(lab for lab, _ in self.factors)

    @property
    def dims(self) -> tuple[int, ...]:
        return tuple(d for _, d in self.factors)

    @property
    def dim(self) -> int:
        return int(np.prod(self.dims)) if self.factors else 1

    def index(self, label: str) -> int:
        for i, (lab, _) in enumerate(self.factors):
            if lab == label:
                return i
        raise LayoutError(f"unknown label {label!r}; have {self.labels}")

    def dim_of(self, label: str) -> int:
        return self.factors[self.index(label)][1]

    def keep(self, labels) -> "SystemLayout":
        labels = set(labels)
        unknown = labels - set(self.labels)
        if unknown:
            raise LayoutError(f"unknown labels {sorted(unknown)}; have {self.labels}")
        return SystemLayout(tuple(f for f in self.factors if f[0] in labels))


def _check_dim(d: int):
    if d > MAX_DIM:
        raise DimensionError(f"dimension {d} exceeds desk-scale cap {MAX_DIM}")


def _as_matrix(m) -> np.ndarray:
    if hasattr(m, "mat"):
        m = m.mat
    a = np.asarray(m, dtype=complex)
    if a.ndim != 2:
        raise DimensionError(f"expected a matrix, got shape {a.shape}")
    if not np.all(np.isfinite(a.view(float))):
        raise NumericalError("matrix contains non-finite entries")
    return a


@dataclass
class DensityMatrix:
    """Hermitian PSD unit-trace matrix over a labeled tensor layout."""

    mat: np.ndarray
    layout: SystemLayout
    psd_tol: float = 1e-10

    def __post_init__(self):
        self.mat = _as_matrix(self.mat)
        n = self.mat.shape[0]
        _check_dim(n)
        if self.mat.shape[1] != n:
            raise DimensionError("density matrix must be square")
        if self.layout.dim != n:
            raise LayoutError(
                f"layout dim {self.layout.dim} != matrix dim {n}"
            )
        scale = max(1.0, float(npl.norm(self.mat)))
        if npl.norm(self.mat - self.mat.conj().T) > self.psd_tol * scale:
            raise NumericalError("density matrix is not Hermitian within tolerance")
        w = npl.eigvalsh((self.mat + self.mat.conj().T) / 2)
        if w[0] < -self.psd_tol:
            raise NumericalError(f"density matrix has eigenvalue {w[0]:.3e} < -psd_tol")
        if abs(np.trace(self.mat).real - 1.0) > max(self.psd_tol, 1e-10) * 10:
            raise NumericalError(f"trace {np.trace(self.mat).real} != 1")

    @property
    def dim(self) -> int:
        return self.mat.shape[0]


@dataclass
class PureState:
    """Unit vector over a labeled tensor layout."""

    vec: np.ndarray
    layout: SystemLayout

    def __post_init__(self):
        self.vec = np.asarray(self.vec, dtype=complex).reshape(-1)
        if self.layout.dim != self.vec.size:
            raise LayoutError(f"layout dim {self.layout.dim} != vector size {self.vec.size}")
        if abs(npl.norm(self.vec) - 1.0) > 1e-12:
            raise NumericalError("state vector is not normalized within 1e-12")

    @property
    def dim(self) -> int:
        return self.vec.size

    def to_density(self, psd_tol: float = 1e-10) -> DensityMatrix:
        return DensityMatrix(np.outer(self.vec, self.vec.conj()), self.layout, psd_tol)


def kron(a, b):
    """Tensor product with a's indices major; two labeled states produce a
    labeled state on the concatenated layout."""
    if isinstance(a, DensityMatrix) and isinstance(b, DensityMatrix):
        layout = SystemLayout(a.layout.factors + b.layout.factors)
        return DensityMatrix(np.kron(a.mat, b.mat), layout,
                             psd_tol=max(a.psd_tol, b.psd_tol))
    am = _as_matrix(a)
    bm = _as_matrix(b)
    _check_dim(am.shape[0] * bm.shape[0])
    return np.kron(am, bm)


def partial_trace(rho: DensityMatrix, keep) -> DensityMatrix:
    """Reduced state on the kept factors (original factor order preserved)."""
    if isinstance(keep, str):
        keep = [keep]
    kept_layout = rho.layout.keep(keep)
    keep_set = set(kept_layout.labels)
    dims = rho.layout.dims
    k = len(dims)
    t = rho.mat.reshape(dims + dims)
    # trace out dropped factors one at a time, from the rightmost
    for i in reversed(range(k)):
        if rho.layout.labels[i] not in keep_set:
            t = np.trace(t, axis1=i, axis2=i + (t.ndim // 2))
    d = kept_layout.dim
    return DensityMatrix(t.reshape(d, d), kept_layout, psd_tol=max(rho.psd_tol, 1e-9))


def partial_trace_mat(mat: np.ndarray, dims, keep_idx) -> np.ndarray:
    """partial_trace on a bare matrix; keep_idx are factor positions to keep."""
    dims = tuple(dims)
    k = len(dims)
    keep_idx = set(keep_idx)
    t = np.asarray(mat, dtype=complex).reshape(dims + dims)
    for i in reversed(range(k)):
        if i not in keep_idx:
            t = np.trace(t, axis1=i, axis2=i + (t.ndim // 2))
    d = int(np.prod([dims[i] for i in sorted(keep_idx)])) if keep_idx else 1
    return t.reshape(d, d)


def reorder_factors(rho: DensityMatrix, new_order) -> DensityMatrix:
    """Permute tensor factors of a state to the given label order."""
    new_order = list(new_order)
    if sorted(new_order) != sorted(rho.layout.labels):
        raise LayoutError(f"order {new_order} is not a permutation of {rho.layout.labels}")
    perm = [rho.layout.index(lab) for lab in new_order]
    dims = rho.layout.dims
    k = len(dims)
    t = rho.mat.reshape(dims + dims)
    t = np.transpose(t, perm + [p + k for p in perm])
    d = rho.dim
    layout = SystemLayout(tuple(rho.layout.factors[p] for p in perm))
    return DensityMatrix(t.reshape(d, d), layout, psd_tol=rho.psd_tol)


def eigh(m) -> tuple[np.ndarray, np.ndarray]:
    """Hermitian eigendecomposition (ascending eigenvalues).

    Raises NumericalError when the input deviates from Hermitian by more than
    1e-9 relative to its Frobenius norm.
    """
    a = _as_matrix(m)
    scale = max(1.0, float(npl.norm(a)))
    if npl.norm(a - a.conj().T) > _HERM_TOL * scale:
        raise NumericalError("eigh requires a Hermitian matrix")
    w, v = npl.eigh((a + a.conj().T) / 2)
    return w, v


def sqrt_psd(a: np.ndarray) -> np.ndarray:
    """Matrix square root of a PSD operator; eigenvalues clamped at 0."""
    w, v = eigh(a)
    w = np.sqrt(np.maximum(w, 0.0))
    return (v * w) @ v.conj().T


def fidelity_psd(a: np.ndarray, b: np.ndarray) -> float:
    """F(a, b) = || sqrt(a) sqrt(b) ||_1 for PSD operators.

    Evaluated as the nuclear norm of the cross-Gram matrix of canonical
    purifications, diag(sqrt(w_a)) V_a^T conj(V_b) diag(sqrt(w_b)); unlike
    forming sqrt(a) @ sqrt(b) this loses no accuracy at rank-deficient
    arguments (no subtraction of clamped near-null square roots)."""
    a = _as_matrix(a)
    b = _as_matrix(b)
    if a.shape != b.shape:
        raise DimensionError(f"shape mismatch {a.shape} vs {b.shape}")
    wa, va = eigh(a)
    wb, vb = eigh(b)
    # eigenvalues below the spectral resolution of the input are noise; the
    # square root would otherwise inflate them to ~1e-8 artifacts
    wa = np.where(wa < 1e-13 * max(float(wa[-1]), 0.0), 0.0, wa)
    wb = np.where(wb < 1e-13 * max(float(wb[-1]), 0.0), 0.0, wb)
    sa = np.sqrt(np.maximum(wa, 0.0))
    sb = np.sqrt(np.maximum(wb, 0.0))
    m = (sa[:, None] * (va.T @ vb.conj())) * sb[None, :]
    return float(np.sum(npl.svd(m, compute_uv=False)))


def fidelity(rho: DensityMatrix, sigma: DensityMatrix) -> float:
    """Fidelity of two states; always in [0, 1] up to roundoff."""
    return fidelity_psd(rho.mat, sigma.mat)


def purified_distance_value(f: float) -> float:
    """P = sqrt(1 - F^2); fidelities within 1e-13 of 1 snap to P = 0,
    since below that the subtraction is pure roundoff noise (~1e-7
    spread in P from a 1e-14 perturbation in F)."""
    if f >= 1.0 - 1e-13:
        return 0.0
    return float(np.sqrt(max(0.0, 1.0 - f ** 2)))


def purified_distance(rho: DensityMatrix, sigma: DensityMatrix) -> float:
    """P(rho, sigma) = sqrt(1 - F^2)."""
    return purified_distance_value(fidelity(rho, sigma))


def cq_fidelity(p, rhos, q, sigmas) -> float:
    """Fidelity of two block-diagonal classical-quantum states.

    Equals sum_i sqrt(p_i q_i) F(rho_i, sigma_i).
    """
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    if np.any(p < -1e-12) or np.any(q < -1e-12):
        raise DomainError("weights must be nonnegative")
    if not (len(p) == len(q) == len(rhos) == len(sigmas)):
        raise DimensionError("block counts must agree")
    total = 0.0
    for pi, qi, r, s in zip(p, q, rhos, sigmas):
        if pi <= 0 or qi <= 0:
            continue
        rm = r.mat if isinstance(r, DensityMatrix) else _as_matrix(r)
        sm = s.mat if isinstance(s, DensityMatrix) else _as_matrix(s)
        total += np.sqrt(pi * qi) * fidelity_psd(rm, sm)
    return float(total)


_PURIFY_CUTOFF = 1e-12


def purify(rho: DensityMatrix, ref_label: str = "R") -> PureState:
    """Purification with reference dimension equal to rank(rho).

    Deterministic phase convention: the first nonzero component of each
    eigenvector is made real-positive.
    """
    if ref_label in rho.layout.labels:
        raise LayoutError(f"reference label {ref_label!r} already in layout")
    w, v = eigh(rho.mat)
    order = np.argsort(w)[::-1]
    w = w[order]
    v = v[:, order]
    rank = int(np.sum(w > _PURIFY_CUTOFF))
    rank = max(rank, 1)
    d = rho.dim
    vec = np.zeros(d * rank, dtype=complex)
    for k in range(rank):
        col = v[:, k].copy()
        nz = np.flatnonzero(np.abs(col) > 1e-12)
        if nz.size:
            phase = col[nz[0]] / abs(col[nz[0]])
            col = col / phase
        amp = np.sqrt(max(w[k], 0.0))
        vec += amp * np.kron(col, _basis_vec(rank, k))
    vec /= npl.norm(vec)
    layout = SystemLayout(rho.layout.factors + ((ref_label, rank),))
    return PureState(vec, layout)


def _basis_vec(d: int, k: int) -> np.ndarray:
    e = np.zeros(d, dtype=complex)
    e[k] = 1.0
    return e


def haar_random_state(dim: int, seed: int, layout: SystemLayout | None = None) -> PureState:
    """Haar-random pure state; deterministic for a fixed seed."""
    _check_dim(dim)
    rng = np.random.default_rng(seed)
    v = rng.normal(size=dim) + 1j * rng.normal(size=dim)
    v /= npl.norm(v)
    if layout is None:
        layout = SystemLayout.of(("B", dim))
    return PureState(v, layout)


def haar_random_density(
    dim: int, rank: int, seed: int, layout: SystemLayout | None = None
) -> DensityMatrix:
    """Random density matrix of the given rank (Ginibre construction)."""
    if rank > dim:
        raise DimensionError(f"rank {rank} > dim {dim}")
    _check_dim(dim)
    rng = np.random.default_rng(seed)
    g = rng.normal(size=(dim, rank)) + 1j * rng.normal(size=(dim, rank))
    m = g @ g.conj().T
    m /= np.trace(m).real
    if layout is None:
        layout = SystemLayout.of(("B", dim))
    return DensityMatrix(m, layout)


def haar_random_unitary(dim: int, seed: int) -> np.ndarray:
    rng = np.random.default_rng(seed)
    g = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
    q, r = npl.qr(g)
    return q * (np.diag(r) / np.abs(np.diag(r)))
