# src/linalg_core.py
"""
Complex vector / Hermitian matrix kernels.

Vectors are plain 1-D numpy arrays of dtype complex128. Operators are
immutable `HermitianOperator` values that store a single triangle (or the
real diagonal/off-diagonal bands) so that Hermitian symmetry holds exactly.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass
from enum import Enum
from functools import cached_property
from typing import Optional

import numpy as np
import scipy.linalg
import scipy.sparse.linalg as spla
from numpy.typing import NDArray
from scipy import sparse
from scipy.linalg import lapack

from src.config import (
    NEAR_SINGULAR_RTOL,
    RQ_IMAG_RTOL,
    NORMALIZE_CHECK_TOL,
    DENSE_FALLBACK_MAX_DIM,
)
from src.errors import DomainError, NearSingularError

ComplexVector = NDArray[np.complex128]


class Storage(str, Enum):
    DENSE = "dense"
    TRIDIAGONAL = "tridiagonal"
    SPARSE = "sparse"


def _frozen(array):
    array.setflags(write=False)
    return array


@dataclass(frozen=True, eq=False)
class HermitianOperator:
    """
    Hermitian matrix in one of three storages.

    dense       -> `lower` holds the lower triangle (diagonal real)
    tridiagonal -> `diag` / `offdiag` real bands
    sparse      -> `lower` is a CSR matrix holding the lower triangle
    """

    n: int
    storage: Storage
    lower: object = None
    diag: Optional[np.ndarray] = None
    offdiag: Optional[np.ndarray] = None

    # ---- construction -----------------------------------------------------

    @classmethod
    def from_dense(cls, matrix):
        matrix = np.asarray(matrix)
        if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1] or matrix.shape[0] < 1:
            raise DomainError(f"dense operator needs a square matrix, got shape {matrix.shape}")
        lower = np.tril(matrix)
        if np.iscomplexobj(lower):
            if np.all(lower.imag == 0):
                lower = lower.real.copy()
            else:
                lower = lower.astype(np.complex128)
                np.fill_diagonal(lower, np.diagonal(lower).real)
        lower = lower.astype(np.complex128 if np.iscomplexobj(lower) else np.float64)
        return cls(n=matrix.shape[0], storage=Storage.DENSE, lower=_frozen(lower))

    @classmethod
    def from_tridiagonal(cls, diag, offdiag):
        diag = np.asarray(diag)
        offdiag = np.asarray(offdiag)
        for band in (diag, offdiag):
            if np.iscomplexobj(band) and np.any(band.imag != 0):
                raise DomainError("tridiagonal storage requires real entries")
        diag = np.array(diag.real, dtype=np.float64)
        offdiag = np.array(offdiag.real, dtype=np.float64)
        if diag.ndim != 1 or diag.size < 1 or offdiag.shape != (diag.size - 1,):
            raise DomainError(
                f"tridiagonal bands have inconsistent lengths {diag.shape} / {offdiag.shape}"
            )
        return cls(n=diag.size, storage=Storage.TRIDIAGONAL,
                   diag=_frozen(diag), offdiag=_frozen(offdiag))

    @classmethod
    def from_sparse(cls, matrix):
        """
        Keep the lower triangle of a (Hermitian) sparse matrix.
        """
        matrix = sparse.csr_matrix(matrix)
        if matrix.shape[0] != matrix.shape[1] or matrix.shape[0] < 1:
            raise DomainError(f"sparse operator needs a square matrix, got shape {matrix.shape}")
        lower = sparse.tril(matrix, format="csr")
        if np.iscomplexobj(lower.data):
            if np.all(lower.data.imag == 0):
                lower = lower.real.tocsr()
            else:
                lower = lower.astype(np.complex128)
                lower.setdiag(lower.diagonal().real)
        lower.sum_duplicates()
        lower.eliminate_zeros()
        return cls(n=matrix.shape[0], storage=Storage.SPARSE, lower=lower)

    # ---- views ------------------------------------------------------------

    @property
    def is_real(self):
        if self.storage is Storage.TRIDIAGONAL:
            return True
        data = self.lower.data if self.storage is Storage.SPARSE else self.lower
        return not np.iscomplexobj(data)

    @cached_property
    def _full_sparse(self):
        if self.storage is Storage.SPARSE:
            strict = sparse.tril(self.lower, k=-1)
            return (self.lower + strict.conj().T).tocsr()
        if self.storage is Storage.TRIDIAGONAL:
            return sparse.diags([self.offdiag, self.diag, self.offdiag], [-1, 0, 1], format="csr")
        return sparse.csr_matrix(self.to_dense())

    @cached_property
    def _full_dense(self):
        if self.storage is Storage.DENSE:
            strict = np.tril(self.lower, k=-1)
            full = self.lower + strict.conj().T
        else:
            full = self._full_sparse.toarray()
        return _frozen(full)

    def to_dense(self):
        return np.array(self._full_dense)

    def to_sparse(self):
        return self._full_sparse.copy()

    def diagonal(self):
        if self.storage is Storage.TRIDIAGONAL:
            return self.diag.copy()
        if self.storage is Storage.SPARSE:
            return self.lower.diagonal().real
        return np.diagonal(self.lower).real.copy()

    def matvec(self, x):
        if self.storage is Storage.TRIDIAGONAL:
            y = self.diag * x
            if self.n > 1:
                y[:-1] += self.offdiag * x[1:]
                y[1:] += self.offdiag * x[:-1]
            return y
        if self.storage is Storage.SPARSE:
            return self._full_sparse @ x
        return self._full_dense @ x

    def frobenius_norm(self):
        if self.storage is Storage.TRIDIAGONAL:
            return float(np.sqrt(np.sum(self.diag ** 2) + 2.0 * np.sum(self.offdiag ** 2)))
        if self.storage is Storage.SPARSE:
            return float(spla.norm(self._full_sparse))
        return float(np.linalg.norm(self._full_dense))

    def scaled(self, alpha, beta=0.0):
        """
        alpha * A + beta * I in the same storage.
        """
        if self.storage is Storage.TRIDIAGONAL:
            return HermitianOperator.from_tridiagonal(alpha * self.diag + beta, alpha * self.offdiag)
        if self.storage is Storage.SPARSE:
            return HermitianOperator.from_sparse(alpha * self._full_sparse + beta * sparse.identity(self.n))
        return HermitianOperator.from_dense(alpha * self._full_dense + beta * np.eye(self.n))


@dataclass(frozen=True, eq=False)
class GeneralizedPair:
    """
    (A, M) for A v = lambda M v with M Hermitian positive definite.
    """

    a: HermitianOperator
    m: HermitianOperator
    check: bool = True

    def __post_init__(self):
        if self.a.n != self.m.n:
            raise DomainError(f"dimension mismatch: A is {self.a.n}, M is {self.m.n}")
        if self.check and not is_positive_definite(self.m):
            raise DomainError("mass matrix M is not positive definite")

    @property
    def n(self):
        return self.a.n

    @classmethod
    def standard(cls, a):
        """
        Pair (A, I) in A's storage.
        """
        if a.storage is Storage.TRIDIAGONAL:
            m = HermitianOperator.from_tridiagonal(np.ones(a.n), np.zeros(a.n - 1))
        elif a.storage is Storage.SPARSE:
            m = HermitianOperator.from_sparse(sparse.identity(a.n, format="csr"))
        else:
            m = HermitianOperator.from_dense(np.eye(a.n))
        return cls(a, m, check=False)


@dataclass(frozen=True, eq=False)
class EigenPair:
    value: float
    vector: ComplexVector
    residual_norm: float

    def __post_init__(self):
        if not np.isfinite(self.residual_norm):
            raise DomainError("eigenpair residual is not finite")


# ============================================================================
# VECTOR KERNELS
# ============================================================================

def as_vector(x):
    x = np.asarray(x, dtype=np.complex128)
    if x.ndim != 1 or x.size < 1:
        raise DomainError(f"expected a nonempty 1-D vector, got shape {x.shape}")
    return x


def _check_dims(a, x):
    if a.n != x.size:
        raise DomainError(f"dimension mismatch: operator is {a.n}, vector is {x.size}")


def _apply_phase(x):
    # largest-modulus entry becomes real and nonnegative
    k = int(np.argmax(np.abs(x)))
    modulus = abs(x[k])
    y = x * (np.conj(x[k]) / modulus)
    y[k] = modulus
    return y


def normalize(x):
    x = as_vector(x)
    norm = np.linalg.norm(x)
    if norm == 0.0:
        raise DomainError("cannot normalize the zero vector")
    return _apply_phase(x / norm)


def m_norm(m, x):
    x = as_vector(x)
    _check_dims(m, x)
    quad = np.vdot(x, m.matvec(x)).real
    if quad < 0.0:
        raise DomainError(f"negative quadratic form x*Mx = {quad:.3e}; M is not positive definite")
    return float(np.sqrt(quad))


def m_normalize(m, x):
    x = as_vector(x)
    norm = m_norm(m, x)
    if norm == 0.0:
        raise DomainError("cannot M-normalize the zero vector")
    return _apply_phase(x / norm)


def _real_quotient(num, den):
    q = num / den
    if abs(q.imag) > RQ_IMAG_RTOL * (1.0 + abs(q.real)):
        raise DomainError(f"Rayleigh quotient has imaginary part {q.imag:.3e}; operator is not Hermitian")
    return float(q.real)


def rayleigh_quotient(a, x):
    """
    x*Ax / x*x (real part).
    """
    x = as_vector(x)
    _check_dims(a, x)
    den = np.vdot(x, x).real
    if den == 0.0:
        raise DomainError("Rayleigh quotient of the zero vector")
    return _real_quotient(np.vdot(x, a.matvec(x)), den)


def generalized_rayleigh_quotient(p, x):
    """
    x*Ax / x*Mx (real part).
    """
    x = as_vector(x)
    _check_dims(p.a, x)
    den = np.vdot(x, p.m.matvec(x)).real
    if den == 0.0:
        raise DomainError("generalized Rayleigh quotient of the zero vector")
    return _real_quotient(np.vdot(x, p.a.matvec(x)), den)


def angle_between(u, w):
    """
    Angle in [0, pi/2] between span{u} and span{w}.

    Same value as arccos(|u*w| / (|u||w|)), evaluated as
    arctan2(|w_perp|, |u*w|) so that tiny angles keep full accuracy.
    """
    u = as_vector(u)
    w = as_vector(w)
    nu, nw = np.linalg.norm(u), np.linalg.norm(w)
    if nu == 0.0 or nw == 0.0:
        raise DomainError("angle with the zero vector")
    u = u / nu
    w = w / nw
    inner = np.vdot(u, w)
    cos = min(abs(inner), 1.0)
    sin = np.linalg.norm(w - inner * u)
    return float(min(max(np.arctan2(sin, cos), 0.0), np.pi / 2))


def _check_unit(norm):
    if abs(norm - 1.0) > NORMALIZE_CHECK_TOL:
        raise DomainError(f"residual expects a unit vector, got norm {norm:.16g}")


def residual(a, mu, x):
    x = as_vector(x)
    _check_dims(a, x)
    _check_unit(np.linalg.norm(x))
    return a.matvec(x) - mu * x


def generalized_residual(p, mu, x):
    x = as_vector(x)
    _check_dims(p.a, x)
    _check_unit(m_norm(p.m, x))
    return p.a.matvec(x) - mu * p.m.matvec(x)


# ============================================================================
# SHIFTED SOLVES
# ============================================================================

def _pivot_ratio(pivots):
    magnitudes = np.abs(pivots)
    largest = magnitudes.max() if magnitudes.size else 0.0
    if largest == 0.0 or not np.isfinite(largest):
        return 0.0
    return float(magnitudes.min() / largest)


def _finish(ratio, solution):
    if solution is not None and not np.all(np.isfinite(solution)):
        solution = None
    if ratio < NEAR_SINGULAR_RTOL:
        raise NearSingularError(ratio, solution)
    return solution


def solve_dense(matrix, rhs):
    """
    LU with partial pivoting on a dense (complex) matrix.
    """
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", scipy.linalg.LinAlgWarning)
        warnings.simplefilter("ignore", RuntimeWarning)
        lu, piv = scipy.linalg.lu_factor(matrix, check_finite=False)
        ratio = _pivot_ratio(np.diagonal(lu))
        solution = None
        if ratio > 0.0:
            solution = scipy.linalg.lu_solve((lu, piv), rhs, check_finite=False)
    return _finish(ratio, solution)


def _solve_tridiagonal(diag, offdiag, rhs):
    # banded elimination with partial pivoting (LAPACK ?gttrf / ?gttrs)
    dl = np.array(offdiag, dtype=np.complex128)
    du = dl.copy()
    d = np.array(diag, dtype=np.complex128)
    gttrf, gttrs = lapack.get_lapack_funcs(("gttrf", "gttrs"), (dl, d, du))
    dl, d, du, du2, ipiv, info = gttrf(dl, d, du)
    ratio = _pivot_ratio(d)
    solution = None
    if info == 0 and ratio > 0.0:
        solution, info = gttrs(dl, d, du, du2, ipiv, np.asarray(rhs, dtype=np.complex128))
        if info != 0:
            solution = None
    return _finish(ratio, solution)


def _solve_sparse(matrix, rhs):
    try:
        lu = spla.splu(sparse.csc_matrix(matrix, dtype=np.complex128))
    except RuntimeError:
        raise NearSingularError(0.0, None)
    ratio = _pivot_ratio(lu.U.diagonal())
    solution = lu.solve(np.asarray(rhs, dtype=np.complex128)) if ratio > 0.0 else None
    return _finish(ratio, solution)


def _shifted_solve(a, m, sigma, rhs):
    rhs = as_vector(rhs)
    _check_dims(a, rhs)
    if not np.any(rhs):
        raise DomainError("shifted solve with a zero right-hand side")

    storages = {a.storage} | ({m.storage} if m is not None else set())

    if storages == {Storage.TRIDIAGONAL} and a.n >= 3:
        if m is None:
            return _solve_tridiagonal(a.diag - sigma, a.offdiag, rhs)
        return _solve_tridiagonal(a.diag - sigma * m.diag, a.offdiag - sigma * m.offdiag, rhs)

    if Storage.DENSE not in storages and a.n > DENSE_FALLBACK_MAX_DIM:
        mass = sparse.identity(a.n) if m is None else m.to_sparse()
        return _solve_sparse(a.to_sparse() - sigma * mass, rhs)

    mass = np.eye(a.n) if m is None else m.to_dense()
    return solve_dense(a.to_dense() - sigma * mass, rhs)


def solve_shifted(a, sigma, rhs):
    """
    Solve (A - sigma I) y = rhs; raises NearSingularError.
    """
    return _shifted_solve(a, None, complex(sigma), rhs)


def solve_shifted_generalized(p, sigma, rhs):
    """
    Solve (A - sigma M) y = rhs; raises NearSingularError.
    """
    return _shifted_solve(p.a, p.m, complex(sigma), rhs)


def is_positive_definite(m):
    """
    Factorization test: all pivots of M strictly positive.
    """
    if m.storage is Storage.TRIDIAGONAL:
        if m.n == 1:
            return bool(m.diag[0] > 0.0)
        _, _, info = lapack.dpttrf(np.array(m.diag), np.array(m.offdiag))
        return info == 0
    if m.storage is Storage.SPARSE and m.n > DENSE_FALLBACK_MAX_DIM:
        try:
            lu = spla.splu(m.to_sparse().tocsc(), permc_spec="NATURAL",
                           diag_pivot_thresh=0.0, options={"SymmetricMode": True})
        except RuntimeError:
            return False
        return bool(np.all(lu.U.diagonal().real > 0.0))
    try:
        scipy.linalg.cholesky(m.to_dense(), lower=True, check_finite=False)
    except np.linalg.LinAlgError:
        return False
    return True


def perturbed_matrix(a, u, gamma, m=None):
    """
    Dense A + i*gamma*(I - u u*), or A + i*gamma*(M - (Mu)(Mu)*) when M is given.
    """
    u = as_vector(u)
    if m is None:
        mass = np.eye(a.n)
        mu_vec = u
    else:
        mass = m.to_dense()
        mu_vec = m.matvec(u)
    return a.to_dense() + 1j * gamma * (mass - np.outer(mu_vec, mu_vec.conj()))
