# src/matrices.py
"""
Test-matrix generators, a Jacobi eigendecomposition oracle and initial
vector construction.

Randomness comes from numpy's PCG64 generator. Every consumer derives its
own stream with `rng_stream(seed, *key)`: the key is the spawn key of a
SeedSequence, e.g. (experiment_id, sample_index), so runs are reproducible
independent of evaluation order or thread count.
"""
from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np
from scipy import sparse

from src.config import (
    JACOBI_MAX_SWEEPS,
    JACOBI_RTOL,
    ORACLE_MAX_DIM,
    RANDOM_DENSITY,
)
from src.errors import DomainError, OracleError
from src.linalg_core import HermitianOperator, normalize


class MatrixKind(str, Enum):
    DIAG3 = "diag3"
    ONE_TWO_ONE = "121"
    WILKINSON = "wilkinson"
    LAPLACE_2D = "laplace"
    RANDOM_SYMMETRIC = "randsym"


@dataclass(frozen=True)
class MatrixSpec:
    """
    `size` is n for 121 / randsym, n for wilkinson (dimension 2n + 1) and
    m for laplace (dimension m^2). `s` is only used by diag3.
    """

    kind: MatrixKind
    size: int = 3
    s: float = 0.0
    density: float = RANDOM_DENSITY
    seed: int = 0

    def __post_init__(self):
        if self.kind is MatrixKind.DIAG3:
            if not -1.0 < self.s < 1.0:
                raise DomainError(f"diag(-1, s, 1) needs |s| < 1, got s = {self.s}")
        elif self.size < 1:
            raise DomainError(f"matrix size must be >= 1, got {self.size}")
        if self.kind is MatrixKind.RANDOM_SYMMETRIC and not 0.0 < self.density <= 1.0:
            raise DomainError(f"density must lie in (0, 1], got {self.density}")

    @classmethod
    def diag3(cls, s):
        return cls(MatrixKind.DIAG3, size=3, s=float(s))

    @classmethod
    def one_two_one(cls, n):
        return cls(MatrixKind.ONE_TWO_ONE, size=n)

    @classmethod
    def wilkinson(cls, n):
        return cls(MatrixKind.WILKINSON, size=n)

    @classmethod
    def laplace_2d(cls, m):
        return cls(MatrixKind.LAPLACE_2D, size=m)

    @classmethod
    def random_symmetric(cls, n, density=RANDOM_DENSITY, seed=0):
        return cls(MatrixKind.RANDOM_SYMMETRIC, size=n, density=density, seed=seed)

    @classmethod
    def from_kind(cls, kind, size, seed=0):
        kind = MatrixKind(kind)
        if kind is MatrixKind.RANDOM_SYMMETRIC:
            return cls.random_symmetric(size, seed=seed)
        if kind is MatrixKind.DIAG3:
            raise DomainError("diag3 is built with MatrixSpec.diag3(s)")
        return cls(kind, size=size)

    @property
    def dimension(self):
        if self.kind is MatrixKind.DIAG3:
            return 3
        if self.kind is MatrixKind.WILKINSON:
            return 2 * self.size + 1
        if self.kind is MatrixKind.LAPLACE_2D:
            return self.size ** 2
        return self.size


def rng_stream(seed, *key):
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(entropy=seed, spawn_key=key)))


def generate(spec):
    kind = spec.kind
    if kind is MatrixKind.DIAG3:
        return HermitianOperator.from_tridiagonal([-1.0, spec.s, 1.0], [0.0, 0.0])

    if kind is MatrixKind.ONE_TWO_ONE:
        n = spec.size
        return HermitianOperator.from_tridiagonal(np.full(n, 2.0), np.ones(n - 1))

    if kind is MatrixKind.WILKINSON:
        n = spec.size
        m = np.arange(1, 2 * n + 2)
        return HermitianOperator.from_tridiagonal(np.abs(n + 1 - m).astype(np.float64), np.ones(2 * n))

    if kind is MatrixKind.LAPLACE_2D:
        m = spec.size
        t = sparse.diags([-np.ones(m - 1), np.full(m, 4.0), -np.ones(m - 1)], [-1, 0, 1])
        coupling = sparse.diags([np.ones(m - 1), np.ones(m - 1)], [-1, 1])
        laplace = sparse.kron(sparse.identity(m), t) - sparse.kron(coupling, sparse.identity(m))
        return HermitianOperator.from_sparse(laplace)

    # random symmetric: lower pattern with expected density, diagonal always present
    n = spec.size
    rng = rng_stream(spec.seed, 0)
    mask = np.tril(rng.random((n, n)) < spec.density, k=-1)
    rows, cols = np.nonzero(mask)
    offdiag = rng.standard_normal(rows.size)
    diag = rng.standard_normal(n)
    diag[diag == 0.0] = 1.0
    lower = sparse.coo_matrix(
        (np.concatenate([diag, offdiag]),
         (np.concatenate([np.arange(n), rows]), np.concatenate([np.arange(n), cols]))),
        shape=(n, n),
    )
    return HermitianOperator.from_sparse(lower)


# ============================================================================
# JACOBI ORACLE
# ============================================================================

@dataclass(frozen=True, eq=False)
class EigenDecomposition:
    values: np.ndarray  # ascending
    vectors: np.ndarray  # orthonormal columns

    @property
    def n(self):
        return self.values.size

    def vector(self, index):
        return self.vectors[:, index].copy()


def _round_robin(n):
    # all n(n-1)/2 pairs, grouped into rounds of disjoint pairs
    m = n + (n % 2)
    players = list(range(m))
    rounds = []
    for _ in range(m - 1):
        pairs = [(players[i], players[m - 1 - i]) for i in range(m // 2)]
        pairs = [(min(p, q), max(p, q)) for p, q in pairs if p < n and q < n]
        if pairs:
            rounds.append((np.array([p for p, _ in pairs]), np.array([q for _, q in pairs])))
        players = [players[0], players[-1]] + players[1:-1]
    return rounds


def _off_norm(a):
    return np.sqrt(max(np.linalg.norm(a) ** 2 - np.linalg.norm(np.diagonal(a)) ** 2, 0.0))


def oracle_eig(a, max_sweeps=JACOBI_MAX_SWEEPS, rtol=JACOBI_RTOL):
    """
    Cyclic Jacobi eigendecomposition of a Hermitian operator (test oracle).

    Each round rotates a set of disjoint (p, q) pairs at once; n - 1 rounds
    make one sweep over all pairs.
    """
    if a.n > ORACLE_MAX_DIM:
        raise DomainError(f"oracle limited to n <= {ORACLE_MAX_DIM}, got {a.n}")

    mat = a.to_dense().astype(np.complex128)
    n = a.n
    vecs = np.eye(n, dtype=np.complex128)
    scale = np.linalg.norm(mat)
    rounds = _round_robin(n)

    for _ in range(max_sweeps + 1):
        if _off_norm(mat) <= rtol * scale:
            break
        for p, q in rounds:
            apq = mat[p, q]
            r = np.abs(apq)
            active = r > 0.0
            safe_r = np.where(active, r, 1.0)
            w = np.where(active, np.conj(apq) / safe_r, 1.0)
            theta = (mat[q, q].real - mat[p, p].real) / (2.0 * safe_r)
            t = np.where(theta >= 0.0, 1.0, -1.0) / (np.abs(theta) + np.hypot(theta, 1.0))
            t = np.where(active, t, 0.0)
            c = 1.0 / np.hypot(t, 1.0)
            s = t * c

            col_p, col_q = mat[:, p].copy(), mat[:, q].copy()
            mat[:, p] = c * col_p - s * w * col_q
            mat[:, q] = s * col_p + c * w * col_q

            row_p, row_q = mat[p, :].copy(), mat[q, :].copy()
            mat[p, :] = c[:, None] * row_p - (s * np.conj(w))[:, None] * row_q
            mat[q, :] = s[:, None] * row_p + (c * np.conj(w))[:, None] * row_q

            mat[p, q] = 0.0
            mat[q, p] = 0.0
            mat[p, p] = mat[p, p].real
            mat[q, q] = mat[q, q].real

            v_p, v_q = vecs[:, p].copy(), vecs[:, q].copy()
            vecs[:, p] = c * v_p - s * w * v_q
            vecs[:, q] = s * v_p + c * w * v_q
    else:
        raise OracleError(f"Jacobi did not converge in {max_sweeps} sweeps")

    values = np.diagonal(mat).real
    order = np.argsort(values, kind="stable")
    vectors = np.column_stack([normalize(vecs[:, j]) for j in order])
    if a.is_real:
        vectors = vectors.real.astype(np.complex128)
    return EigenDecomposition(values=values[order].copy(), vectors=vectors)


def spread(a):
    values = oracle_eig(a).values
    return float(values[-1] - values[0])


def eigenvalue_ordering_satisfied(values, target_index, mu):
    """
    |lambda_target - mu| strictly smaller than the distance from mu to
    every other eigenvalue.
    """
    distances = np.abs(np.asarray(values) - mu)
    others = np.delete(distances, target_index)
    return bool(others.size == 0 or distances[target_index] < others.min())


# ============================================================================
# INITIAL VECTORS
# ============================================================================

def initial_vector_with_angle(decomp, target_index, theta, seed=0):
    """
    cos(theta) v_target + sin(theta) w, with w a seeded random unit vector
    in the span of the other eigenvectors (Gaussian coefficients).
    """
    if not 0.0 < theta < np.pi / 2:
        raise DomainError(f"angle must lie strictly inside (0, pi/2), got {theta}")
    if not 0 <= target_index < decomp.n:
        raise DomainError(f"target index {target_index} outside 0..{decomp.n - 1}")
    if decomp.n < 2:
        raise DomainError("need at least two eigenvectors")

    rng = seed if isinstance(seed, np.random.Generator) else rng_stream(seed)
    coeffs = rng.standard_normal(decomp.n)
    coeffs[target_index] = 0.0
    w = decomp.vectors @ coeffs
    norm = np.linalg.norm(w)
    if norm == 0.0:
        raise DomainError("random complement direction vanished")
    x = np.cos(theta) * decomp.vectors[:, target_index] + np.sin(theta) * (w / norm)
    return normalize(x)


def simplex_lattice(resolution):
    """
    Interior lattice points (i, j, k), i + j + k = resolution, all >= 1.
    """
    if resolution < 2:
        raise DomainError(f"simplex resolution must be >= 2, got {resolution}")
    return [(i, j, resolution - i - j)
            for i in range(1, resolution - 1)
            for j in range(1, resolution - i)]


def simplex_grid(resolution):
    return [normalize(np.array(point, dtype=np.float64) / resolution)
            for point in simplex_lattice(resolution)]
