# src/matrix_market.py

import os

import numpy as np
import scipy.io
import scipy.sparse.linalg as spla
from scipy import sparse

from src.config import HERMITIAN_INPUT_RTOL
from src.errors import MatrixFormatError
from src.linalg_core import HermitianOperator, Storage, as_vector


def _mmread(path):
    if not os.path.exists(path):
        raise MatrixFormatError(f"file not found: {path}")
    try:
        return scipy.io.mmread(path)
    except Exception as e:
        raise MatrixFormatError(f"cannot parse Matrix Market file {path}: {e}") from e


def read_operator(path):
    """
    Read a Hermitian matrix (coordinate or array, real or complex).

    Real coordinate matrices with bandwidth <= 1 get tridiagonal storage,
    other coordinate matrices sparse storage, array matrices dense storage.
    """
    data = _mmread(path)

    if sparse.issparse(data):
        matrix = sparse.csr_matrix(data)
        if matrix.shape[0] != matrix.shape[1]:
            raise MatrixFormatError(f"{path}: matrix is {matrix.shape[0]}x{matrix.shape[1]}, not square")
        scale = spla.norm(matrix)
        if scale > 0 and spla.norm(matrix - matrix.conj().T) > HERMITIAN_INPUT_RTOL * scale:
            raise MatrixFormatError(f"{path}: matrix is not Hermitian")

        coo = matrix.tocoo()
        is_real = not np.iscomplexobj(coo.data) or np.all(coo.data.imag == 0)
        if is_real and (coo.nnz == 0 or np.max(np.abs(coo.row - coo.col)) <= 1):
            dense_diag = matrix.diagonal().real
            off = matrix.diagonal(-1).real if matrix.shape[0] > 1 else np.zeros(0)
            return HermitianOperator.from_tridiagonal(dense_diag, off)
        return HermitianOperator.from_sparse(matrix)

    matrix = np.asarray(data)
    if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1]:
        raise MatrixFormatError(f"{path}: array of shape {matrix.shape} is not a square matrix")
    scale = np.linalg.norm(matrix)
    if scale > 0 and np.linalg.norm(matrix - matrix.conj().T) > HERMITIAN_INPUT_RTOL * scale:
        raise MatrixFormatError(f"{path}: matrix is not Hermitian")
    return HermitianOperator.from_dense(matrix)


def _parse_value(tokens, path, lineno):
    try:
        if len(tokens) == 1:
            return complex(tokens[0].replace("i", "j"))
        if len(tokens) == 2:
            return complex(float(tokens[0]), float(tokens[1]))
    except ValueError:
        pass
    raise MatrixFormatError(f"{path}:{lineno}: cannot parse vector entry {' '.join(tokens)!r}")


def read_vector(path):
    """
    Single-column Matrix Market array, or plain text with one value per line
    ("re", "re im" or a Python complex literal). '#' starts a comment.
    """
    if not os.path.exists(path):
        raise MatrixFormatError(f"file not found: {path}")

    with open(path, "r", encoding="utf-8") as f:
        first = f.readline()

    if first.startswith("%%MatrixMarket"):
        data = _mmread(path)
        data = data.toarray() if sparse.issparse(data) else np.asarray(data)
        if data.ndim == 2 and data.shape[1] != 1:
            raise MatrixFormatError(f"{path}: vector must be a single column, got shape {data.shape}")
        return as_vector(data.ravel())

    values = []
    with open(path, "r", encoding="utf-8") as f:
        for lineno, line in enumerate(f, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            values.append(_parse_value(line.split(), path, lineno))
    if not values:
        raise MatrixFormatError(f"{path}: no vector entries found")
    return as_vector(values)


def write_operator(path, operator, comment=""):
    """
    Export as Matrix Market coordinate (sparse/tridiagonal) or array (dense).
    """
    symmetry = "symmetric" if operator.is_real else "hermitian"
    if operator.storage is Storage.DENSE:
        data = operator.to_dense()
    else:
        # symmetric / hermitian coordinate files list the lower triangle only
        data = sparse.tril(operator.to_sparse()).tocoo()
    if operator.is_real:
        data = data.real
    scipy.io.mmwrite(path, data, comment=comment, symmetry=symmetry)


def write_vector(path, x, comment=""):
    x = as_vector(x)
    data = x.reshape(-1, 1)
    if np.all(x.imag == 0):
        data = data.real
    scipy.io.mmwrite(path, data, comment=comment)
