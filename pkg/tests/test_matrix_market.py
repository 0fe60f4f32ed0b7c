import numpy as np
import pytest

from src.errors import MatrixFormatError
from src.linalg_core import HermitianOperator, Storage
from src.matrices import MatrixSpec, generate
from src.matrix_market import read_operator, read_vector, write_operator, write_vector


class TestReadWriteOperator:

    def test_tridiagonal_family_comes_back_tridiagonal(self, tmp_path):
        a = generate(MatrixSpec.wilkinson(3))
        path = str(tmp_path / "w7.mtx")
        write_operator(path, a)
        b = read_operator(path)
        assert b.storage is Storage.TRIDIAGONAL
        np.testing.assert_array_equal(b.to_dense(), a.to_dense())

    def test_banded_matrix_comes_back_sparse(self, tmp_path):
        a = generate(MatrixSpec.laplace_2d(3))
        path = str(tmp_path / "lap.mtx")
        write_operator(path, a)
        b = read_operator(path)
        assert b.storage is Storage.SPARSE
        np.testing.assert_array_equal(b.to_dense(), a.to_dense())

    def test_complex_hermitian_dense(self, tmp_path):
        h = np.array([[2.0, 1 - 2j, 0.5j], [1 + 2j, -1.0, 3.0], [-0.5j, 3.0, 0.25]])
        a = HermitianOperator.from_dense(h)
        path = str(tmp_path / "h.mtx")
        write_operator(path, a, comment="test matrix")
        b = read_operator(path)
        assert b.storage is Storage.DENSE
        np.testing.assert_allclose(b.to_dense(), h, atol=1e-15)

    def test_non_hermitian_rejected(self, tmp_path):
        path = tmp_path / "bad.mtx"
        path.write_text("%%MatrixMarket matrix array real general\n2 2\n1\n2\n3\n4\n")
        with pytest.raises(MatrixFormatError):
            read_operator(str(path))

    def test_missing_file(self, tmp_path):
        with pytest.raises(MatrixFormatError):
            read_operator(str(tmp_path / "nope.mtx"))


class TestReadVector:

    def test_plain_text_formats(self, tmp_path):
        path = tmp_path / "x0.txt"
        path.write_text("# initial guess\n1\n2 0.5\n\n(3+1j)\n-4e-1  # trailing comment\n")
        np.testing.assert_allclose(read_vector(str(path)), [1.0, 2.0 + 0.5j, 3.0 + 1.0j, -0.4])

    def test_matrix_market_column(self, tmp_path):
        path = str(tmp_path / "x.mtx")
        x = np.array([0.5, -1.0, 2.0])
        write_vector(path, x)
        np.testing.assert_allclose(read_vector(path), x)

    def test_garbage_line(self, tmp_path):
        path = tmp_path / "x0.txt"
        path.write_text("1\nabc\n")
        with pytest.raises(MatrixFormatError):
            read_vector(str(path))

    def test_empty_file(self, tmp_path):
        path = tmp_path / "x0.txt"
        path.write_text("# nothing\n")
        with pytest.raises(MatrixFormatError):
            read_vector(str(path))
