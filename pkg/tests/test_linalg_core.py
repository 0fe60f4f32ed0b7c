import numpy as np
import pytest
from scipy import sparse

from src.errors import DomainError, NearSingularError
from src.linalg_core import (
    GeneralizedPair,
    HermitianOperator,
    Storage,
    angle_between,
    generalized_rayleigh_quotient,
    generalized_residual,
    is_positive_definite,
    m_norm,
    m_normalize,
    normalize,
    perturbed_matrix,
    rayleigh_quotient,
    residual,
    solve_shifted,
    solve_shifted_generalized,
)
from src.matrices import (
    MatrixSpec,
    eigenvalue_ordering_satisfied,
    generate,
    initial_vector_with_angle,
    oracle_eig,
    rng_stream,
)


def random_hermitian(n, seed):
    rng = np.random.default_rng(seed)
    g = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
    return (g + g.conj().T) / 2


def one_two_one(n):
    return HermitianOperator.from_tridiagonal(np.full(n, 2.0), np.ones(n - 1))


class TestHermitianOperator:

    def test_dense_keeps_hermitian_symmetry(self):
        h = random_hermitian(5, 0)
        a = HermitianOperator.from_dense(h)
        full = a.to_dense()
        np.testing.assert_array_equal(full, full.conj().T)
        np.testing.assert_allclose(full, h, atol=1e-15)
        assert not a.is_real

    def test_tridiagonal_rejects_complex_entries(self):
        with pytest.raises(DomainError):
            HermitianOperator.from_tridiagonal([1.0, 2.0], [1j])

    def test_non_square_dense_rejected(self):
        with pytest.raises(DomainError):
            HermitianOperator.from_dense(np.ones((2, 3)))

    def test_matvec_agrees_across_storages(self):
        a = one_two_one(6)
        x = np.arange(6) + 1j * np.ones(6)
        expected = a.to_dense() @ x
        np.testing.assert_allclose(a.matvec(x), expected)
        np.testing.assert_allclose(HermitianOperator.from_dense(a.to_dense()).matvec(x), expected)
        np.testing.assert_allclose(HermitianOperator.from_sparse(a.to_sparse()).matvec(x), expected)

    def test_frobenius_norm(self):
        a = one_two_one(4)
        expected = np.linalg.norm(a.to_dense())
        assert a.frobenius_norm() == pytest.approx(expected)
        assert HermitianOperator.from_sparse(a.to_sparse()).frobenius_norm() == pytest.approx(expected)

    def test_scaled(self):
        a = one_two_one(4)
        b = a.scaled(2.0, 3.0)
        np.testing.assert_allclose(b.to_dense(), 2.0 * a.to_dense() + 3.0 * np.eye(4))
        assert b.storage is Storage.TRIDIAGONAL


class TestVectorKernels:

    def test_normalize_unit_norm_and_phase(self):
        x = normalize(np.array([1.0, -3.0j, 2.0]))
        assert np.linalg.norm(x) == pytest.approx(1.0)
        k = np.argmax(np.abs(x))
        assert x[k].imag == 0.0 and x[k].real > 0.0

    def test_normalize_zero_vector(self):
        with pytest.raises(DomainError):
            normalize(np.zeros(3))

    def test_rayleigh_quotient_of_eigenvector(self):
        a = HermitianOperator.from_tridiagonal([-1.0, 0.1, 1.0], [0.0, 0.0])
        assert rayleigh_quotient(a, np.array([0, 1, 0])) == pytest.approx(0.1)

    def test_rayleigh_quotient_complex_hermitian(self):
        a = HermitianOperator.from_dense(np.array([[2.0, 1j], [-1j, 2.0]]))
        assert rayleigh_quotient(a, np.array([1.0, 0.0])) == pytest.approx(2.0)
        assert rayleigh_quotient(a, np.array([1.0, -1j])) == pytest.approx(3.0)

    def test_rayleigh_quotient_zero_vector(self):
        with pytest.raises(DomainError):
            rayleigh_quotient(one_two_one(3), np.zeros(3))

    def test_angle_between(self):
        assert angle_between([1, 0], [1, 1]) == pytest.approx(np.pi / 4)
        x = np.array([0.3, 0.4j, 1.0])
        assert angle_between(x, 1j * x) == pytest.approx(0.0, abs=1e-15)
        assert angle_between([1, 0], [0, 1]) == pytest.approx(np.pi / 2)

    def test_small_angles_keep_accuracy(self):
        theta = 1e-9
        assert angle_between([1, 0], [np.cos(theta), np.sin(theta)]) == pytest.approx(theta, rel=1e-6)

    def test_residual_vanishes_at_eigenpair(self):
        a = one_two_one(3)
        v = np.array([1.0, np.sqrt(2.0), 1.0]) / 2.0
        np.testing.assert_allclose(residual(a, 2.0 + np.sqrt(2.0), v), 0.0, atol=1e-14)

    def test_residual_requires_unit_vector(self):
        with pytest.raises(DomainError):
            residual(one_two_one(3), 1.0, np.ones(3))

    def test_generalized_quotient_and_m_norm(self):
        a = one_two_one(4)
        m = a.scaled(0.0, 2.0)
        p = GeneralizedPair(a, m)
        x = np.array([1.0, 2.0, 0.5, -1.0])
        assert generalized_rayleigh_quotient(p, x) == pytest.approx(rayleigh_quotient(a, x) / 2.0)
        y = m_normalize(m, x)
        assert m_norm(m, y) == pytest.approx(1.0)
        generalized_residual(p, 1.0, y)


class TestShiftedSolves:

    def test_tridiagonal_matches_dense_solve(self):
        a = one_two_one(6)
        sigma = 0.3 + 0.2j
        rhs = np.arange(1.0, 7.0)
        expected = np.linalg.solve(a.to_dense() - sigma * np.eye(6), rhs)
        np.testing.assert_allclose(solve_shifted(a, sigma, rhs), expected, rtol=1e-12)

    def test_dense_complex_matches_numpy(self):
        h = random_hermitian(5, 1)
        a = HermitianOperator.from_dense(h)
        rhs = np.ones(5, dtype=complex)
        sigma = 0.1 - 0.5j
        expected = np.linalg.solve(h - sigma * np.eye(5), rhs)
        np.testing.assert_allclose(solve_shifted(a, sigma, rhs), expected, rtol=1e-10)

    def test_large_sparse_uses_factorization(self):
        m = 46
        t = sparse.diags([-np.ones(m - 1), np.full(m, 4.0), -np.ones(m - 1)], [-1, 0, 1])
        c = sparse.diags([np.ones(m - 1), np.ones(m - 1)], [-1, 1])
        lap = sparse.kron(sparse.identity(m), t) - sparse.kron(c, sparse.identity(m))
        a = HermitianOperator.from_sparse(lap)
        rhs = np.ones(a.n)
        sigma = 1.0 + 0.1j
        y = solve_shifted(a, sigma, rhs)
        assert np.linalg.norm(a.matvec(y) - sigma * y - rhs) < 1e-10 * np.linalg.norm(rhs)

    def test_shift_at_eigenvalue_is_near_singular(self):
        a = HermitianOperator.from_tridiagonal([-1.0, 0.1, 1.0], [0.0, 0.0])
        with pytest.raises(NearSingularError):
            solve_shifted(a, 0.1, np.ones(3))

    def test_zero_rhs_rejected(self):
        with pytest.raises(DomainError):
            solve_shifted(one_two_one(4), 0.5, np.zeros(4))

    def test_generalized_solve(self):
        a = one_two_one(5)
        m = HermitianOperator.from_tridiagonal(np.full(5, 4.0 / 6.0), np.full(4, 1.0 / 6.0))
        p = GeneralizedPair(a, m)
        sigma = 0.7 - 0.2j
        rhs = np.linspace(1.0, 2.0, 5)
        expected = np.linalg.solve(a.to_dense() - sigma * m.to_dense(), rhs)
        np.testing.assert_allclose(solve_shifted_generalized(p, sigma, rhs), expected, rtol=1e-12)


class TestPositiveDefinite:

    def test_mass_like_tridiagonal(self):
        m = HermitianOperator.from_tridiagonal(np.full(5, 4.0), np.ones(4))
        assert is_positive_definite(m)

    def test_indefinite(self):
        assert not is_positive_definite(HermitianOperator.from_tridiagonal([-1.0, 0.1, 1.0], [0.0, 0.0]))

    def test_dense_complex(self):
        h = random_hermitian(4, 2)
        assert is_positive_definite(HermitianOperator.from_dense(h @ h.conj().T + np.eye(4)))

    def test_pair_rejects_indefinite_mass(self):
        with pytest.raises(DomainError):
            GeneralizedPair(one_two_one(3), HermitianOperator.from_tridiagonal([1.0, -1.0, 1.0], [0.0, 0.0]))


class TestPerturbedMatrix:

    def test_target_stays_real_others_lifted(self):
        a = HermitianOperator.from_tridiagonal([-1.0, 0.1, 1.0], [0.0, 0.0])
        gamma = 0.5
        eigs = np.linalg.eigvals(perturbed_matrix(a, np.array([0.0, 1.0, 0.0]), gamma))
        eigs = eigs[np.argsort(eigs.real)]
        np.testing.assert_allclose(eigs, [-1.0 + 0.5j, 0.1, 1.0 + 0.5j], atol=1e-14)


FAMILIES = {
    "diag3": MatrixSpec.diag3(0.3),
    "121": MatrixSpec.one_two_one(30),
    "wilkinson": MatrixSpec.wilkinson(10),
    "laplace": MatrixSpec.laplace_2d(5),
    "randsym": MatrixSpec.random_symmetric(40, density=0.2, seed=3),
}
INSTANCES = 40


@pytest.fixture(scope="module", params=sorted(FAMILIES))
def family(request):
    a = generate(FAMILIES[request.param])
    return request.param, a, oracle_eig(a)


def random_instances(name, decomp):
    """Seeded (target index, start vector) pairs with angles from 1e-4 to 1.5 rad."""
    for seed in range(INSTANCES):
        rng = rng_stream(seed, len(name))
        index = int(rng.integers(decomp.n))
        theta = 10.0 ** rng.uniform(-4.0, np.log10(1.5))
        yield index, initial_vector_with_angle(decomp, index, theta, rng)


class TestSpectralBounds:

    def test_rayleigh_quotient_error_is_quadratic_in_angle(self, family):
        name, a, decomp = family
        values = decomp.values
        for index, x in random_instances(name, decomp):
            lam = values[index]
            sin_theta = np.sin(angle_between(x, decomp.vector(index)))
            norm_shifted = max(abs(values[-1] - lam), abs(values[0] - lam))
            error = abs(rayleigh_quotient(a, x) - lam)
            assert error <= norm_shifted * sin_theta ** 2 * (1 + 1e-8) + 1e-12 * (1 + abs(lam))

    def test_residual_bounded_by_spread_times_tangent(self, family):
        name, a, decomp = family
        width = decomp.values[-1] - decomp.values[0]
        for index, x in random_instances(name, decomp):
            rho = rayleigh_quotient(a, x)
            tan_theta = np.tan(angle_between(x, decomp.vector(index)))
            resnorm = np.linalg.norm(a.matvec(x) - rho * x)
            assert resnorm <= width * tan_theta * (1 + 1e-8) + 1e-12 * width

    def test_a_posteriori_bounds(self, family):
        name, a, decomp = family
        values = decomp.values
        width = values[-1] - values[0]
        checked = 0
        for index, x in random_instances(name, decomp):
            others = np.delete(values, index)
            if np.min(np.abs(others - values[index])) <= 1e-8 * width:
                continue  # repeated eigenvalue: the target direction is not unique
            rho = rayleigh_quotient(a, x)
            delta = np.min(np.abs(others - rho))
            resnorm = np.linalg.norm(a.matvec(x) - rho * x)
            sin_theta = np.sin(angle_between(x, decomp.vector(index)))
            assert sin_theta <= resnorm / delta * (1 + 1e-8) + 1e-10
            if eigenvalue_ordering_satisfied(values, index, rho):
                assert abs(rho - values[index]) <= resnorm ** 2 / delta * (1 + 1e-8) + 1e-12 * width
                checked += 1
        if name in ("diag3", "121"):
            assert checked > 0

    def test_shifted_solve_backward_error(self, family):
        name, a, decomp = family
        width = decomp.values[-1] - decomp.values[0]
        scale = a.frobenius_norm()
        for seed in range(INSTANCES):
            rng = rng_stream(seed, 100 + len(name))
            sigma = rng.uniform(decomp.values[0], decomp.values[-1]) - 1j * width * 10.0 ** rng.uniform(-3, -1)
            rhs = rng.standard_normal(a.n) + 1j * rng.standard_normal(a.n)
            y = solve_shifted(a, sigma, rhs)
            backward = np.linalg.norm(a.matvec(y) - sigma * y - rhs)
            assert backward <= 1e-10 * (scale + abs(sigma)) * np.linalg.norm(y)
