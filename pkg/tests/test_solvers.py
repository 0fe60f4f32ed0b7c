import csv

import numpy as np
import pytest

from src.errors import DomainError, NearSingularError, NotEstimableError
from src.linalg_core import (
    GeneralizedPair,
    HermitianOperator,
    angle_between,
    perturbed_matrix,
    rayleigh_quotient,
    solve_dense,
    solve_shifted,
)
from src.config import SCALED_TOL_FLOOR
from src.matrices import MatrixSpec, generate, oracle_eig
from src.solvers import (
    GammaSchedule,
    LocalizationGuard,
    ScheduleKind,
    SolveStatus,
    StoppingCriteria,
    classic_rqi,
    classic_rqi_generalized,
    convergence_order_estimate,
    eta,
    inverse_iteration,
    prqi,
    prqi_full,
    prqi_full_generalized,
    prqi_generalized,
    write_trace_csv,
)


def diag3(s=0.1):
    return HermitianOperator.from_tridiagonal([-1.0, s, 1.0], [0.0, 0.0])


def random_real_symmetric(n, seed):
    rng = np.random.default_rng(seed)
    g = rng.standard_normal((n, n))
    return HermitianOperator.from_dense((g + g.T) / 2)


def aligned(u, w):
    return abs(np.vdot(u, w)) / (np.linalg.norm(u) * np.linalg.norm(w))


def tan_angles_to_limit(outcome):
    limit = outcome.eigenpair.vector
    return [np.tan(angle_between(x, limit)) for x in outcome.iterates]


class TestGammaSchedule:

    @pytest.mark.parametrize("text, kind", [
        ("residual", ScheduleKind.RESIDUAL_NORM),
        ("residual2", ScheduleKind.RESIDUAL_NORM_SQUARED),
        ("constant:0.5", ScheduleKind.CONSTANT),
        ("constant:0", ScheduleKind.CONSTANT),
    ])
    def test_parse(self, text, kind):
        assert GammaSchedule.parse(text).kind is kind

    def test_values(self):
        x = np.ones(2)
        assert GammaSchedule.residual_norm()(0, 1.0, 0.3, x) == 0.3
        assert GammaSchedule.residual_norm_squared()(0, 1.0, 0.3, x) == pytest.approx(0.09)
        assert GammaSchedule.constant(2.0)(5, 1.0, 0.3, x) == 2.0
        assert GammaSchedule.custom(lambda k, mu, rn, x: k * rn)(2, 0.0, 0.5, x) == 1.0

    @pytest.mark.parametrize("text", ["", "cubic", "constant:abc", "constant:-1"])
    def test_invalid(self, text):
        with pytest.raises(DomainError):
            GammaSchedule.parse(text)

    def test_custom_negative_gamma(self):
        schedule = GammaSchedule.custom(lambda k, mu, rn, x: -1.0)
        with pytest.raises(DomainError):
            schedule(0, 0.0, 1.0, np.ones(2))


class TestStoppingAndGuard:

    def test_invalid_stopping(self):
        with pytest.raises(DomainError):
            StoppingCriteria(tol=0.0)
        with pytest.raises(DomainError):
            StoppingCriteria(max_iters=0)

    def test_scaled_threshold(self):
        stop = StoppingCriteria(tol=1e-8, scaled=True)
        assert stop.threshold(100.0) == pytest.approx(1e-6)

    def test_scaled_threshold_has_floor(self):
        assert StoppingCriteria(tol=1e-8, scaled=True).threshold(0.0) == SCALED_TOL_FLOOR
        assert StoppingCriteria(tol=1e-8, scaled=True, atol=1e-10).threshold(1e-6) == 1e-10
        with pytest.raises(DomainError):
            StoppingCriteria(atol=0.0)

    def test_scaled_tolerance_converges_on_zero_eigenvalue(self):
        a = HermitianOperator.from_tridiagonal([-1.0, 0.0, 1.0], [0.0, 0.0])
        stop = StoppingCriteria(tol=1e-8, scaled=True, atol=1e-10, extra_iteration=False)
        outcome = classic_rqi(a, np.array([0.0, 1.0, 0.3]), stop)
        assert outcome.status is SolveStatus.CONVERGED
        assert outcome.value == pytest.approx(0.0, abs=1e-12)
        assert outcome.eigenpair.residual_norm <= 1e-10

    def test_guard_threshold_range(self):
        with pytest.raises(DomainError):
            LocalizationGuard(2, 1.0)

    def test_eta(self):
        guard = LocalizationGuard(tail_start_index=2, threshold=0.4)
        assert eta(np.array([1.0, 1.0, 0.0, 0.0]), guard) == 0.0
        assert eta(np.array([0.0, 0.0, 1.0, 2.0]), guard) == pytest.approx(1.0)
        assert eta(np.ones(4), guard) == pytest.approx(1.0 / np.sqrt(2.0))
        with pytest.raises(DomainError):
            eta(np.zeros(4), guard)


class TestClassicRQI:

    def test_converges_to_nearby_eigenvalue(self):
        outcome = classic_rqi(diag3(), np.array([0.1, 1.0, 0.1]))
        assert outcome.converged
        assert outcome.value == pytest.approx(0.1, abs=1e-12)

    def test_exact_eigenvector_converges_immediately(self):
        outcome = prqi(diag3(), np.array([0.0, 1.0, 0.0]), GammaSchedule.residual_norm())
        assert outcome.status is SolveStatus.CONVERGED
        assert outcome.iterations == 0
        assert outcome.trace[0].gamma == 0.0

    def test_max_iters_exceeded(self):
        outcome = classic_rqi(diag3(), np.ones(3), StoppingCriteria(tol=1e-10, max_iters=1))
        assert outcome.status is SolveStatus.MAX_ITERS_EXCEEDED
        assert outcome.iterations == 1

    def test_converged_residual_below_tolerance(self):
        a = generate(MatrixSpec.one_two_one(20))
        stop = StoppingCriteria(tol=1e-10)
        outcome = classic_rqi(a, np.linspace(1.0, 2.0, 20), stop)
        assert outcome.converged
        assert all(np.isfinite(r.resnorm) for r in outcome.trace)
        if outcome.status is SolveStatus.CONVERGED:
            assert outcome.eigenpair.residual_norm <= stop.tol


class TestFinalTraceRecord:

    @pytest.mark.parametrize("run", [
        lambda: prqi(generate(MatrixSpec.one_two_one(10)), np.linspace(1.0, -0.4, 10),
                     GammaSchedule.residual_norm(), finalize_real=True, keep_iterates=True),
        lambda: classic_rqi(diag3(), np.array([0.1, 1.0, 0.1]), StoppingCriteria(tol=1e-15),
                            keep_iterates=True),
        lambda: prqi(diag3(0.3), np.array([0.2, 1.0, 0.05]), GammaSchedule.residual_norm_squared(),
                     StoppingCriteria(tol=1e-15), keep_iterates=True),
    ])
    def test_last_record_describes_returned_pair(self, run):
        outcome = run()
        last = outcome.trace[-1]
        assert last.mu == outcome.value
        assert last.resnorm == outcome.eigenpair.residual_norm
        np.testing.assert_array_equal(outcome.iterates[-1], outcome.eigenpair.vector)


class TestInverseIteration:

    def test_linear_rate_bound(self):
        a = HermitianOperator.from_tridiagonal([1.0, 2.0, 5.0], [0.0, 0.0])
        mu = 1.4
        outcome = inverse_iteration(a, mu, np.ones(3), target=np.array([1.0, 0.0, 0.0]))
        assert outcome.converged
        assert outcome.value == pytest.approx(1.0, abs=1e-9)
        bound = abs(1.0 - mu) / abs(2.0 - mu)
        tans = outcome.tan_angles()
        for t0, t1 in zip(tans, tans[1:]):
            if t0 > 1e-8:
                assert t1 / t0 <= bound + 1e-8

    def test_trace_reports_rayleigh_quotient(self):
        a = HermitianOperator.from_tridiagonal([1.0, 2.0, 5.0], [0.0, 0.0])
        outcome = inverse_iteration(a, 1.4, np.ones(3))
        assert outcome.trace[0].mu == pytest.approx(8.0 / 3.0)
        assert all(r.gamma == 0.0 for r in outcome.trace)

    def test_shift_on_eigenvalue_raises(self):
        a = HermitianOperator.from_tridiagonal([1.0, 2.0, 5.0], [0.0, 0.0])
        with pytest.raises(NearSingularError):
            inverse_iteration(a, 2.0, np.ones(3))


class TestPRQI:

    def test_constant_zero_reproduces_classic_rqi(self):
        a = generate(MatrixSpec.one_two_one(12))
        x0 = np.linspace(-1.0, 2.0, 12)
        ours = prqi(a, x0, GammaSchedule.constant(0.0))
        classic = classic_rqi(a, x0)
        assert [(r.mu, r.resnorm) for r in ours.trace] == [(r.mu, r.resnorm) for r in classic.trace]
        assert ours.status is classic.status

    @pytest.mark.parametrize("schedule, power", [
        (GammaSchedule.residual_norm(), 1),
        (GammaSchedule.residual_norm_squared(), 2),
    ])
    def test_trace_gamma_matches_schedule(self, schedule, power):
        a = generate(MatrixSpec.one_two_one(10))
        outcome = prqi(a, np.linspace(0.5, 1.5, 10), schedule)
        for r in outcome.trace:
            assert r.gamma == (r.resnorm if power == 1 else r.resnorm * r.resnorm)

    def test_full_and_simplified_solves_are_parallel(self):
        for seed in range(50):
            rng = np.random.default_rng(seed)
            g = rng.standard_normal((20, 20)) + 1j * rng.standard_normal((20, 20))
            a = HermitianOperator.from_dense((g + g.conj().T) / 2)
            x = rng.standard_normal(20) + 1j * rng.standard_normal(20)
            x /= np.linalg.norm(x)
            mu = rayleigh_quotient(a, x)
            for gamma in (0.1, 1.0, 10.0):
                y_full = solve_dense(perturbed_matrix(a, x, gamma) - mu * np.eye(20), x)
                y_simple = solve_shifted(a, mu - 1j * gamma, x)
                assert aligned(y_full, y_simple) >= 1 - 1e-10

    def test_full_and_simplified_iterates_agree(self):
        stop = StoppingCriteria(tol=1e-12, max_iters=4)
        for seed in range(10):
            a = random_real_symmetric(15, seed)
            x0 = np.random.default_rng(100 + seed).standard_normal(15)
            full = prqi_full(a, x0, GammaSchedule.residual_norm(), stop, keep_iterates=True)
            simple = prqi(a, x0, GammaSchedule.residual_norm(), stop, keep_iterates=True)
            for u, w in zip(full.iterates, simple.iterates):
                assert aligned(u, w) >= 1 - 1e-10

    def test_scale_and_shift_invariance_with_residual_norm(self):
        stop = StoppingCriteria(tol=1e-14, max_iters=5)
        schedule = GammaSchedule.residual_norm()
        for seed in range(20):
            a = random_real_symmetric(12, seed)
            x0 = np.random.default_rng(50 + seed).standard_normal(12)
            base = prqi(a, x0, schedule, stop, keep_iterates=True)
            shifted = prqi(a.scaled(2.0, 3.0), x0, schedule, stop, keep_iterates=True)
            flipped = prqi(a.scaled(-0.5, 0.0), x0, schedule, stop, keep_iterates=True)
            steps = min(len(base.iterates), len(shifted.iterates), len(flipped.iterates))
            assert steps >= 2
            for k in range(steps):
                assert aligned(base.iterates[k], shifted.iterates[k]) >= 1 - 1e-10
                assert aligned(np.conj(base.iterates[k]), flipped.iterates[k]) >= 1 - 1e-10

    def test_scale_invariance_breaks_with_squared_residual(self):
        stop = StoppingCriteria(tol=1e-14, max_iters=5)
        schedule = GammaSchedule.residual_norm_squared()
        broken = False
        for seed in range(20):
            a = random_real_symmetric(12, seed)
            x0 = np.random.default_rng(50 + seed).standard_normal(12)
            base = prqi(a, x0, schedule, stop, keep_iterates=True)
            shifted = prqi(a.scaled(2.0, 3.0), x0, schedule, stop, keep_iterates=True)
            for u, w in zip(base.iterates, shifted.iterates):
                if aligned(u, w) < 1 - 1e-10:
                    broken = True
        assert broken

    def test_orthogonal_invariance(self):
        rng = np.random.default_rng(7)
        a = random_real_symmetric(10, 3)
        q, _ = np.linalg.qr(rng.standard_normal((10, 10)))
        b = HermitianOperator.from_dense(q.T @ a.to_dense() @ q)
        x0 = rng.standard_normal(10)
        stop = StoppingCriteria(tol=1e-14, max_iters=5)
        base = prqi(a, x0, GammaSchedule.residual_norm(), stop, keep_iterates=True)
        rotated = prqi(b, q.T @ x0, GammaSchedule.residual_norm(), stop, keep_iterates=True)
        for u, w in zip(base.iterates[:4], rotated.iterates[:4]):
            assert aligned(q.T @ u, w) >= 1 - 1e-10

    def test_finalize_real_returns_real_vector(self):
        a = generate(MatrixSpec.one_two_one(10))
        outcome = prqi(a, np.linspace(0.2, 1.0, 10), GammaSchedule.residual_norm(), finalize_real=True)
        assert outcome.converged
        assert np.all(outcome.eigenpair.vector.imag == 0.0)
        values = oracle_eig(a).values
        assert np.min(np.abs(values - outcome.value)) < 1e-10


class TestConvergenceOrder:

    @staticmethod
    def two_dimensional_start(a, target, other, theta=0.1):
        decomp = oracle_eig(a)
        return np.cos(theta) * decomp.vectors[:, target] + np.sin(theta) * decomp.vectors[:, other]

    @pytest.mark.parametrize("a, target, other", [
        (diag3(), 1, 0),
        (generate(MatrixSpec.one_two_one(50)), 25, 26),
    ])
    def test_orders(self, a, target, other):
        x0 = self.two_dimensional_start(a, target, other)
        stop = StoppingCriteria(tol=1e-14)

        rqi = classic_rqi(a, x0, stop, keep_iterates=True)
        assert convergence_order_estimate(tan_angles_to_limit(rqi), floor=1e-12) >= 2.5

        cubic = prqi(a, x0, GammaSchedule.residual_norm_squared(), stop, keep_iterates=True)
        assert convergence_order_estimate(tan_angles_to_limit(cubic), floor=1e-12) >= 2.5

        quadratic = prqi(a, x0, GammaSchedule.residual_norm(), stop, keep_iterates=True)
        assert 1.7 <= convergence_order_estimate(tan_angles_to_limit(quadratic), floor=1e-12) <= 2.5

    def test_synthetic_quadratic_sequence(self):
        assert convergence_order_estimate([1e-1, 1e-2, 1e-4, 1e-8]) == pytest.approx(2.0)

    def test_not_estimable(self):
        with pytest.raises(NotEstimableError):
            convergence_order_estimate([0.1, 0.01])
        with pytest.raises(NotEstimableError):
            convergence_order_estimate([0.1, 1e-20, 0.0])


class TestGeneralized:

    def test_identity_mass_matches_standard(self):
        a = generate(MatrixSpec.one_two_one(12))
        x0 = np.linspace(0.3, 1.0, 12)
        stop = StoppingCriteria(tol=1e-8)
        ours = prqi_generalized(GeneralizedPair.standard(a), x0, GammaSchedule.residual_norm(), stop)
        standard = prqi(a, x0, GammaSchedule.residual_norm(), stop)
        for r, s in list(zip(ours.trace, standard.trace))[:3]:
            assert r.mu == pytest.approx(s.mu, abs=1e-12)
            assert r.resnorm == pytest.approx(s.resnorm, abs=1e-12)
        assert ours.value == pytest.approx(standard.value, abs=1e-10)

    def test_full_and_simplified_generalized_agree(self):
        a = generate(MatrixSpec.one_two_one(8))
        m = HermitianOperator.from_tridiagonal(np.full(8, 4.0 / 6.0), np.full(7, 1.0 / 6.0))
        p = GeneralizedPair(a, m)
        x0 = np.linspace(1.0, -0.5, 8)
        stop = StoppingCriteria(tol=1e-12, max_iters=3)
        full = prqi_full_generalized(p, x0, GammaSchedule.residual_norm(), stop, keep_iterates=True)
        simple = prqi_generalized(p, x0, GammaSchedule.residual_norm(), stop, keep_iterates=True)
        for u, w in zip(full.iterates, simple.iterates):
            assert aligned(u, w) >= 1 - 1e-10

    def test_generalized_rqi_converges(self):
        a = generate(MatrixSpec.one_two_one(8))
        m = HermitianOperator.from_tridiagonal(np.full(8, 4.0 / 6.0), np.full(7, 1.0 / 6.0))
        p = GeneralizedPair(a, m)
        outcome = classic_rqi_generalized(p, np.linspace(1.0, 2.0, 8))
        assert outcome.converged
        residual = a.matvec(outcome.eigenpair.vector) - outcome.value * m.matvec(outcome.eigenpair.vector)
        assert np.linalg.norm(residual) < 1e-9

    def test_rqi_generalized_diagonal_pair(self):
        p = GeneralizedPair(HermitianOperator.from_tridiagonal([2.0, 6.0], [0.0]),
                            HermitianOperator.from_tridiagonal([1.0, 2.0], [0.0]))
        outcome = classic_rqi_generalized(p, np.array([1.0, 1.0]))
        assert outcome.converged
        assert outcome.value == pytest.approx(3.0, abs=1e-10)
        v = outcome.eigenpair.vector
        assert abs(v[0]) <= 1e-8 * abs(v[1])

    def test_guard_aborts_tail_heavy_start(self):
        a = generate(MatrixSpec.one_two_one(8))
        p = GeneralizedPair.standard(a)
        guard = LocalizationGuard(tail_start_index=4, threshold=0.4)
        x0 = np.array([0, 0, 0, 0, 1.0, 1.0, 1.0, 1.0])
        outcome = prqi_generalized(p, x0, GammaSchedule.residual_norm(), guard=guard)
        assert outcome.status is SolveStatus.GUARD_ABORTED
        assert outcome.eta == pytest.approx(1.0)
        assert outcome.iterations == 0


class TestTraceCsv:

    def test_write_trace(self, tmp_path):
        outcome = prqi(diag3(), np.array([0.1, 1.0, 0.2]), GammaSchedule.residual_norm(),
                       target=np.array([0.0, 1.0, 0.0]))
        path = tmp_path / "trace.csv"
        write_trace_csv(str(path), outcome)
        with open(path, newline="") as f:
            rows = list(csv.reader(f))
        assert rows[0] == ["k", "mu", "gamma", "resnorm", "angle"]
        assert len(rows) == len(outcome.trace) + 1
        assert float(rows[1][1]) == outcome.trace[0].mu
