# src/solvers.py
"""
Iteration drivers: inverse iteration, classic RQI, projected RQI (full and
simplified), their generalized (A, M) variants, gamma schedules, stopping
logic and the localization guard.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Optional

import numpy as np

from src.config import (
    DEFAULT_MAX_ITERS,
    DEFAULT_TOL,
    EXTRA_ITERATION,
    SCALED_TOL,
    SCALED_TOL_FLOOR,
    FLOAT_FORMAT,
)
from src.errors import DomainError, NearSingularError, NotEstimableError
from src.linalg_core import (
    EigenPair,
    angle_between,
    as_vector,
    generalized_rayleigh_quotient,
    m_normalize,
    normalize,
    rayleigh_quotient,
    solve_dense,
    solve_shifted,
    solve_shifted_generalized,
)


class SolveStatus(str, Enum):
    CONVERGED = "Converged"
    MAX_ITERS_EXCEEDED = "MaxItersExceeded"
    GUARD_ABORTED = "GuardAborted"
    NEAR_SINGULAR_CONVERGED = "NearSingularConverged"


class ScheduleKind(str, Enum):
    RESIDUAL_NORM = "residual"
    RESIDUAL_NORM_SQUARED = "residual2"
    CONSTANT = "constant"
    CUSTOM = "custom"


@dataclass(frozen=True)
class GammaSchedule:
    """
    Rule producing the imaginary shift gamma_k from the iteration state.

    RESIDUAL_NORM gives gamma_k = |r_k| (locally quadratic convergence),
    RESIDUAL_NORM_SQUARED gives |r_k|^2 (locally cubic). Both satisfy
    gamma_k <= C_gamma * tan^(1+q)(theta_k) for some constant C_gamma that
    only enters the convergence bound and is never computed here.

    Custom rules are called as rule(k, mu, resnorm, x) and must be pure.
    """

    kind: ScheduleKind
    gamma0: float = 0.0
    rule: Optional[Callable] = None

    def __post_init__(self):
        if self.kind is ScheduleKind.CONSTANT and not self.gamma0 >= 0.0:
            raise DomainError(f"constant gamma must be nonnegative, got {self.gamma0}")
        if self.kind is ScheduleKind.CUSTOM and not callable(self.rule):
            raise DomainError("custom gamma schedule needs a callable rule")

    @classmethod
    def residual_norm(cls):
        return cls(ScheduleKind.RESIDUAL_NORM)

    @classmethod
    def residual_norm_squared(cls):
        return cls(ScheduleKind.RESIDUAL_NORM_SQUARED)

    @classmethod
    def constant(cls, gamma0):
        return cls(ScheduleKind.CONSTANT, gamma0=float(gamma0))

    @classmethod
    def custom(cls, rule):
        return cls(ScheduleKind.CUSTOM, rule=rule)

    @classmethod
    def parse(cls, text):
        """
        'residual' | 'residual2' | 'constant:<value>'
        """
        text = text.strip().lower()
        if text == "residual":
            return cls.residual_norm()
        if text == "residual2":
            return cls.residual_norm_squared()
        if text.startswith("constant:"):
            try:
                value = float(text.split(":", 1)[1])
            except ValueError:
                raise DomainError(f"invalid constant gamma in {text!r}")
            return cls.constant(value)
        raise DomainError(f"unknown gamma schedule {text!r} (use residual, residual2 or constant:<v>)")

    @property
    def label(self):
        if self.kind is ScheduleKind.CONSTANT:
            return f"constant:{self.gamma0:g}"
        return self.kind.value

    def __call__(self, k, mu, resnorm, x):
        if self.kind is ScheduleKind.RESIDUAL_NORM:
            return resnorm
        if self.kind is ScheduleKind.RESIDUAL_NORM_SQUARED:
            return resnorm * resnorm
        if self.kind is ScheduleKind.CONSTANT:
            return self.gamma0
        gamma = float(self.rule(k, mu, resnorm, x))
        if not gamma >= 0.0:
            raise DomainError(f"custom gamma schedule returned {gamma} at k={k}")
        return gamma


@dataclass(frozen=True)
class StoppingCriteria:
    tol: float = DEFAULT_TOL
    max_iters: int = DEFAULT_MAX_ITERS
    extra_iteration: bool = EXTRA_ITERATION
    scaled: bool = SCALED_TOL
    atol: float = SCALED_TOL_FLOOR  # floor of the scaled threshold

    def __post_init__(self):
        if not self.tol > 0.0:
            raise DomainError(f"tolerance must be positive, got {self.tol}")
        if self.max_iters < 1:
            raise DomainError(f"max_iters must be at least 1, got {self.max_iters}")
        if not self.atol > 0.0:
            raise DomainError(f"absolute tolerance floor must be positive, got {self.atol}")

    def threshold(self, mu):
        return max(self.tol * abs(mu), self.atol) if self.scaled else self.tol

    def satisfied(self, resnorm, mu):
        return resnorm <= self.threshold(mu)


@dataclass(frozen=True)
class LocalizationGuard:
    """
    Aborts an iteration whose iterate puts more than `threshold` of its
    Euclidean mass on indices >= tail_start_index.
    """

    tail_start_index: int
    threshold: float

    def __post_init__(self):
        if self.tail_start_index < 0:
            raise DomainError(f"tail start index must be >= 0, got {self.tail_start_index}")
        if not 0.0 < self.threshold < 1.0:
            raise DomainError(f"guard threshold must lie in (0, 1), got {self.threshold}")


@dataclass(frozen=True)
class TraceRecord:
    k: int
    mu: float
    gamma: float
    resnorm: float
    angle: Optional[float] = None


@dataclass(frozen=True)
class SolveOutcome:
    status: SolveStatus
    eigenpair: EigenPair
    iterations: int
    trace: tuple
    eta: Optional[float] = None
    iterates: tuple = field(default=(), repr=False)

    @property
    def converged(self):
        return self.status in (SolveStatus.CONVERGED, SolveStatus.NEAR_SINGULAR_CONVERGED)

    @property
    def value(self):
        return self.eigenpair.value

    def tan_angles(self):
        return [math.tan(r.angle) for r in self.trace if r.angle is not None]


def eta(x, guard):
    """
    Share of the Euclidean norm of x carried by the tail entries.
    """
    x = as_vector(x)
    if not guard.tail_start_index < x.size:
        raise DomainError(f"tail start {guard.tail_start_index} outside a vector of length {x.size}")
    total = np.linalg.norm(x)
    if total == 0.0:
        raise DomainError("eta of the zero vector")
    return float(np.linalg.norm(x[guard.tail_start_index:]) / total)


# ============================================================================
# ITERATION ENGINE
# ============================================================================

@dataclass(frozen=True)
class _Problem:
    quotient: Callable
    residual: Callable
    normalize: Callable
    solve: Callable  # (mu, gamma, x) -> unnormalized next iterate
    real: bool


def _standard_problem(a, solve):
    return _Problem(
        quotient=lambda x: rayleigh_quotient(a, x),
        residual=lambda mu, x: a.matvec(x) - mu * x,
        normalize=normalize,
        solve=solve,
        real=a.is_real,
    )


def _generalized_problem(p, solve):
    return _Problem(
        quotient=lambda x: generalized_rayleigh_quotient(p, x),
        residual=lambda mu, x: p.a.matvec(x) - mu * p.m.matvec(x),
        normalize=lambda x: m_normalize(p.m, x),
        solve=solve,
        real=p.a.is_real and p.m.is_real,
    )


def _evaluate(problem, x):
    mu = problem.quotient(x)
    return mu, float(np.linalg.norm(problem.residual(mu, x)))


def _refine(problem, x, mu, resnorm, solution):
    # partially computed direction from a near-singular solve, kept if it is no worse
    if solution is None:
        return x, mu, resnorm
    try:
        candidate = problem.normalize(solution)
    except DomainError:
        return x, mu, resnorm
    cand_mu, cand_rn = _evaluate(problem, candidate)
    if cand_rn <= resnorm:
        return candidate, cand_mu, cand_rn
    return x, mu, resnorm


def _finalize_real(problem, x, mu, resnorm, stop):
    # one classic RQI step on the componentwise real part
    real_part = x.real.astype(np.complex128)
    if not np.any(real_part):
        return x, mu, resnorm
    xr = problem.normalize(real_part)
    mu_r = problem.quotient(xr)
    try:
        y = problem.solve(mu_r, 0.0, xr)
    except NearSingularError as e:
        y = e.solution if e.solution is not None else xr
    xf = problem.normalize(y)
    mu_f, rn_f = _evaluate(problem, xf)
    if rn_f <= max(resnorm, stop.threshold(mu)):
        return xf, mu_f, rn_f
    return x, mu, resnorm


def _iterate(problem, x0, stop, schedule=None, guard=None, target=None,
             finalize_real=False, keep_iterates=False, verbose=False, label="solver",
             raise_on_first_singular=False):
    x = problem.normalize(as_vector(x0))
    if target is not None:
        target = as_vector(target)

    trace = []
    iterates = []
    pending_extra = False
    status = None
    eta_value = None
    k = 0

    while True:
        mu, resnorm = _evaluate(problem, x)
        gamma = schedule(k, mu, resnorm, x) if schedule is not None else 0.0
        angle = angle_between(x, target) if target is not None else None
        trace.append(TraceRecord(k, mu, gamma, resnorm, angle))
        if keep_iterates:
            iterates.append(x)
        if verbose:
            print(f"  k={k:3d}  mu={mu:+.12e}  gamma={gamma:.3e}  |r|={resnorm:.3e}")

        if guard is not None:
            eta_value = eta(x, guard)
            if eta_value > guard.threshold:
                status = SolveStatus.GUARD_ABORTED
                break

        if stop.satisfied(resnorm, mu):
            if stop.extra_iteration and not pending_extra and k < stop.max_iters and resnorm > 0.0:
                pending_extra = True
            else:
                status = SolveStatus.CONVERGED
                break

        if k >= stop.max_iters:
            status = SolveStatus.MAX_ITERS_EXCEEDED
            break

        try:
            y = problem.solve(mu, gamma, x)
        except NearSingularError as e:
            if raise_on_first_singular and k == 0:
                raise
            x, mu, resnorm = _refine(problem, x, mu, resnorm, e.solution)
            status = SolveStatus.NEAR_SINGULAR_CONVERGED
            break

        x = problem.normalize(y)
        k += 1

    if finalize_real and problem.real and status is not SolveStatus.GUARD_ABORTED:
        x, mu, resnorm = _finalize_real(problem, x, mu, resnorm, stop)

    last = trace[-1]
    if mu != last.mu or resnorm != last.resnorm:
        # refinement or the real-part step replaced the last iterate
        gamma = schedule(last.k, mu, resnorm, x) if schedule is not None else 0.0
        angle = angle_between(x, target) if target is not None else None
        trace[-1] = TraceRecord(last.k, mu, gamma, resnorm, angle)
        if keep_iterates:
            iterates[-1] = x

    if verbose:
        mark = "✓" if status in (SolveStatus.CONVERGED, SolveStatus.NEAR_SINGULAR_CONVERGED) else "✗"
        print(f"{mark} {label}: {status.value} after {k} iteration(s), eigenvalue {mu:.12g}")

    return SolveOutcome(
        status=status,
        eigenpair=EigenPair(value=mu, vector=x, residual_norm=resnorm),
        iterations=k,
        trace=tuple(trace),
        eta=eta_value,
        iterates=tuple(iterates),
    )


# ============================================================================
# STANDARD PROBLEM  A v = lambda v
# ============================================================================

def inverse_iteration(a, mu, x0, stop=StoppingCriteria(), target=None,
                      keep_iterates=False, verbose=False):
    """
    Fixed-shift inverse iteration.

    Every step solves (A - mu I) y = x. The stopping residual is evaluated at
    the Rayleigh quotient of the iterate, which is what the trace reports.
    Raises NearSingularError when the first solve hits an eigenvalue.
    """
    problem = _standard_problem(a, lambda _mu, _gamma, x: solve_shifted(a, mu, x))
    return _iterate(problem, x0, stop, target=target, keep_iterates=keep_iterates,
                    verbose=verbose, label="inverse iteration", raise_on_first_singular=True)


def classic_rqi(a, x0, stop=StoppingCriteria(), target=None, keep_iterates=False, verbose=False):
    problem = _standard_problem(a, lambda mu, _gamma, x: solve_shifted(a, mu, x))
    return _iterate(problem, x0, stop, target=target, keep_iterates=keep_iterates,
                    verbose=verbose, label="classic RQI")


def _full_projection_solve(a, mu, gamma, x):
    # [A - mu I + i gamma (I - x x*)] y = x, rank-one modified dense system
    matrix = a.to_dense() - mu * np.eye(a.n) + 1j * gamma * (np.eye(a.n) - np.outer(x, x.conj()))
    return solve_dense(matrix, x)


def prqi_full(a, x0, schedule, stop=StoppingCriteria(), target=None,
              keep_iterates=False, verbose=False):
    """
    Projected RQI with the full rank-one projection in every solve.
    Reference for the imaginary-shift simplification.
    """
    problem = _standard_problem(a, lambda mu, gamma, x: _full_projection_solve(a, mu, gamma, x))
    return _iterate(problem, x0, stop, schedule=schedule, target=target,
                    keep_iterates=keep_iterates, verbose=verbose, label="PRQI (full)")


def prqi(a, x0, schedule, stop=StoppingCriteria(), finalize_real=False, target=None,
         keep_iterates=False, verbose=False):
    """
    Projected RQI, simplified form: each step solves
    [A - (mu_k - i gamma_k) I] z = x_k.

    With finalize_real on a real symmetric A one classic RQI step is applied
    to the real part of the last iterate; it is not counted in `iterations`.
    """
    problem = _standard_problem(a, lambda mu, gamma, x: solve_shifted(a, mu - 1j * gamma, x))
    return _iterate(problem, x0, stop, schedule=schedule, target=target,
                    finalize_real=finalize_real, keep_iterates=keep_iterates,
                    verbose=verbose, label="PRQI")


# ============================================================================
# GENERALIZED PROBLEM  A v = lambda M v
# ============================================================================

def inverse_iteration_generalized(p, mu, x0, stop=StoppingCriteria(), target=None,
                                  guard=None, keep_iterates=False, verbose=False):
    problem = _generalized_problem(
        p, lambda _mu, _gamma, x: solve_shifted_generalized(p, mu, p.m.matvec(x)))
    return _iterate(problem, x0, stop, guard=guard, target=target, keep_iterates=keep_iterates,
                    verbose=verbose, label="inverse iteration (generalized)",
                    raise_on_first_singular=True)


def classic_rqi_generalized(p, x0, stop=StoppingCriteria(), target=None, guard=None,
                            keep_iterates=False, verbose=False):
    """
    [A - R(x_k) M] y = M x_k, M-normalized.
    """
    problem = _generalized_problem(
        p, lambda mu, _gamma, x: solve_shifted_generalized(p, mu, p.m.matvec(x)))
    return _iterate(problem, x0, stop, guard=guard, target=target, keep_iterates=keep_iterates,
                    verbose=verbose, label="classic RQI (generalized)")


def _full_projection_solve_generalized(p, mu, gamma, x):
    mass = p.m.to_dense()
    mx = p.m.matvec(x)
    matrix = p.a.to_dense() - mu * mass + 1j * gamma * (mass - np.outer(mx, mx.conj()))
    return solve_dense(matrix, mx)


def prqi_full_generalized(p, x0, schedule, stop=StoppingCriteria(), target=None,
                          keep_iterates=False, verbose=False):
    """
    Full-projection PRQI for (A, M): A -> A + i gamma (M - (Mx)(Mx)*).
    """
    problem = _generalized_problem(
        p, lambda mu, gamma, x: _full_projection_solve_generalized(p, mu, gamma, x))
    return _iterate(problem, x0, stop, schedule=schedule, target=target,
                    keep_iterates=keep_iterates, verbose=verbose, label="PRQI (full, generalized)")


def prqi_generalized(p, x0, schedule, stop=StoppingCriteria(), guard=None, finalize_real=False,
                     target=None, keep_iterates=False, verbose=False):
    """
    PRQI for (A, M): solve [A - (mu_k - i gamma_k) M] z = M x_k and
    M-normalize; M^(1/2) is never formed. With a guard, eta is checked on
    every iterate and the run stops with GUARD_ABORTED once it exceeds eta*.
    """
    problem = _generalized_problem(
        p, lambda mu, gamma, x: solve_shifted_generalized(p, mu - 1j * gamma, p.m.matvec(x)))
    return _iterate(problem, x0, stop, schedule=schedule, guard=guard, target=target,
                    finalize_real=finalize_real, keep_iterates=keep_iterates,
                    verbose=verbose, label="PRQI (generalized)")


# ============================================================================
# DIAGNOSTICS
# ============================================================================

def convergence_order_estimate(tan_angles, floor=None):
    """
    Least-squares slope of log tan(theta_{k+1}) against log tan(theta_k).

    Pairs whose successor is at or below `floor` (default 10 * eps) are
    saturated and dropped. Needs at least two usable pairs.
    """
    t = np.asarray(list(tan_angles), dtype=np.float64)
    if floor is None:
        floor = 10.0 * np.finfo(np.float64).eps
    if t.size < 3:
        raise NotEstimableError(f"need at least 3 trace entries, got {t.size}")
    usable = (t[:-1] > floor) & (t[1:] > floor)
    if np.count_nonzero(usable) < 2:
        raise NotEstimableError("fewer than two unsaturated steps in the trace")
    slope, _ = np.polyfit(np.log(t[:-1][usable]), np.log(t[1:][usable]), 1)
    return float(slope)


TRACE_HEADER = ["k", "mu", "gamma", "resnorm", "angle"]


def trace_rows(outcome):
    rows = []
    for r in outcome.trace:
        angle = "" if r.angle is None else format(r.angle, FLOAT_FORMAT)
        rows.append([str(r.k), format(r.mu, FLOAT_FORMAT), format(r.gamma, FLOAT_FORMAT),
                     format(r.resnorm, FLOAT_FORMAT), angle])
    return rows


def write_trace_csv(path, outcome):
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f)
        writer.writerow(TRACE_HEADER)
        writer.writerows(trace_rows(outcome))
