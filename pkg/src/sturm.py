# src/sturm.py
"""
Band-gap eigenvalues of -u'' + q(x) u = lambda u on [0, X] with
q(x) = sin(x) - 40 / (1 + x^2), u(0) = 0 and a natural boundary at X.

Piecewise-linear elements on a uniform mesh give the tridiagonal pair
(A + B, M): stiffness A, potential term B (Gauss-Legendre quadrature) and
mass M. Gap eigenvalues are computed with projected RQI for (A + B, M)
started from oscillating cutoff profiles; a localization guard rejects
iterations drifting towards modes that live at the artificial right end.
"""
from __future__ import annotations

import os
import re
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.linalg
import scipy.sparse.linalg as spla

from src.config import (
    BAND_J1,
    BAND_J2,
    DEFAULT_MAX_ITERS,
    DENSE_FALLBACK_MAX_DIM,
    SPURIOUS_SCAN_POINTS,
    STURM_ETA_STAR,
    STURM_H,
    STURM_QUADRATURE,
    STURM_S,
    STURM_SCHEDULE,
    STURM_TOL,
    STURM_X,
    STURM_X0,
)
from src.errors import DomainError, EigensolverError, MatrixFormatError, NearSingularError
from src.linalg_core import GeneralizedPair, HermitianOperator, Storage, m_normalize
from src.solvers import (
    GammaSchedule,
    LocalizationGuard,
    StoppingCriteria,
    classic_rqi_generalized,
    eta,
    inverse_iteration_generalized,
    prqi_generalized,
)

INDEX_RETRY_SHIFT = 1e-10
# a computed eigenvalue sits within rounding of the true one; rank it from just below
RANK_MARGIN = 1e-6


@dataclass(frozen=True)
class SturmConfig:
    X: float = STURM_X
    h: float = STURM_H
    x0: float = STURM_X0  # profile is forced to zero on [0, x0]
    quadrature_points: int = STURM_QUADRATURE

    def __post_init__(self):
        if not self.X > 0.0:
            raise DomainError(f"domain length X must be positive, got {self.X}")
        if not 0.0 < self.h < self.X:
            raise DomainError(f"mesh width must satisfy 0 < h < X, got h = {self.h}")
        ratio = self.X / self.h
        if abs(ratio - round(ratio)) > 1e-12 * ratio:
            raise DomainError(f"X / h = {ratio!r} is not an integer; mesh would not be uniform")
        if self.quadrature_points < 2:
            raise DomainError(f"need at least 2 quadrature points, got {self.quadrature_points}")
        if not 0.0 <= self.x0 < self.X:
            raise DomainError(f"x0 must lie in [0, X), got {self.x0}")

    @property
    def n_elements(self):
        return int(round(self.X / self.h))

    @property
    def n(self):
        # one unknown per node except x = 0
        return self.n_elements

    @property
    def nodes(self):
        """Coordinates of the unknowns (x_1 .. x_N)."""
        return self.h * np.arange(1, self.n_elements + 1)


@dataclass(frozen=True)
class InitialProfile:
    n_osc: float
    R: float

    def __post_init__(self):
        if not self.n_osc > 0.0 or abs(2.0 * self.n_osc - round(2.0 * self.n_osc)) > 1e-12:
            raise DomainError(f"n_osc must be a positive multiple of 1/2, got {self.n_osc}")
        if not self.R > 0.0:
            raise DomainError(f"cutoff R must be positive, got {self.R}")

    @property
    def pieces(self):
        return int(round(2.0 * self.n_osc))


@dataclass(frozen=True)
class BandStructure:
    J1: tuple = BAND_J1
    J2: tuple = BAND_J2

    def __post_init__(self):
        if not (self.J1[0] < self.J1[1] < self.J2[0] < self.J2[1]):
            raise DomainError(f"bands must be ordered and disjoint: J1={self.J1}, J2={self.J2}")

    @property
    def gap(self):
        return (self.J1[1], self.J2[0])

    def classify(self, value):
        if value < self.J1[0]:
            return "below"
        if value <= self.J1[1]:
            return "J1"
        if value < self.J2[0]:
            return "gap"
        if value <= self.J2[1]:
            return "J2"
        return "above"

    def in_gap(self, value):
        return self.classify(value) == "gap"


def potential(x):
    x = np.asarray(x, dtype=np.float64)
    return np.sin(x) - 40.0 / (1.0 + x * x)


# ============================================================================
# ASSEMBLY
# ============================================================================

def _element_bands(config, q=potential):
    # local P1 matrices are symmetric: (left, left), (left, right), (right, right)
    h = config.h
    xi, w = np.polynomial.legendre.leggauss(config.quadrature_points)
    left = h * np.arange(config.n_elements)
    x = left[:, None] + 0.5 * h * (1.0 + xi)[None, :]
    qx = q(x) * (0.5 * h) * w[None, :]
    phi_l = 0.5 * (1.0 - xi)
    phi_r = 0.5 * (1.0 + xi)
    return qx @ (phi_l * phi_l), qx @ (phi_l * phi_r), qx @ (phi_r * phi_r)


def _global_tridiagonal(ll, lr, rr):
    # element sums on all N + 1 nodes, then drop node 0 (Dirichlet)
    n_el = ll.size
    diag = np.zeros(n_el + 1)
    diag[:-1] += ll
    diag[1:] += rr
    return diag[1:], lr[1:]


def stiffness_matrix(config):
    n_el = config.n_elements
    h = config.h
    return HermitianOperator.from_tridiagonal(
        *_global_tridiagonal(np.full(n_el, 1.0 / h), np.full(n_el, -1.0 / h), np.full(n_el, 1.0 / h)))


def mass_matrix(config):
    n_el = config.n_elements
    h = config.h
    return HermitianOperator.from_tridiagonal(
        *_global_tridiagonal(np.full(n_el, h / 3.0), np.full(n_el, h / 6.0), np.full(n_el, h / 3.0)))


def potential_matrix(config, q=potential):
    return HermitianOperator.from_tridiagonal(*_global_tridiagonal(*_element_bands(config, q)))


def assemble(config, q=potential):
    """
    Return the pair (A + B, M) for the given mesh and potential q.

    Passing q = lambda x: 0 * x assembles the plain Laplacian pair, which
    the tests use against the analytic Dirichlet/Neumann mode.
    """
    a = stiffness_matrix(config)
    b = potential_matrix(config, q)
    m = mass_matrix(config)
    ab = HermitianOperator.from_tridiagonal(a.diag + b.diag, a.offdiag + b.offdiag)
    return GeneralizedPair(ab, m)


def build_initial_vector(config, profile):
    if not profile.R > config.x0:
        raise DomainError(f"cutoff R = {profile.R} must exceed x0 = {config.x0}")
    if not profile.R < config.X:
        raise DomainError(f"cutoff R = {profile.R} must be below X = {config.X}")

    x = config.nodes
    length = (profile.R - config.x0) / profile.pieces
    inside = (x > config.x0) & (x <= profile.R)
    piece = np.clip(np.ceil((x - config.x0) / length) - 1, 0, profile.pieces - 1).astype(int)
    f = np.where(inside, np.where(piece % 2 == 0, 1.0, -1.0), 0.0)
    if not np.any(f):
        raise DomainError(f"profile (n_osc={profile.n_osc}, R={profile.R}) covers no mesh node")
    return m_normalize(mass_matrix(config), f)


def tail_start_index(config, S=STURM_S):
    """
    First unknown whose coordinate exceeds S.
    """
    index = int(np.searchsorted(config.nodes, S * (1.0 + 1e-12), side="right"))
    if not 0 <= index < config.n:
        raise DomainError(f"tail start S = {S} leaves no unknowns in (S, X]")
    return index


def default_guard(config, S=STURM_S, eta_star=STURM_ETA_STAR):
    return LocalizationGuard(tail_start_index(config, S), eta_star)


# ============================================================================
# EIGENVALUE INDEX (inertia)
# ============================================================================

def _negative_pivots_tridiagonal(diag, offdiag):
    # LDL^T pivots of a symmetric tridiagonal matrix; None on breakdown
    count = 0
    d = diag[0]
    for i in range(diag.size):
        if i > 0:
            d = diag[i] - offdiag[i - 1] ** 2 / d
        if d == 0.0 or not np.isfinite(d):
            return None
        if d < 0.0:
            count += 1
    return count


def _negative_pivots_dense(matrix):
    try:
        _, d, _ = scipy.linalg.ldl(matrix, lower=True, hermitian=True, check_finite=False)
    except (ValueError, np.linalg.LinAlgError):
        return None
    eigs = np.linalg.eigvalsh(d)
    if np.any(eigs == 0.0):
        return None
    return int(np.count_nonzero(eigs < 0.0))


def _negative_pivots_sparse(matrix):
    try:
        lu = spla.splu(matrix.tocsc(), permc_spec="NATURAL", diag_pivot_thresh=0.0,
                       options={"SymmetricMode": True})
    except RuntimeError:
        return None
    pivots = lu.U.diagonal().real
    if np.any(pivots == 0.0):
        return None
    return int(np.count_nonzero(pivots < 0.0))


def _count_below(p, value):
    a, m = p.a, p.m
    if a.storage is Storage.TRIDIAGONAL and m.storage is Storage.TRIDIAGONAL:
        return _negative_pivots_tridiagonal(a.diag - value * m.diag, a.offdiag - value * m.offdiag)
    if p.n <= DENSE_FALLBACK_MAX_DIM or Storage.DENSE in (a.storage, m.storage):
        return _negative_pivots_dense(a.to_dense() - value * m.to_dense())
    return _negative_pivots_sparse(a.to_sparse() - value * m.to_sparse())


def eigenvalue_index(p, value):
    """
    1 + number of generalized eigenvalues of (A, M) below `value`, read off
    the inertia of A - value M (M positive definite, Sylvester's law).
    """
    count = _count_below(p, value)
    if count is None:
        count = _count_below(p, value + INDEX_RETRY_SHIFT)
    if count is None:
        raise EigensolverError(f"inertia factorization broke down at lambda = {value!r}")
    return count + 1


def eigenpair_rank(p, value):
    """Index of a computed eigenvalue, counted from the smallest (1-based)."""
    return eigenvalue_index(p, value - RANK_MARGIN * (1.0 + abs(value)))


# ============================================================================
# GAP EIGENPAIRS
# ============================================================================

@dataclass(frozen=True)
class GapResult:
    method: str
    outcome: object  # SolveOutcome
    index: Optional[int]
    band: str
    eta: float
    eta_star: float

    @property
    def value(self):
        return self.outcome.value

    @property
    def in_gap(self):
        return self.band == "gap"

    @property
    def is_target(self):
        return self.outcome.converged and self.in_gap and self.eta < self.eta_star


def _gap_result(method, p, outcome, guard, bands):
    index = eigenpair_rank(p, outcome.value) if outcome.converged else None
    return GapResult(
        method=method,
        outcome=outcome,
        index=index,
        band=bands.classify(outcome.value),
        eta=eta(outcome.eigenpair.vector, guard),
        eta_star=guard.threshold,
    )


def solve_gap_eigenpair(config, profile, schedule=None, stop=None, guard=None, pair=None,
                        method="prqi", bands=BandStructure(), verbose=False):
    """
    Run PRQI for (A + B, M) from the profile's initial vector.

    method="prqi" runs with the localization guard; method="rqi" runs
    classic generalized RQI unguarded (eta is still reported).
    `pair` lets callers reuse one assembled system across profiles.
    """
    p = pair if pair is not None else assemble(config)
    schedule = schedule if schedule is not None else GammaSchedule.parse(STURM_SCHEDULE)
    stop = stop if stop is not None else StoppingCriteria(tol=STURM_TOL)
    guard = guard if guard is not None else default_guard(config)
    x0 = build_initial_vector(config, profile)

    if method == "prqi":
        outcome = prqi_generalized(p, x0, schedule, stop, guard=guard, finalize_real=True,
                                   verbose=verbose)
    elif method == "rqi":
        outcome = classic_rqi_generalized(p, x0, stop, verbose=verbose)
    else:
        raise DomainError(f"unknown method {method!r} (use prqi or rqi)")
    return _gap_result(method, p, outcome, guard, bands)


def locate_spurious_mode(config, pair=None, guard=None, stop=None, bands=BandStructure(),
                         scan_points=SPURIOUS_SCAN_POINTS):
    """
    Boundary-localized eigenpair of (A + B, M) inside the gap, or None.

    Inverse iteration runs from `scan_points` shifts spread over the open
    gap, each started from a vector concentrated at the right end. Of the
    converged gap eigenpairs whose tail mass exceeds the guard threshold,
    the one with the largest tail mass is returned.
    """
    if scan_points < 1:
        raise DomainError(f"scan_points must be >= 1, got {scan_points}")
    p = pair if pair is not None else assemble(config)
    guard = guard if guard is not None else default_guard(config)
    stop = stop if stop is not None else StoppingCriteria(tol=STURM_TOL)
    x0 = np.exp(-(config.X - config.nodes))
    lo, hi = bands.gap

    best = None
    for shift in np.linspace(lo, hi, scan_points + 2)[1:-1]:
        try:
            outcome = inverse_iteration_generalized(p, float(shift), x0, stop)
        except NearSingularError:
            continue
        if not outcome.converged or not bands.in_gap(outcome.value):
            continue
        result = _gap_result("inverse-iteration", p, outcome, guard, bands)
        if result.eta > guard.threshold and (best is None or result.eta > best.eta):
            best = result
    return best


# ============================================================================
# CONFIG FILE
# ============================================================================

@dataclass(frozen=True)
class SturmSettings:
    config: SturmConfig = field(default_factory=SturmConfig)
    profile: Optional[InitialProfile] = None
    tol: float = STURM_TOL
    eta_star: float = STURM_ETA_STAR
    S: float = STURM_S
    schedule: GammaSchedule = field(default_factory=lambda: GammaSchedule.parse(STURM_SCHEDULE))
    max_iters: int = DEFAULT_MAX_ITERS

    @property
    def stop(self):
        return StoppingCriteria(tol=self.tol, max_iters=self.max_iters)

    @property
    def guard(self):
        return default_guard(self.config, self.S, self.eta_star)


_FLOAT_KEYS = {"X", "h", "x0", "R", "n_osc", "tol", "eta_star", "S"}
_KNOWN_KEYS = _FLOAT_KEYS | {"schedule", "max_iters"}
_LINE = re.compile(r"^(\w+)\s*(?:=|:|\s)\s*(\S.*)$")


def load_sturm_config(path):
    """
    Read `key = value` lines (':' or whitespace also separate). Keys:
    X, h, x0, R, n_osc, tol, eta_star, S, schedule, max_iters.
    """
    if not os.path.exists(path):
        raise MatrixFormatError(f"file not found: {path}")

    values = {}
    with open(path, "r", encoding="utf-8") as f:
        for lineno, raw in enumerate(f, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            match = _LINE.match(line)
            if match is None:
                raise MatrixFormatError(f"{path}:{lineno}: expected 'key = value', got {line!r}")
            key, value = match.group(1), match.group(2).strip()
            if key not in _KNOWN_KEYS:
                raise DomainError(f"{path}:{lineno}: unknown key {key!r}")
            values[key] = value

    def number(key, cast=float):
        try:
            return cast(values[key])
        except ValueError:
            raise DomainError(f"{path}: invalid value for {key}: {values[key]!r}")

    base = SturmConfig()
    config = SturmConfig(
        X=number("X") if "X" in values else base.X,
        h=number("h") if "h" in values else base.h,
        x0=number("x0") if "x0" in values else base.x0,
    )

    profile = None
    if "R" in values or "n_osc" in values:
        if not ("R" in values and "n_osc" in values):
            raise DomainError(f"{path}: R and n_osc must be given together")
        profile = InitialProfile(n_osc=number("n_osc"), R=number("R"))

    defaults = SturmSettings(config=config)
    return SturmSettings(
        config=config,
        profile=profile,
        tol=number("tol") if "tol" in values else defaults.tol,
        eta_star=number("eta_star") if "eta_star" in values else defaults.eta_star,
        S=number("S") if "S" in values else defaults.S,
        schedule=GammaSchedule.parse(values["schedule"]) if "schedule" in values else defaults.schedule,
        max_iters=number("max_iters", int) if "max_iters" in values else defaults.max_iters,
    )
