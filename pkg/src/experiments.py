# src/experiments.py
"""
Experiment runners behind the command line: basin rasters on diag(-1, s, 1),
angle sweeps, success-fraction tables, the band-gap table and single solves.

Independent runs are spread over a thread pool; results are always stored by
their position (lattice cell, angle, sample index) so output files do not
depend on scheduling.
"""
from __future__ import annotations

import concurrent.futures
import csv
import os
from dataclasses import dataclass

import numpy as np
from scipy import ndimage
from tqdm import tqdm

from src.config import (
    BASIN_BACKGROUND,
    BASIN_LABEL_TOL,
    BASIN_PALETTE,
    BASIN_TOL,
    DEFAULT_THREADS,
    FLOAT_FORMAT,
    SUCCESS_RTOL,
    SWEEP_TOL,
    TABLE1_BANDS,
    TABLE1_BATCH,
    TABLE1_MAX_DRAWS,
    TABLE1_SAMPLES,
    TABLE1_SCALE_DECADES,
    TABLE1_SIZE,
)
from src.errors import DomainError, NotEstimableError
from src.linalg_core import GeneralizedPair, normalize, rayleigh_quotient
from src.matrices import (
    MatrixSpec,
    eigenvalue_ordering_satisfied,
    generate,
    initial_vector_with_angle,
    oracle_eig,
    rng_stream,
    simplex_lattice,
)
from src.solvers import (
    GammaSchedule,
    StoppingCriteria,
    classic_rqi,
    classic_rqi_generalized,
    inverse_iteration,
    inverse_iteration_generalized,
    prqi,
    prqi_full,
    prqi_full_generalized,
    prqi_generalized,
)
from src.sturm import solve_gap_eigenpair

SENTINEL = 0  # basin label for runs that did not converge to a listed eigenvalue
OUTSIDE = -1  # raster cells not on the interior lattice

SOLVE_METHODS = ("rqi", "classic-rqi", "prqi", "prqi-full", "inverse-iteration")


def fmt(value):
    return format(value, FLOAT_FORMAT)


def write_csv(path, header, rows):
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f)
        writer.writerow(header)
        writer.writerows(rows)


def _run_all(task, count, threads=DEFAULT_THREADS, desc="Running", progress_callback=None,
             show_progress=True):
    """
    Evaluate task(i) for i in range(count); results keep index order.
    """
    results = [None] * count
    with tqdm(total=count, desc=desc, unit=" run", ncols=100, disable=not show_progress) as bar:
        if threads <= 1:
            for i in range(count):
                results[i] = task(i)
                bar.update(1)
                if progress_callback:
                    progress_callback(i + 1, count)
        else:
            with concurrent.futures.ThreadPoolExecutor(max_workers=threads) as executor:
                futures = {executor.submit(task, i): i for i in range(count)}
                for done, future in enumerate(concurrent.futures.as_completed(futures), 1):
                    results[futures[future]] = future.result()
                    bar.update(1)
                    if progress_callback:
                        progress_callback(done, count)
    return results


def succeeded(value, target):
    return abs(value - target) <= SUCCESS_RTOL * (1.0 + abs(target))


def run_standard(method, a, x0, schedule, stop, shift=None, finalize_real=False, verbose=False):
    if method in ("rqi", "classic-rqi"):
        return classic_rqi(a, x0, stop, verbose=verbose)
    if method == "prqi":
        return prqi(a, x0, schedule, stop, finalize_real=finalize_real, verbose=verbose)
    if method == "prqi-full":
        return prqi_full(a, x0, schedule, stop, verbose=verbose)
    if method == "inverse-iteration":
        if shift is None:
            raise DomainError("inverse iteration needs a shift")
        return inverse_iteration(a, shift, x0, stop, verbose=verbose)
    raise DomainError(f"unknown solver {method!r} (use one of {', '.join(SOLVE_METHODS)})")


def run_generalized(method, p, x0, schedule, stop, shift=None, finalize_real=False, guard=None,
                    verbose=False):
    if method in ("rqi", "classic-rqi"):
        return classic_rqi_generalized(p, x0, stop, guard=guard, verbose=verbose)
    if method == "prqi":
        return prqi_generalized(p, x0, schedule, stop, guard=guard, finalize_real=finalize_real,
                                verbose=verbose)
    if method == "prqi-full":
        return prqi_full_generalized(p, x0, schedule, stop, verbose=verbose)
    if method == "inverse-iteration":
        if shift is None:
            raise DomainError("inverse iteration needs a shift")
        return inverse_iteration_generalized(p, shift, x0, stop, guard=guard, verbose=verbose)
    raise DomainError(f"unknown solver {method!r} (use one of {', '.join(SOLVE_METHODS)})")


# ============================================================================
# SOLVE
# ============================================================================

def solve_problem(a, x0, method="prqi", m=None, schedule=None, stop=None, shift=None,
                  finalize_real=False, guard=None, verbose=False):
    """
    One solve on a user-supplied operator; `m` switches to (A, M).
    """
    schedule = schedule if schedule is not None else GammaSchedule.residual_norm()
    stop = stop if stop is not None else StoppingCriteria()
    if m is None:
        if guard is not None:
            raise DomainError("the localization guard is only available for generalized solves")
        if verbose:
            print(f"Solver: {method}  n = {a.n}  storage = {a.storage.value}")
        return run_standard(method, a, x0, schedule, stop, shift, finalize_real, verbose)

    p = GeneralizedPair(a, m)
    if verbose:
        print(f"Solver: {method} (generalized)  n = {p.n}")
    return run_generalized(method, p, x0, schedule, stop, shift, finalize_real, guard, verbose)


# ============================================================================
# BASINS OF ATTRACTION
# ============================================================================

@dataclass(frozen=True, eq=False)
class BasinRaster:
    """
    Cell (row j - 1, column i - 1) holds the result for lattice point
    (i, j, resolution - i - j). Cells off the lattice carry OUTSIDE.
    """

    s: float
    resolution: int
    solver: str
    eigenvalues: tuple
    labels: np.ndarray
    iterations: np.ndarray
    points: tuple  # lattice points in evaluation order

    @property
    def covered(self):
        return self.labels != OUTSIDE

    def areas(self):
        return {label: int(np.count_nonzero(self.labels == label))
                for label in range(SENTINEL, len(self.eigenvalues) + 1)}


def basin_label(value, eigenvalues, converged=True):
    if not converged:
        return SENTINEL
    for label, lam in enumerate(eigenvalues, 1):
        if abs(value - lam) <= BASIN_LABEL_TOL * (1.0 + abs(lam)):
            return label
    return SENTINEL


def run_basin(s, resolution, solver="prqi", schedule=None, stop=None, threads=DEFAULT_THREADS,
              progress_callback=None, show_progress=True):
    if resolution < 3:
        raise DomainError(f"basin resolution must be >= 3, got {resolution}")
    a = generate(MatrixSpec.diag3(s))
    eigenvalues = (-1.0, float(s), 1.0)
    schedule = schedule if schedule is not None else GammaSchedule.residual_norm()
    stop = stop if stop is not None else StoppingCriteria(tol=BASIN_TOL)
    points = simplex_lattice(resolution)

    def task(index):
        x0 = np.array(points[index], dtype=np.float64) / resolution
        outcome = run_standard(solver, a, x0, schedule, stop)
        return basin_label(outcome.value, eigenvalues, outcome.converged), outcome.iterations

    results = _run_all(task, len(points), threads, desc=f"Basin {solver} s={s:g}",
                       progress_callback=progress_callback, show_progress=show_progress)

    size = resolution - 2
    labels = np.full((size, size), OUTSIDE, dtype=np.int64)
    iterations = np.zeros((size, size), dtype=np.int64)
    for (i, j, _), (label, iters) in zip(points, results):
        labels[j - 1, i - 1] = label
        iterations[j - 1, i - 1] = iters

    return BasinRaster(s=float(s), resolution=resolution, solver=solver, eigenvalues=eigenvalues,
                       labels=labels, iterations=iterations, points=tuple(points))


def boundary_fraction(labels):
    """
    Share of lattice cells with at least one 4-neighbour (on the lattice)
    carrying a different label.
    """
    labels = np.asarray(labels)
    covered = labels != OUTSIDE
    total = np.count_nonzero(covered)
    if total == 0:
        return 0.0
    boundary = np.zeros_like(covered)
    for axis in (0, 1):
        for shift in (1, -1):
            neighbour = np.roll(labels, shift, axis=axis)
            valid = np.roll(covered, shift, axis=axis)
            # np.roll wraps around; the wrapped row/column is not a neighbour
            edge = [slice(None), slice(None)]
            edge[axis] = 0 if shift == 1 else -1
            valid[tuple(edge)] = False
            boundary |= covered & valid & (neighbour != labels)
    return float(np.count_nonzero(boundary) / total)


def count_basin_regions(labels, label):
    _, count = ndimage.label(np.asarray(labels) == label)
    return int(count)


def write_ppm(path, raster):
    labels = raster.labels
    rgb = np.empty(labels.shape + (3,), dtype=np.uint8)
    rgb[:] = BASIN_BACKGROUND
    for label, color in BASIN_PALETTE.items():
        rgb[labels == label] = color
    height, width = labels.shape
    with open(path, "wb") as f:
        f.write(f"P6\n{width} {height}\n255\n".encode("ascii"))
        f.write(rgb.tobytes())


def write_basin_csv(path, raster):
    r = raster.resolution
    rows = []
    for i, j, k in raster.points:
        rows.append([fmt(i / r), fmt(j / r), fmt(k / r),
                     str(raster.labels[j - 1, i - 1]), str(raster.iterations[j - 1, i - 1])])
    write_csv(path, ["x1", "x2", "x3", "label", "iters"], rows)


# ============================================================================
# ANGLE SWEEP
# ============================================================================

@dataclass(frozen=True)
class SweepRecord:
    angle_deg: float
    solver: str
    value: float
    target: float
    success: bool
    iterations: int
    seed: int
    status: str


SWEEP_HEADER = ["angle_deg", "solver", "lambda", "target", "success", "iters", "seed", "status"]


def parse_angle_grid(text):
    """
    'lo:hi:count' (degrees, inclusive linspace) or a comma separated list.
    """
    try:
        if ":" in text:
            lo, hi, count = text.split(":")
            angles = np.linspace(float(lo), float(hi), int(count))
        else:
            angles = np.array([float(v) for v in text.split(",") if v.strip()])
    except ValueError:
        raise DomainError(f"invalid angle grid {text!r} (use lo:hi:count or a comma list)")
    if angles.size == 0 or np.any(angles <= 0.0) or np.any(angles >= 90.0):
        raise DomainError(f"angles must lie strictly between 0 and 90 degrees: {text!r}")
    return [float(v) for v in angles]


def run_sweep(kind, size, seed, angles_deg, solvers=("rqi", "prqi"), schedule=None, stop=None,
              threads=DEFAULT_THREADS, progress_callback=None, show_progress=True):
    """
    One matrix, one seeded target eigenvector and one fixed complementary
    direction; only the weight of the target component changes with the angle.
    """
    a = generate(MatrixSpec.from_kind(kind, size, seed))
    decomp = oracle_eig(a)
    target_index = int(rng_stream(seed, 1).integers(decomp.n))
    target = float(decomp.values[target_index])
    schedule = schedule if schedule is not None else GammaSchedule.residual_norm()
    stop = stop if stop is not None else StoppingCriteria(tol=SWEEP_TOL)
    jobs = [(angle, solver) for angle in angles_deg for solver in solvers]

    def task(index):
        angle, solver = jobs[index]
        x0 = initial_vector_with_angle(decomp, target_index, np.radians(angle), rng_stream(seed, 2))
        outcome = run_standard(solver, a, x0, schedule, stop)
        return SweepRecord(angle_deg=angle, solver=solver, value=outcome.value, target=target,
                           success=succeeded(outcome.value, target), iterations=outcome.iterations,
                           seed=seed, status=outcome.status.value)

    return a, _run_all(task, len(jobs), threads, desc=f"Sweep {kind}",
                       progress_callback=progress_callback, show_progress=show_progress)


def sweep_rows(records):
    return [[fmt(r.angle_deg), r.solver, fmt(r.value), fmt(r.target), str(int(r.success)),
             str(r.iterations), str(r.seed), r.status] for r in records]


# ============================================================================
# SUCCESS FRACTIONS BY ANGLE BAND
# ============================================================================

@dataclass(frozen=True)
class Table1Row:
    lo_deg: float
    hi_deg: float
    samples: int
    rqi_success: float
    prqi_success: float
    ordering_satisfied: float
    mean_gamma0: float


TABLE1_HEADER = ["band", "samples", "rqi_success", "prqi_success", "ordering_satisfied", "mean_gamma0"]


def _band_of(angles_deg, bands):
    # first band holding each angle; the top edge 90 belongs to its band
    index = np.full(angles_deg.shape, -1, dtype=np.int64)
    for b, (lo, hi) in enumerate(bands):
        inside = (angles_deg >= lo) & ((angles_deg < hi) | ((hi >= 90.0) & (angles_deg <= hi)))
        index[(index < 0) & inside] = b
    return index


def binned_gaussian_starts(n, bands, samples, seed, decades=TABLE1_SCALE_DECADES,
                           batch=TABLE1_BATCH, max_draws=TABLE1_MAX_DRAWS):
    """
    Initial vectors as Gaussian coefficient vectors in the eigenbasis.

    Each draw picks a random target index and stretches the target
    coefficient by 10**u, u ~ U(0, decades). The draw is filed under the
    band holding its realized angle to the target eigenvector until every
    band has `samples` draws. Returns, per band, a list of
    (target_index, coefficients).
    """
    if n < 2:
        raise DomainError("need at least two eigenvectors")
    rng = rng_stream(seed, 0)
    filed = [[] for _ in bands]
    draws = 0
    while any(len(f) < samples for f in filed):
        if draws >= max_draws:
            short = [f"{lo:g}-{hi:g}" for (lo, hi), f in zip(bands, filed) if len(f) < samples]
            raise NotEstimableError(f"{draws} draws did not fill band(s) {', '.join(short)}")
        coeffs = rng.standard_normal((batch, n))
        targets = rng.integers(n, size=batch)
        rows = np.arange(batch)
        coeffs[rows, targets] *= 10.0 ** rng.uniform(0.0, decades, size=batch)
        others = coeffs.copy()
        others[rows, targets] = 0.0
        angles = np.degrees(np.arctan2(np.linalg.norm(others, axis=1), np.abs(coeffs[rows, targets])))
        for row, band in enumerate(_band_of(angles, bands)):
            if band >= 0 and len(filed[band]) < samples:
                filed[band].append((int(targets[row]), coeffs[row]))
        draws += batch
    return filed


def run_table1(kind="121", size=TABLE1_SIZE, samples=TABLE1_SAMPLES, seed=0, bands=TABLE1_BANDS,
               schedule=None, stop=None, threads=DEFAULT_THREADS, progress_callback=None,
               show_progress=True):
    """
    Success of classic RQI and PRQI from `samples` Gaussian starts per
    initial angle band (see binned_gaussian_starts).
    """
    if samples < 100:
        raise DomainError(f"need at least 100 samples per band, got {samples}")
    a = generate(MatrixSpec.from_kind(kind, size, seed))
    decomp = oracle_eig(a)
    schedule = schedule if schedule is not None else GammaSchedule.residual_norm_squared()
    stop = stop if stop is not None else StoppingCriteria(tol=SWEEP_TOL)
    starts = binned_gaussian_starts(decomp.n, bands, samples, seed)

    def task(index):
        band, sample = divmod(index, samples)
        target_index, coeffs = starts[band][sample]
        x0 = normalize(decomp.vectors @ coeffs)
        target = float(decomp.values[target_index])
        mu0 = rayleigh_quotient(a, x0)
        rqi_out = classic_rqi(a, x0, stop)
        prqi_out = prqi(a, x0, schedule, stop)
        return (succeeded(rqi_out.value, target), succeeded(prqi_out.value, target),
                eigenvalue_ordering_satisfied(decomp.values, target_index, mu0),
                prqi_out.trace[0].gamma)

    results = _run_all(task, len(bands) * samples, threads, desc=f"Table {kind}",
                       progress_callback=progress_callback, show_progress=show_progress)

    rows = []
    for band, (lo, hi) in enumerate(bands):
        chunk = np.array(results[band * samples:(band + 1) * samples], dtype=np.float64)
        rows.append(Table1Row(lo_deg=lo, hi_deg=hi, samples=samples,
                              rqi_success=float(chunk[:, 0].mean()),
                              prqi_success=float(chunk[:, 1].mean()),
                              ordering_satisfied=float(chunk[:, 2].mean()),
                              mean_gamma0=float(chunk[:, 3].mean())))
    return rows


def table1_rows(rows):
    return [[f"{r.lo_deg:g}-{r.hi_deg:g}", str(r.samples), fmt(r.rqi_success), fmt(r.prqi_success),
             fmt(r.ordering_satisfied), fmt(r.mean_gamma0)] for r in rows]


# ============================================================================
# BAND-GAP TABLE
# ============================================================================

@dataclass(frozen=True)
class SturmRow:
    n_osc: float
    R: float
    prqi: object  # GapResult
    rqi: object  # GapResult


STURM_HEADER = ["n_osc", "R", "prqi_lambda", "prqi_index", "prqi_iters", "prqi_status",
                "rqi_lambda", "rqi_index", "rqi_iters", "rqi_status", "prqi_in_gap", "prqi_eta"]


def run_sturm_table(settings, profiles, pair, threads=DEFAULT_THREADS, progress_callback=None,
                    show_progress=True):
    """
    PRQI (guarded) and classic RQI from every profile on one assembled pair.
    Iteration counts exclude the final real-part step.
    """
    jobs = [(profile, method) for profile in profiles for method in ("prqi", "rqi")]

    def task(index):
        profile, method = jobs[index]
        return solve_gap_eigenpair(settings.config, profile, settings.schedule, settings.stop,
                                   settings.guard, pair=pair, method=method)

    results = _run_all(task, len(jobs), threads, desc="Band-gap table",
                       progress_callback=progress_callback, show_progress=show_progress)
    return [SturmRow(n_osc=profile.n_osc, R=profile.R, prqi=results[2 * i], rqi=results[2 * i + 1])
            for i, profile in enumerate(profiles)]


def _index_text(index):
    return "" if index is None else str(index)


def sturm_rows(rows):
    return [[f"{r.n_osc:g}", f"{r.R:g}",
             fmt(r.prqi.value), _index_text(r.prqi.index), str(r.prqi.outcome.iterations),
             r.prqi.outcome.status.value,
             fmt(r.rqi.value), _index_text(r.rqi.index), str(r.rqi.outcome.iterations),
             r.rqi.outcome.status.value,
             str(int(r.prqi.in_gap)), fmt(r.prqi.eta)] for r in rows]


def ensure_output_dir(path):
    os.makedirs(path, exist_ok=True)
    return path
