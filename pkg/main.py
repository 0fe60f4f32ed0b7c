# main.py

import argparse
import os
import sys

from src.config import (
    BASIN_RESOLUTION,
    DEFAULT_MAX_ITERS,
    DEFAULT_THREADS,
    OUTPUT_DIR,
    STURM_PROFILES,
    SWEEP_ANGLES,
    SWEEP_SIZES,
    TABLE1_SAMPLES,
    TABLE1_SIZE,
)
from src.errors import EigensolverError
from src.experiments import (
    SOLVE_METHODS,
    STURM_HEADER,
    SWEEP_HEADER,
    TABLE1_HEADER,
    boundary_fraction,
    count_basin_regions,
    ensure_output_dir,
    fmt,
    parse_angle_grid,
    run_basin,
    run_sturm_table,
    run_sweep,
    run_table1,
    solve_problem,
    sturm_rows,
    sweep_rows,
    table1_rows,
    write_basin_csv,
    write_csv,
    write_ppm,
)
from src.matrices import MatrixKind, MatrixSpec, generate, rng_stream
from src.matrix_market import read_operator, read_vector, write_operator, write_vector
from src.solvers import GammaSchedule, LocalizationGuard, SolveStatus, StoppingCriteria, write_trace_csv
from src.sturm import (
    InitialProfile,
    SturmSettings,
    assemble,
    build_initial_vector,
    load_sturm_config,
    locate_spurious_mode,
)

EXIT_OK = 0
EXIT_INPUT_ERROR = 1
EXIT_MAX_ITERS = 2
EXIT_GUARD_ABORTED = 3


def exit_code_for(status):
    if status is SolveStatus.MAX_ITERS_EXCEEDED:
        return EXIT_MAX_ITERS
    if status is SolveStatus.GUARD_ABORTED:
        return EXIT_GUARD_ABORTED
    return EXIT_OK


def banner(title):
    print(f"\n{'='*60}")
    print(title)
    print(f"{'='*60}")


def _stop(args, default_tol):
    tol = args.tol if args.tol is not None else default_tol
    max_iters = args.max_iters if args.max_iters is not None else DEFAULT_MAX_ITERS
    return StoppingCriteria(tol=tol, max_iters=max_iters)


def _schedule(args, default):
    return GammaSchedule.parse(args.gamma) if args.gamma else GammaSchedule.parse(default)


# ============================================================================
# COMMANDS
# ============================================================================

def cmd_solve(args):
    a = read_operator(args.matrix)
    m = read_operator(args.mass) if args.mass else None
    if args.generalized and m is None:
        print("✗ --generalized needs --mass")
        return EXIT_INPUT_ERROR

    if args.x0 and args.profile:
        print("✗ give either --x0 or --profile, not both")
        return EXIT_INPUT_ERROR
    if args.x0:
        x0 = read_vector(args.x0)
    elif args.profile:
        settings = load_sturm_config(args.config) if args.config else SturmSettings()
        if settings.config.n != a.n:
            print(f"✗ profile mesh has {settings.config.n} unknowns, matrix has {a.n}")
            return EXIT_INPUT_ERROR
        x0 = build_initial_vector(settings.config, _parse_profile(args.profile))
    else:
        x0 = rng_stream(args.seed, 0).standard_normal(a.n)
        print(f"⚠️ No --x0 given, using a seeded Gaussian start (seed {args.seed})")

    guard = None
    if args.guard_start is not None:
        guard = LocalizationGuard(args.guard_start, args.eta_star)

    banner(f"SOLVE  {os.path.basename(args.matrix)}")
    outcome = solve_problem(
        a, x0,
        method=args.method,
        m=m,
        schedule=_schedule(args, "residual"),
        stop=_stop(args, 1e-10),
        shift=args.shift,
        finalize_real=args.finalize_real,
        guard=guard,
        verbose=args.verbose,
    )

    pair = outcome.eigenpair
    mark = "✓" if outcome.converged else "✗"
    print(f"{mark} Status:      {outcome.status.value}")
    print(f"  Eigenvalue:  {fmt(pair.value)}")
    print(f"  Residual:    {pair.residual_norm:.3e}")
    print(f"  Iterations:  {outcome.iterations}")
    if outcome.eta is not None:
        print(f"  eta:         {outcome.eta:.4f}")

    out = ensure_output_dir(args.out)
    write_csv(os.path.join(out, "solve_report.csv"),
              ["method", "status", "lambda", "resnorm", "iters"],
              [[args.method, outcome.status.value, fmt(pair.value), fmt(pair.residual_norm),
                str(outcome.iterations)]])
    write_vector(os.path.join(out, "eigenvector.mtx"), pair.vector,
                 comment=f"eigenvalue {fmt(pair.value)}")
    if args.trace:
        write_trace_csv(os.path.join(out, args.trace), outcome)
        print(f"✓ Trace written to {os.path.join(out, args.trace)}")
    return exit_code_for(outcome.status)


def cmd_basin(args):
    banner(f"BASINS OF ATTRACTION  diag(-1, {args.s:g}, 1)  resolution {args.resolution}")
    out = ensure_output_dir(args.out)
    if args.export:
        write_operator(os.path.join(out, f"diag3_s{args.s:g}.mtx"), generate(MatrixSpec.diag3(args.s)))

    raster = run_basin(args.s, args.resolution, solver=args.solver,
                       schedule=_schedule(args, "residual"), stop=_stop(args, 1e-11),
                       threads=args.threads)

    stem = os.path.join(out, f"basin_{args.solver}_s{args.s:g}")
    write_ppm(stem + ".ppm", raster)
    write_basin_csv(stem + ".csv", raster)

    areas = raster.areas()
    print(f"✓ Raster written to {stem}.ppm")
    for label, lam in enumerate(raster.eigenvalues, 1):
        print(f"  lambda = {lam:+g}: {areas[label]} cells, "
              f"{count_basin_regions(raster.labels, label)} region(s)")
    if areas[0]:
        print(f"⚠️ {areas[0]} cell(s) without convergence")
    print(f"  Boundary fraction: {boundary_fraction(raster.labels):.6f}")
    return EXIT_OK


def cmd_sweep(args):
    size = args.size if args.size is not None else SWEEP_SIZES[args.kind]
    angles = parse_angle_grid(args.angles)
    solvers = tuple(s.strip() for s in args.solvers.split(",") if s.strip())
    banner(f"ANGLE SWEEP  {args.kind}  size {size}  {len(angles)} angle(s)")

    a, records = run_sweep(args.kind, size, args.seed, angles, solvers=solvers,
                           schedule=_schedule(args, "residual"), stop=_stop(args, 1e-15),
                           threads=args.threads)
    out = ensure_output_dir(args.out)
    if args.export:
        write_operator(os.path.join(out, f"{args.kind}_{size}.mtx"), a)
    path = os.path.join(out, f"sweep_{args.kind}_{size}_seed{args.seed}.csv")
    write_csv(path, SWEEP_HEADER, sweep_rows(records))

    print(f"✓ Sweep written to {path}")
    for solver in solvers:
        ok = sum(r.success for r in records if r.solver == solver)
        print(f"  {solver}: {ok}/{len(angles)} angle(s) reached the target")
    return EXIT_OK


def cmd_table1(args):
    size = args.size if args.size is not None else TABLE1_SIZE
    banner(f"SUCCESS FRACTIONS  {args.kind}  size {size}  {args.samples} sample(s) per band")
    rows = run_table1(args.kind, size, args.samples, args.seed,
                      schedule=_schedule(args, "residual2"), stop=_stop(args, 1e-15),
                      threads=args.threads)
    out = ensure_output_dir(args.out)
    path = os.path.join(out, f"table1_{args.kind}_{size}_seed{args.seed}.csv")
    write_csv(path, TABLE1_HEADER, table1_rows(rows))

    print(f"{'band':>8} {'RQI':>9} {'PRQI':>9} {'order':>9} {'gamma0':>8}")
    for r in rows:
        print(f"{r.lo_deg:>3g}-{r.hi_deg:<4g} {100*r.rqi_success:8.2f}% {100*r.prqi_success:8.2f}% "
              f"{100*r.ordering_satisfied:8.2f}% {r.mean_gamma0:8.3f}")
    print(f"✓ Table written to {path}")
    return EXIT_OK


def _parse_profile(text):
    try:
        n_osc, R = (float(v) for v in text.split(","))
    except ValueError:
        raise EigensolverError(f"invalid profile {text!r} (use n_osc,R)")
    return InitialProfile(n_osc=n_osc, R=R)


def cmd_sturm(args):
    settings = load_sturm_config(args.config) if args.config else SturmSettings()
    if args.gamma or args.tol is not None or args.max_iters is not None:
        settings = SturmSettings(
            config=settings.config, profile=settings.profile,
            tol=args.tol if args.tol is not None else settings.tol,
            eta_star=settings.eta_star, S=settings.S,
            schedule=GammaSchedule.parse(args.gamma) if args.gamma else settings.schedule,
            max_iters=args.max_iters if args.max_iters is not None else settings.max_iters,
        )

    if args.profile:
        profiles = [_parse_profile(p) for p in args.profile]
    elif settings.profile is not None:
        profiles = [settings.profile]
    else:
        profiles = [InitialProfile(n_osc=n, R=R) for n, R in STURM_PROFILES]

    config = settings.config
    banner(f"BAND-GAP EIGENVALUES  X = {config.X:g}, h = {config.h:g}  ({config.n} unknowns)")
    pair = assemble(config)
    print(f"✓ Assembled (A + B, M), schedule {settings.schedule.label}, tol {settings.tol:g}")

    out = ensure_output_dir(args.out)
    if args.export:
        write_operator(os.path.join(out, "sturm_AB.mtx"), pair.a)
        write_operator(os.path.join(out, "sturm_M.mtx"), pair.m)
        print(f"✓ Matrices exported to {out}")

    rows = run_sturm_table(settings, profiles, pair, threads=args.threads)
    path = os.path.join(out, "sturm_table.csv")
    write_csv(path, STURM_HEADER, sturm_rows(rows))

    print(f"{'n_osc':>5} {'R':>4} | {'PRQI lambda':>12} {'idx':>4} {'it':>3} | "
          f"{'RQI lambda':>12} {'idx':>4} {'it':>3}")
    for r in rows:
        print(f"{r.n_osc:5g} {r.R:4g} | {r.prqi.value:12.5f} {str(r.prqi.index or '-'):>4} "
              f"{r.prqi.outcome.iterations:3d} | {r.rqi.value:12.5f} {str(r.rqi.index or '-'):>4} "
              f"{r.rqi.outcome.iterations:3d}")
        if not r.prqi.is_target:
            print(f"  ⚠️ PRQI row ({r.n_osc:g}, {r.R:g}): {r.prqi.outcome.status.value}, "
                  f"band {r.prqi.band}, eta {r.prqi.eta:.3f}")
    print("  (iteration counts exclude the final real-part step)")

    if args.spurious:
        spurious = locate_spurious_mode(config, pair=pair, guard=settings.guard)
        if spurious is None:
            print("  No boundary-localized mode found in the gap")
        else:
            print(f"  Spurious mode: lambda = {spurious.value:.5f}, index {spurious.index}, "
                  f"eta = {spurious.eta:.3f}")

    print(f"✓ Table written to {path}")
    statuses = [r.prqi.outcome.status for r in rows]
    if SolveStatus.GUARD_ABORTED in statuses:
        return EXIT_GUARD_ABORTED
    if SolveStatus.MAX_ITERS_EXCEEDED in statuses:
        return EXIT_MAX_ITERS
    return EXIT_OK


# ============================================================================
# ARGUMENTS
# ============================================================================

def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=0, help="base seed for all random streams")
    common.add_argument("--tol", type=float, default=None, help="residual tolerance (command default if omitted)")
    common.add_argument("--max-iters", type=int, default=None, help=f"iteration cap (default {DEFAULT_MAX_ITERS})")
    common.add_argument("--gamma", default=None, help="residual | residual2 | constant:<v>")
    common.add_argument("--out", default=OUTPUT_DIR, help="output directory")
    common.add_argument("--threads", type=int, default=DEFAULT_THREADS)

    parser = argparse.ArgumentParser(
        description="Projected Rayleigh quotient iteration: solver and experiment harness")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("solve", parents=[common], help="solve A v = lambda v (or A v = lambda M v)")
    p.add_argument("matrix", help="Matrix Market file with a Hermitian matrix")
    p.add_argument("--mass", help="Matrix Market file with a positive definite M")
    p.add_argument("--generalized", action="store_true", help="require the (A, M) variant")
    p.add_argument("--x0", help="initial vector (Matrix Market column or one value per line)")
    p.add_argument("--profile", default=None, help="n_osc,R: oscillating cutoff start on the Sturm mesh")
    p.add_argument("--config", default=None, help="Sturm settings file defining the mesh for --profile")
    p.add_argument("--method", choices=SOLVE_METHODS, default="prqi")
    p.add_argument("--shift", type=float, default=None, help="fixed shift for inverse iteration")
    p.add_argument("--finalize-real", action="store_true")
    p.add_argument("--guard-start", type=int, default=None, help="first tail index for the eta guard")
    p.add_argument("--eta-star", type=float, default=0.4)
    p.add_argument("--trace", default=None, help="write the iteration trace to this CSV file")
    p.add_argument("--verbose", action="store_true")
    p.set_defaults(handler=cmd_solve)

    p = sub.add_parser("basin", parents=[common], help="basins of attraction on diag(-1, s, 1)")
    p.add_argument("--s", type=float, required=True)
    p.add_argument("--resolution", type=int, default=BASIN_RESOLUTION)
    p.add_argument("--solver", choices=("rqi", "prqi"), default="prqi")
    p.add_argument("--export", action="store_true", help="also write the matrix as Matrix Market")
    p.set_defaults(handler=cmd_basin)

    p = sub.add_parser("sweep", parents=[common], help="initial angle sweep on a test family")
    p.add_argument("--kind", choices=[k.value for k in MatrixKind if k is not MatrixKind.DIAG3],
                   default="121")
    p.add_argument("--size", type=int, default=None)
    p.add_argument("--angles", default=SWEEP_ANGLES, help="degrees, lo:hi:count or a comma list")
    p.add_argument("--solvers", default="rqi,prqi")
    p.add_argument("--export", action="store_true")
    p.set_defaults(handler=cmd_sweep)

    p = sub.add_parser("table1", parents=[common], help="success fractions per initial angle band")
    p.add_argument("--kind", choices=[k.value for k in MatrixKind if k is not MatrixKind.DIAG3],
                   default="121")
    p.add_argument("--size", type=int, default=None)
    p.add_argument("--samples", type=int, default=TABLE1_SAMPLES)
    p.set_defaults(handler=cmd_table1)

    p = sub.add_parser("sturm", parents=[common], help="band-gap eigenvalues of the Sturm-Liouville problem")
    p.add_argument("--config", default=None, help="key = value settings file")
    p.add_argument("--profile", action="append", help="n_osc,R (repeatable)")
    p.add_argument("--spurious", action="store_true", help="also locate the boundary-localized mode")
    p.add_argument("--export", action="store_true")
    p.set_defaults(handler=cmd_sturm)

    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.handler(args)
    except (EigensolverError, ValueError, OSError) as e:
        print(f"✗ {e}")
        return EXIT_INPUT_ERROR
    except KeyboardInterrupt:
        print("\n✗ Interrupted")
        return EXIT_INPUT_ERROR


if __name__ == "__main__":
    sys.exit(main())
