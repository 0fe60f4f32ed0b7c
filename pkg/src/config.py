# src/config.py
import os
import sys

# ============================================================================
# NUMERICAL TOLERANCES
# ============================================================================
NEAR_SINGULAR_RTOL = 1e-14  # smallest pivot / largest pivot
RQ_IMAG_RTOL = 1e-10  # allowed |Im| of a Hermitian Rayleigh quotient
NORMALIZE_CHECK_TOL = 1e-12  # ||x0|| must be this close to 1
HERMITIAN_INPUT_RTOL = 1e-12  # accepted asymmetry of matrices read from disk

# ============================================================================
# ITERATION DEFAULTS
# ============================================================================
DEFAULT_MAX_ITERS = 100  # reported runs need <= 10
DEFAULT_TOL = 1e-10
EXTRA_ITERATION = True
SCALED_TOL = False
SCALED_TOL_FLOOR = 1e-14  # scaled threshold never drops below this (mu near 0)

# ============================================================================
# EXPERIMENT TOLERANCES
# ============================================================================
BASIN_TOL = 1e-11
SWEEP_TOL = 1e-15
STURM_TOL = 1e-8
SUCCESS_RTOL = 1e-8  # |lambda_out - lambda_target| <= SUCCESS_RTOL * (1 + |lambda_target|)
BASIN_LABEL_TOL = 1e-6  # converged value -> eigenvalue label

# ============================================================================
# ORACLE (Jacobi)
# ============================================================================
JACOBI_MAX_SWEEPS = 100
JACOBI_RTOL = 1e-12
ORACLE_MAX_DIM = 2000

# ============================================================================
# MATRIX GENERATION
# ============================================================================
RANDOM_DENSITY = 0.05
DENSE_FALLBACK_MAX_DIM = 2000  # sparse operators below this are solved densely

# ============================================================================
# STURM-LIOUVILLE PROBLEM
# ============================================================================
STURM_X = 105.0  # profile cutoffs R = 35, 55 and tail start S stay inside [0, X]
STURM_H = 0.01
STURM_X0 = 0.1
STURM_QUADRATURE = 3
STURM_S = 80.0
STURM_ETA_STAR = 0.4
STURM_SCHEDULE = "residual2"
SPURIOUS_SCAN_POINTS = 48  # inverse-iteration shifts across the gap

BAND_J1 = (-0.37849, -0.34767)
BAND_J2 = (0.59480, 0.91806)

# (n_osc, R) rows of the band-gap table
STURM_PROFILES = [
    (1.5, 35.0),
    (2.0, 35.0),
    (2.5, 35.0),
    (3.0, 55.0),
    (3.5, 55.0),
    (4.0, 55.0),
    (4.5, 55.0),
    (5.0, 55.0),
]

# ============================================================================
# EXPERIMENTS
# ============================================================================
BASIN_RESOLUTION = 400
TABLE1_SAMPLES = 10_000
TABLE1_SIZE = 10
TABLE1_BANDS = [(80, 90), (70, 80), (60, 70), (50, 60), (40, 50), (30, 40), (0, 30)]
TABLE1_SCALE_DECADES = 3.0  # target coefficient stretched by 10**U(0, decades)
TABLE1_BATCH = 4096
TABLE1_MAX_DRAWS = 50_000_000
SWEEP_ANGLES = "0.05:89:60"  # degrees, lo:hi:count
SWEEP_SIZES = {"121": 100, "wilkinson": 10, "laplace": 10, "randsym": 500}

# ============================================================================
# OUTPUT
# ============================================================================
OUTPUT_DIR = "results/"
FLOAT_FORMAT = ".17g"

# label -> RGB; 0 is the non-convergence sentinel
BASIN_PALETTE = {
    0: (0, 0, 0),
    1: (255, 0, 0),
    2: (0, 255, 0),
    3: (0, 0, 255),
}
BASIN_BACKGROUND = (255, 255, 255)

# ============================================================================
# PARALLELISM
# ============================================================================
DEFAULT_THREADS = min(8, os.cpu_count() or 1)

# ============================================================================
# CONSOLE UTF-8 ENCODING (Windows compatibility)
# ============================================================================
if sys.platform == 'win32':
    try:
        sys.stdout.reconfigure(encoding='utf-8')
        sys.stderr.reconfigure(encoding='utf-8')
    except Exception:
        pass
