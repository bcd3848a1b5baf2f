import math
from typing import Dict, List

DATASET_MAGIC = b"SPDE"
DATASET_FORMAT_VERSION = 1

# grid alignment of thinned spatial points, in grid cells
SNAP_EXACT_TOLERANCE = 1e-9
SNAP_MAX_DISPLACEMENT = 0.5

# relative spread allowed between snapped spatial spacings before r = delta/sqrt(Delta) is rejected
R_CONSISTENCY_TOLERANCE = 0.02

TRUNCATION_REL_TOL = 1e-4
TRUNCATION_REL_TOL_2D = 2e-2
TRUNCATION_MAX_MODES_1D = 1_000_000

KOLMOGOROV_TERM_TOL = 1e-16
KOLMOGOROV_SERIES_SWITCH = 0.75
KOLMOGOROV_MAX_TERMS = 200
KOLMOGOROV_BRACKET = (1e-6, 10.0)

PSI_QUAD_EPSREL = 1e-12
PSI_SPLINE_NODES = 97

COARSE_GRID_POINTS = 17
REFINE_TOL = 1e-10
REFINE_XTOL = 1e-10
MAX_EVALS = 100_000

KAPPA_BOUNDS = (-10.0, 10.0)
THETA2_BOUNDS = (1e-3, 10.0)
V_BOUNDS = (1e-4, 1e2)
THETA2_MARGIN = 1e-6

MAX_FAILURE_RATIO = 0.05

# reference simulation study: operator, level, test grids and swept alternatives
STUDY_THETA = (0.0, 0.2, 0.2)
STUDY_CRITICAL_VALUE = 1.3581
STUDY_LEVEL = 0.05
STUDY_TEST_NS: List[int] = [100, 200, 300, 400]
SITUATION_2_SIGMA2: List[float] = [1.4, 1.5, 1.6, 1.7, 1.8]
SITUATION_3_TAU: List[float] = [0.1, 0.2, 0.3, 0.4, 0.5]

DESK_SCALE = {
    "L": 2000,
    "N": 2000,
    "M": 500,
    "m": 50,
    "b": 0.1,
    "replications": 200,
}

DEFAULT_PARAMS: Dict[str, Dict[str, float]] = {
    "A": {"coarse_grid": COARSE_GRID_POINTS, "refine_tol": REFINE_TOL},
    "B": {"coarse_grid": COARSE_GRID_POINTS, "refine_tol": REFINE_TOL},
    "2d": {"coarse_grid": 9, "refine_tol": REFINE_TOL},
}

LOG_SQRT2_MINUS_1 = math.log(math.sqrt(2.0) - 1.0)
