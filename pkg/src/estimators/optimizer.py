import itertools
import logging
import math
from typing import Callable, NamedTuple

import numpy as np
from scipy.optimize import minimize

from ..constants import REFINE_XTOL
from ..errors import ConvergenceError
from ..models import OptimizerConfig

logger = logging.getLogger(__name__)

Objective = Callable[[np.ndarray], float]

_RESTARTS = 3


class BoxMinimum(NamedTuple):
    point: np.ndarray
    value: float
    evaluations: int


class _BudgetExhausted(Exception):
    pass


class _CountedObjective:
    """Counts calls, tracks the best point, and stops once the budget is spent"""

    def __init__(self, objective: Objective, budget: int):
        self.objective = objective
        self.budget = budget
        self.calls = 0
        self.best_point = None
        self.best_value = math.inf

    def __call__(self, x: np.ndarray) -> float:
        if self.calls >= self.budget:
            raise _BudgetExhausted()
        self.calls += 1
        value = float(self.objective(np.asarray(x, dtype=float)))
        if not math.isfinite(value):
            value = math.inf
        if value < self.best_value:
            self.best_value = value
            self.best_point = np.array(x, dtype=float)
        return value


def _initial_simplex(x0: np.ndarray, steps: np.ndarray, lower: np.ndarray, upper: np.ndarray) -> np.ndarray:
    simplex = [x0.copy()]
    for k, step in enumerate(steps):
        vertex = x0.copy()
        # step towards the interior when x0 sits on the upper face
        vertex[k] = x0[k] + step if x0[k] + step <= upper[k] else x0[k] - step
        simplex.append(np.clip(vertex, lower, upper))
    return np.array(simplex)


def minimize_box(objective: Objective, cfg: OptimizerConfig) -> BoxMinimum:
    """Minimize ``objective`` over cfg.box.

    A cfg.coarse_grid^dim scan picks the starting basin; bounded Nelder-Mead
    then refines from the best grid point with restarts on a shrinking
    simplex. The result is never worse than the best grid value and always
    lies inside the box.
    """
    lower = np.array([lo for lo, _ in cfg.box], dtype=float)
    upper = np.array([hi for _, hi in cfg.box], dtype=float)
    counted = _CountedObjective(objective, cfg.max_evals)
    axes = [np.linspace(lo, hi, cfg.coarse_grid) for lo, hi in cfg.box]

    try:
        for point in itertools.product(*axes):
            counted(np.array(point))
    except _BudgetExhausted:
        raise ConvergenceError(
            f"evaluation budget {cfg.max_evals} spent during the {cfg.coarse_grid}^{cfg.dim} grid scan",
            best_point=counted.best_point,
            best_value=counted.best_value,
        )
    if counted.best_point is None:
        raise ConvergenceError("objective is not finite anywhere on the coarse grid", best_value=math.inf)

    grid_point, grid_value = counted.best_point.copy(), counted.best_value
    logger.debug(f"Grid scan best {grid_value:.6g} at {grid_point} after {counted.calls} evaluations")

    steps = 0.5 * (upper - lower) / (cfg.coarse_grid - 1)
    current, current_value = grid_point, grid_value
    try:
        for _ in range(_RESTARTS):
            result = minimize(
                counted,
                current,
                method="Nelder-Mead",
                bounds=list(zip(lower, upper)),
                options={
                    "xatol": REFINE_XTOL,
                    "fatol": cfg.refine_tol,
                    "maxfev": cfg.max_evals,
                    "maxiter": cfg.max_evals,
                    "initial_simplex": _initial_simplex(current, steps, lower, upper),
                },
            )
            improved = current_value - counted.best_value
            current, current_value = counted.best_point.copy(), counted.best_value
            if result.success and improved <= cfg.refine_tol:
                break
            steps = steps / 10.0
    except _BudgetExhausted:
        raise ConvergenceError(
            f"evaluation budget {cfg.max_evals} exhausted during refinement",
            best_point=np.clip(counted.best_point, lower, upper),
            best_value=counted.best_value,
        )

    point = np.clip(current, lower, upper)
    value = current_value
    if value > grid_value:
        point, value = grid_point, grid_value
    logger.debug(f"Refined minimum {value:.6g} at {point} after {counted.calls} evaluations")
    return BoxMinimum(point=point, value=value, evaluations=counted.calls)

