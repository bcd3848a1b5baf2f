import logging
import math
from typing import Any, Optional, Tuple

import numpy as np

from ..constants import DEFAULT_PARAMS, KAPPA_BOUNDS, V_BOUNDS
from ..errors import ConfigurationError
from ..models import EstimateA, FieldDataset, OptimizerConfig, ThinningPlan
from .base_estimator import BaseEstimator
from .increments import thinned_indices, z_statistics
from .optimizer import minimize_box

logger = logging.getLogger(__name__)

SQRT_PI = math.sqrt(math.pi)


def default_config_a() -> OptimizerConfig:
    return OptimizerConfig(box=(KAPPA_BOUNDS, V_BOUNDS), **DEFAULT_PARAMS["A"])


def fit_z_curve(z: np.ndarray, y: np.ndarray, cfg: Optional[OptimizerConfig] = None) -> EstimateA:
    """Minimize (1/m) sum_j (Z_j - V0 exp(-kappa y_j) / sqrt(pi))^2 over the box"""
    cfg = cfg or default_config_a()
    if cfg.dim != 2:
        raise ConfigurationError(f"Methodology A optimizes (kappa, V0); got a {cfg.dim}-dimensional box")
    z = np.asarray(z, dtype=float)
    y = np.asarray(y, dtype=float)

    def contrast(point: np.ndarray) -> float:
        residual = z - point[1] * np.exp(-point[0] * y) / SQRT_PI
        return float(np.mean(residual * residual))

    best = minimize_box(contrast, cfg)
    return EstimateA(kappa_hat=float(best.point[0]), v0_hat=float(best.point[1]), objective_value=best.value, evaluations=best.evaluations)


def fit_methodology_a(ds: FieldDataset, plan: ThinningPlan, cfg: Optional[OptimizerConfig] = None) -> EstimateA:
    indices = thinned_indices(ds, plan)
    m = plan.m[0]
    n = indices.time.size - 1
    if m > math.sqrt(n):
        logger.warning(f"Methodology A expects m = O(N^rho) with rho < 1/2; m = {m} exceeds sqrt(N) = {math.sqrt(n):.1f}")
    z = z_statistics(ds, plan)[1:]
    y = indices.space[0][1:] / ds.grid.M[0]
    estimate = fit_z_curve(z, y, cfg)
    logger.info(f"Methodology A: kappa = {estimate.kappa_hat:.6g}, V0 = {estimate.v0_hat:.6g} ({estimate.evaluations} evaluations)")
    return estimate


class MethodologyA(BaseEstimator):
    name = "A"
    description = "Minimum contrast on Z_j = realized variance at each thinned spatial point; estimates (kappa, V0)"
    dimension = 1

    def execute(self, ds: FieldDataset, plan: ThinningPlan, **kwargs: Any) -> EstimateA:
        return fit_methodology_a(ds, plan, kwargs.get("cfg") or self.cfg)

    def kappa(self, estimate: EstimateA) -> Tuple[float, ...]:
        return (estimate.kappa_hat,)

