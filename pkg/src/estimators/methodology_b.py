import logging
import math
from typing import Any, Optional, Tuple

import numpy as np

from ..constants import DEFAULT_PARAMS, KAPPA_BOUNDS, THETA2_BOUNDS, V_BOUNDS
from ..errors import ConfigurationError
from ..models import EstimateB, FieldDataset, OptimizerConfig, ThinningPlan
from .base_estimator import BaseEstimator
from .increments import design_r, double_increment_matrix, midpoints, thinned_indices
from .optimizer import minimize_box
from .special import psi_r

logger = logging.getLogger(__name__)

SQRT2 = math.sqrt(2.0)


def default_config_b() -> OptimizerConfig:
    return OptimizerConfig(box=(KAPPA_BOUNDS, THETA2_BOUNDS, V_BOUNDS), **DEFAULT_PARAMS["B"])


def double_increment_statistics(ds: FieldDataset, plan: ThinningPlan) -> Tuple[np.ndarray, np.ndarray]:
    """Per-column realized variances of D and D~, normalized by n sqrt(Delta) and n sqrt(2 Delta)"""
    indices = thinned_indices(ds, plan)
    dt = float(indices.time[1] - indices.time[0]) / ds.grid.N
    d, d_tilde = double_increment_matrix(ds, plan)
    n = d.shape[0]
    stat = np.sum(d * d, axis=0) / (n * math.sqrt(dt))
    stat_tilde = np.sum(d_tilde * d_tilde, axis=0) / (n * math.sqrt(2.0 * dt))
    return stat, stat_tilde


def fit_double_increment_curves(
    stat: np.ndarray,
    stat_tilde: np.ndarray,
    ybar: np.ndarray,
    r: float,
    cfg: Optional[OptimizerConfig] = None,
) -> EstimateB:
    """Minimize the sum of the two mean-square residuals against V exp(-kappa y) psi_r(theta2) and psi_{r/sqrt 2}"""
    cfg = cfg or default_config_b()
    if cfg.dim != 3:
        raise ConfigurationError(f"Methodology B optimizes (kappa, theta2, V); got a {cfg.dim}-dimensional box")
    if cfg.box[1][0] <= 0:
        raise ConfigurationError(f"theta2 bounds {cfg.box[1]} must be positive")
    stat = np.asarray(stat, dtype=float)
    stat_tilde = np.asarray(stat_tilde, dtype=float)
    ybar = np.asarray(ybar, dtype=float)

    def contrast(point: np.ndarray) -> float:
        kappa, theta2, v = point
        shape = v * np.exp(-kappa * ybar)
        first = stat - shape * psi_r(theta2, r)
        second = stat_tilde - shape * psi_r(theta2, r / SQRT2)
        return float(np.mean(first * first) + np.mean(second * second))

    best = minimize_box(contrast, cfg)
    kappa, theta2, v = (float(x) for x in best.point)
    return EstimateB(kappa_hat=kappa, theta2_hat=theta2, v_hat=v, objective_value=best.value, r=r, evaluations=best.evaluations)


def fit_methodology_b(
    ds: FieldDataset,
    plan: ThinningPlan,
    cfg: Optional[OptimizerConfig] = None,
    r: Optional[float] = None,
) -> EstimateB:
    indices = thinned_indices(ds, plan)
    r = design_r(ds, indices, r)
    n = indices.time.size - 1
    if plan.m[0] > 2.0 * math.sqrt(n) or n > 4.0 * plan.m[0] ** 2:
        logger.warning(f"Methodology B expects m = O(sqrt(N)) and N = O(m^2); got m = {plan.m[0]}, N = {n}")
    stat, stat_tilde = double_increment_statistics(ds, plan)
    estimate = fit_double_increment_curves(stat, stat_tilde, midpoints(ds, indices), r, cfg)
    logger.info(
        f"Methodology B: kappa = {estimate.kappa_hat:.6g}, theta2 = {estimate.theta2_hat:.6g}, "
        f"V = {estimate.v_hat:.6g} (r = {r:.4g}, {estimate.evaluations} evaluations)"
    )
    return estimate


class MethodologyB(BaseEstimator):
    name = "B"
    description = "Minimum contrast on double increments D and D~; estimates (kappa, theta2, V)"
    dimension = 1

    def execute(self, ds: FieldDataset, plan: ThinningPlan, **kwargs: Any) -> EstimateB:
        return fit_methodology_b(ds, plan, kwargs.get("cfg") or self.cfg, r=kwargs.get("r"))

    def kappa(self, estimate: EstimateB) -> Tuple[float, ...]:
        return (estimate.kappa_hat,)

    def beta_sq(self, estimate: EstimateB) -> Optional[float]:
        return estimate.v_hat
