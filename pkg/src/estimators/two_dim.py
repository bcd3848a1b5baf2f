import logging
import math
from typing import Any, Literal, Optional, Tuple

import numpy as np

from ..constants import DEFAULT_PARAMS, KAPPA_BOUNDS, LOG_SQRT2_MINUS_1, THETA2_BOUNDS, THETA2_MARGIN, V_BOUNDS
from ..errors import ConfigurationError
from ..models import Estimate2D, FieldDataset, OptimizerConfig, ThinningPlan
from .base_estimator import BaseEstimator
from .increments import alpha_from_energies, coarse_plan, design_r, midpoints, thinned_indices, triple_increment_tensor
from .optimizer import minimize_box
from .special import PsiSpline

logger = logging.getLogger(__name__)

SQRT2 = math.sqrt(2.0)
GammaRule = Literal["spectral", "polynomial"]


def theta2_lower_bound(r: float) -> float:
    """Admissible theta2 must exceed -r^2 / (8 log(sqrt 2 - 1))"""
    return -r * r / (8.0 * LOG_SQRT2_MINUS_1)


def default_config_2d(r: float) -> OptimizerConfig:
    lower = max(THETA2_BOUNDS[0], theta2_lower_bound(r) + THETA2_MARGIN)
    return OptimizerConfig(box=(KAPPA_BOUNDS, KAPPA_BOUNDS, (lower, THETA2_BOUNDS[1]), V_BOUNDS), **DEFAULT_PARAMS["2d"])


def estimate_alpha(ds: FieldDataset, plan: ThinningPlan, plan_prime: Optional[ThinningPlan] = None) -> float:
    """log(mean (T')^2 / mean T^2) / log 4 with T' from the m/2, n/4 thinning"""
    expected = coarse_plan(plan)
    if plan_prime is None:
        plan_prime = expected
    elif plan_prime.m != expected.m or plan_prime.n != expected.n or plan_prime.b != plan.b:
        raise ConfigurationError(f"second thinning must be b = {plan.b}, m = {expected.m}, n = {expected.n}; got {plan_prime}")
    fine, _ = triple_increment_tensor(ds, plan)
    coarse, _ = triple_increment_tensor(ds, plan_prime)
    alpha_hat = alpha_from_energies(float(np.mean(fine * fine)), float(np.mean(coarse * coarse)))
    logger.info(f"Damping estimate alpha = {alpha_hat:.6g}")
    return alpha_hat


def triple_increment_statistics(ds: FieldDataset, plan: ThinningPlan, alpha: float) -> Tuple[np.ndarray, np.ndarray]:
    """(1/(n Delta^alpha)) sum T^2 and (1/(n (2 Delta)^alpha)) sum T~^2 per spatial cell"""
    indices = thinned_indices(ds, plan)
    dt = float(indices.time[1] - indices.time[0]) / ds.grid.N
    t, t_tilde = triple_increment_tensor(ds, plan)
    n = t.shape[0]
    return np.sum(t * t, axis=0) / (n * dt ** alpha), np.sum(t_tilde * t_tilde, axis=0) / (n * (2.0 * dt) ** alpha)


def fit_triple_increment_surfaces(
    stat: np.ndarray,
    stat_tilde: np.ndarray,
    ybar: Tuple[np.ndarray, np.ndarray],
    r: float,
    alpha: float,
    cfg: Optional[OptimizerConfig] = None,
    gamma_rule: GammaRule = "polynomial",
) -> Estimate2D:
    """Minimize the two-term contrast against V e^{-kappa.y} c_gamma^alpha psi_{r,alpha}(theta2) and psi_{r/sqrt 2, alpha}"""
    if not 0.0 < alpha < 2.0:
        raise ConfigurationError(f"damping estimate {alpha:.6g} is outside (0, 2); the contrast model is undefined")
    if gamma_rule not in ("spectral", "polynomial"):
        raise ConfigurationError(f"the two-dimensional contrast needs the spectral or polynomial rule, got {gamma_rule}")
    cfg = cfg or default_config_2d(r)
    if cfg.dim != 4:
        raise ConfigurationError(f"the two-dimensional fit optimizes (kappa1, kappa2, theta2, V); got a {cfg.dim}-dimensional box")
    bound = theta2_lower_bound(r)
    if cfg.box[2][0] <= bound:
        raise ConfigurationError(f"theta2 box {cfg.box[2]} violates the admissible lower bound {bound:.6g} for r = {r:.6g}")

    psi = PsiSpline(r, alpha, cfg.box[2])
    psi_tilde = PsiSpline(r / SQRT2, alpha, cfg.box[2])
    stat = np.asarray(stat, dtype=float)
    stat_tilde = np.asarray(stat_tilde, dtype=float)
    y1, y2 = (np.asarray(v, dtype=float) for v in ybar)
    spectral = gamma_rule == "spectral"

    def contrast(point: np.ndarray) -> float:
        kappa1, kappa2, theta2, v = point
        c_gamma = theta2 ** alpha if spectral else 1.0
        shape = v * c_gamma * np.exp(-kappa1 * y1)[:, None] * np.exp(-kappa2 * y2)[None, :]
        first = stat - shape * psi(theta2)
        second = stat_tilde - shape * psi_tilde(theta2)
        return float(np.mean(first * first) + np.mean(second * second))

    best = minimize_box(contrast, cfg)
    kappa1, kappa2, theta2, v = (float(x) for x in best.point)
    return Estimate2D(
        alpha_hat=alpha,
        kappa_hat=(kappa1, kappa2),
        theta2_hat=theta2,
        v_hat=v,
        objective_value=best.value,
        r=r,
        evaluations=best.evaluations,
    )


def fit_2d(
    ds: FieldDataset,
    plan: ThinningPlan,
    alpha_hat: float,
    cfg: Optional[OptimizerConfig] = None,
    gamma_rule: GammaRule = "polynomial",
) -> Estimate2D:
    indices = thinned_indices(ds, plan)
    r = design_r(ds, indices)
    stat, stat_tilde = triple_increment_statistics(ds, plan, alpha_hat)
    ybar = (midpoints(ds, indices, 0), midpoints(ds, indices, 1))
    estimate = fit_triple_increment_surfaces(stat, stat_tilde, ybar, r, alpha_hat, cfg, gamma_rule)
    logger.info(
        f"2D fit: kappa = {estimate.kappa_hat}, theta2 = {estimate.theta2_hat:.6g}, V = {estimate.v_hat:.6g} "
        f"(alpha = {alpha_hat:.4g}, r = {r:.4g}, {estimate.evaluations} evaluations)"
    )
    return estimate


class TwoDimensional(BaseEstimator):
    name = "2d"
    description = "Damping estimate from nested thinnings, then minimum contrast on triple increments"
    dimension = 2

    def execute(self, ds: FieldDataset, plan: ThinningPlan, **kwargs: Any) -> Estimate2D:
        gamma_rule = kwargs.get("gamma_rule")
        if gamma_rule is None:
            gamma_rule = ds.meta.noise.gamma_rule if ds.meta is not None else "polynomial"
        alpha_hat = estimate_alpha(ds, plan)
        return fit_2d(ds, plan, alpha_hat, kwargs.get("cfg") or self.cfg, gamma_rule)

    def kappa(self, estimate: Estimate2D) -> Tuple[float, ...]:
        return tuple(estimate.kappa_hat)
