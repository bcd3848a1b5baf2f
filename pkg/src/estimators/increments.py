import logging
import math
from typing import Optional, Tuple

import numpy as np

from ..constants import R_CONSISTENCY_TOLERANCE
from ..errors import ConfigurationError
from ..models import FieldDataset, ThinnedIndices, ThinningPlan
from ..spde import effective_r, thinned_grid

logger = logging.getLogger(__name__)


def thinned_indices(ds: FieldDataset, plan: ThinningPlan, strict: bool = False) -> ThinnedIndices:
    if plan.n > ds.grid.N:
        raise ConfigurationError(f"plan uses n = {plan.n} time points but the dataset has N = {ds.grid.N}")
    return thinned_grid(ds.grid, plan, strict=strict)


def design_r(ds: FieldDataset, indices: ThinnedIndices, r: Optional[float] = None) -> float:
    """r = delta / sqrt(Delta), checked for consistency across the design and across axes"""
    values = []
    for axis in range(ds.grid.d):
        r_axis, spread = effective_r(ds.grid, indices, axis)
        if spread > R_CONSISTENCY_TOLERANCE:
            raise ConfigurationError(
                f"snapped spacing on axis {axis + 1} varies by {spread:.3%}; delta / sqrt(Delta) is not constant"
            )
        values.append(r_axis)
    r_design = float(np.mean(values))
    if max(values) - min(values) > R_CONSISTENCY_TOLERANCE * r_design:
        raise ConfigurationError(f"axes give different r values {values}")
    if r is not None and abs(r - r_design) > R_CONSISTENCY_TOLERANCE * r_design:
        raise ConfigurationError(f"requested r = {r} does not match the design value {r_design:.6g}")
    return r_design


def _time_increments(ds: FieldDataset, indices: ThinnedIndices) -> np.ndarray:
    """Delta_i X at the thinned spatial points, shape (n, m_1 + 1[, m_2 + 1])"""
    sub = ds.values[indices.time]
    for axis, idx in enumerate(indices.space):
        sub = np.take(sub, idx, axis=axis + 1)
    return np.diff(sub, axis=0)


def _dt(ds: FieldDataset, indices: ThinnedIndices) -> float:
    return float(indices.time[1] - indices.time[0]) / ds.grid.N


def z_statistics(ds: FieldDataset, plan: ThinningPlan) -> np.ndarray:
    """Z_j = 1/(n sqrt(Delta)) sum_i (Delta_i X(y~_j))^2 for j = 0..m"""
    if ds.grid.d != 1:
        raise ConfigurationError("Z statistics are defined for d = 1")
    indices = thinned_indices(ds, plan)
    increments = _time_increments(ds, indices)
    n = increments.shape[0]
    return np.sum(increments * increments, axis=0) / (n * math.sqrt(_dt(ds, indices)))


def z_statistic(ds: FieldDataset, plan: ThinningPlan, j: int) -> float:
    if not 0 <= j <= plan.m[0]:
        raise IndexError(f"spatial index j = {j} outside 0..{plan.m[0]}")
    return float(z_statistics(ds, plan)[j])


def double_increment_matrix(ds: FieldDataset, plan: ThinningPlan) -> Tuple[np.ndarray, np.ndarray]:
    """(D, D~) with D[i-1, j-1] = D_{i,j} X, shapes (n, m) and (n - 1, m)"""
    if ds.grid.d != 1:
        raise ConfigurationError("double increments are defined for d = 1")
    indices = thinned_indices(ds, plan)
    d = np.diff(_time_increments(ds, indices), axis=1)
    return d, d[:-1] + d[1:]


def double_increments(ds: FieldDataset, plan: ThinningPlan, i: int, j: int) -> Tuple[float, Optional[float]]:
    """(D_{i,j} X, D~_{i,j} X); D~ is None for the last time index"""
    d, d_tilde = double_increment_matrix(ds, plan)
    n, m = d.shape
    if not (1 <= i <= n and 1 <= j <= m):
        raise IndexError(f"(i, j) = ({i}, {j}) outside 1..{n} x 1..{m}")
    return float(d[i - 1, j - 1]), (float(d_tilde[i - 1, j - 1]) if i <= n - 1 else None)


def triple_increment_tensor(ds: FieldDataset, plan: ThinningPlan) -> Tuple[np.ndarray, np.ndarray]:
    """(T, T~) with T[i-1, j-1, k-1] = T_{i,j,k} X, shapes (n, m_1, m_2) and (n - 1, m_1, m_2)"""
    if ds.grid.d != 2:
        raise ConfigurationError("triple increments are defined for d = 2")
    indices = thinned_indices(ds, plan)
    t = np.diff(np.diff(_time_increments(ds, indices), axis=1), axis=2)
    return t, t[:-1] + t[1:]


def triple_increments(ds: FieldDataset, plan: ThinningPlan, i: int, j: int, k: int) -> Tuple[float, Optional[float]]:
    t, t_tilde = triple_increment_tensor(ds, plan)
    n, m1, m2 = t.shape
    if not (1 <= i <= n and 1 <= j <= m1 and 1 <= k <= m2):
        raise IndexError(f"(i, j, k) = ({i}, {j}, {k}) outside 1..{n} x 1..{m1} x 1..{m2}")
    return float(t[i - 1, j - 1, k - 1]), (float(t_tilde[i - 1, j - 1, k - 1]) if i <= n - 1 else None)


def midpoints(ds: FieldDataset, indices: ThinnedIndices, axis: int = 0) -> np.ndarray:
    """y-bar_j = (y~_{j-1} + y~_j) / 2 at the snapped locations, j = 1..m"""
    y = indices.space[axis] / ds.grid.M[axis]
    return 0.5 * (y[:-1] + y[1:])


def alpha_from_energies(fine: float, coarse: float) -> float:
    """log(coarse / fine) / log 4"""
    if fine <= 0 or coarse <= 0:
        raise ConfigurationError(f"triple-increment energies must be positive, got fine = {fine}, coarse = {coarse}")
    return math.log(coarse / fine) / math.log(4.0)


def coarse_plan(plan: ThinningPlan) -> ThinningPlan:
    """Second thinning for the damping estimator: m_k / 2 per axis and n / 4 in time"""
    if any(m % 2 for m in plan.m):
        raise ConfigurationError(f"spatial counts {plan.m} must be even for the coarse thinning")
    if plan.n % 4:
        raise ConfigurationError(f"time count n = {plan.n} must be divisible by 4 for the coarse thinning")
    return ThinningPlan(b=plan.b, m=tuple(m // 2 for m in plan.m), n=plan.n // 4)
