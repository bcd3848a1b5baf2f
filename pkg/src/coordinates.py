import logging
import math
from typing import Sequence, Union

import numpy as np

from .errors import ConfigurationError, ParameterError
from .models import CoefficientPaths, CoordinatePath, FieldDataset, QuadraticVariation, ThinningPlan
from .spde import time_indices

logger = logging.getLogger(__name__)


def g_antideriv(p: int, x: Union[float, np.ndarray], a: float) -> Union[float, np.ndarray]:
    """Antiderivative of sqrt(2) e^{a x / 2} sin(pi p x), i.e. of e_p(x; a) e^{a x}"""
    if p < 1:
        raise ParameterError(f"mode index p must be >= 1, got {p}")
    x = np.asarray(x, dtype=float)
    w = math.pi * p
    half = 0.5 * a
    value = math.sqrt(2.0) * np.exp(half * x) / (half * half + w * w) * (half * np.sin(w * x) - w * np.cos(w * x))
    return float(value) if value.ndim == 0 else value


def cell_weights(p: int, M: int, a: float) -> np.ndarray:
    """g_p(y_j : a) - g_p(y_{j-1} : a) for j = 1..M"""
    return np.diff(g_antideriv(p, np.arange(M + 1) / M, a))


def approx_coordinate(
    ds: FieldDataset,
    ell: Sequence[int],
    kappa_hat: Union[float, Sequence[float]],
    plan: ThinningPlan,
) -> CoordinatePath:
    """x^_ell at the thinned times from the full spatial grid.

    Each X_t(y_j) is integrated against the weighted eigenfunction over the
    cell (y_{j-1}, y_j]; the integrals come from g_antideriv exactly.
    """
    grid = ds.grid
    ell = tuple(int(v) for v in np.atleast_1d(ell))
    kappa = tuple(float(v) for v in np.atleast_1d(kappa_hat))
    if len(ell) != grid.d or len(kappa) != grid.d:
        raise ConfigurationError(f"ell = {ell} and kappa = {kappa} must have {grid.d} entries")
    for k, (p, M_k) in enumerate(zip(ell, grid.M)):
        if p < 1 or p > M_k / 2:
            raise ConfigurationError(f"ell_{k + 1} = {p} cannot be resolved on M_{k + 1} = {M_k} cells (needs 1 <= ell <= M/2)")

    idx = time_indices(grid.N, plan.n)
    weights = [cell_weights(p, M_k, a) for p, M_k, a in zip(ell, grid.M, kappa)]
    if grid.d == 1:
        values = ds.values[idx, 1:] @ weights[0]
    else:
        values = np.einsum("tjk,j,k->t", ds.values[idx, 1:, 1:], weights[0], weights[1], optimize=True)
    return CoordinatePath(ell=ell, times=idx / grid.N, values=values, kappa_used=kappa)


def exact_coordinate(coeffs: CoefficientPaths, ell: Sequence[int], plan: ThinningPlan) -> CoordinatePath:
    ell = tuple(int(v) for v in np.atleast_1d(ell))
    row = coeffs.row(ell)
    idx = time_indices(coeffs.N, plan.n)
    return CoordinatePath(ell=ell, times=idx / coeffs.N, values=coeffs.values[row, idx])


def thin_path(path: CoordinatePath, N: int, n: int) -> CoordinatePath:
    """Restrict a full-resolution path (N + 1 points) to the thinned times t_i^n"""
    if path.values.size != N + 1:
        raise ConfigurationError(f"path has {path.values.size} points, expected N + 1 = {N + 1}")
    idx = time_indices(N, n)
    return CoordinatePath(ell=path.ell, times=path.times[idx], values=path.values[idx], kappa_used=path.kappa_used)


def partial_qv(path: CoordinatePath) -> QuadraticVariation:
    if path.values.size < 2:
        raise ParameterError("partial quadratic variation needs at least two path values")
    increments = np.diff(path.values)
    return QuadraticVariation(partials=np.concatenate(([0.0], np.cumsum(increments * increments))))
