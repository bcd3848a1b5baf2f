import logging
import math
from typing import Optional, Sequence, Tuple

import numpy as np

from config import SPDE_MAX_MODES_2D

from .constants import TRUNCATION_MAX_MODES_1D, TRUNCATION_REL_TOL, TRUNCATION_REL_TOL_2D
from .errors import ConfigurationError, ParameterError
from .models import (
    CoefficientPaths,
    CoordinatePath,
    DatasetMeta,
    FieldDataset,
    NoiseSpec,
    OperatorParams,
    SpaceTimeGrid,
    VolatilityProfile,
)
from .spde import eigenfunction_1d, eigenvalues, gammas, mode_set, validate_noise, volatility_at
from .utils.rng import make_generator, mode_normals

logger = logging.getLogger(__name__)


def _tail_weights(modes: np.ndarray, noise: NoiseSpec, params: OperatorParams) -> np.ndarray:
    """Stationary variance gamma_l^{-alpha} / (2 lambda_l) of each mode under unit volatility"""
    return gammas(modes, noise, params) ** (-noise.alpha) / (2.0 * eigenvalues(modes, params))


def default_truncation(
    params: OperatorParams,
    noise: NoiseSpec,
    rel_tol: Optional[float] = None,
    max_modes: Optional[int] = None,
) -> Tuple[int, ...]:
    """Smallest per-axis L whose omitted stationary variance is below rel_tol of the retained part.

    In two dimensions the omitted variance is estimated analytically from the
    quarter-annulus integral of the mode weights past radius L, and the
    total mode count L1 * L2 is capped by max_modes (SPDE_MAX_MODES_2D).
    """
    validate_noise(noise, params.d)
    # weights decay like |l|^{-2-2 alpha}
    decay = 2.0 + 2.0 * noise.alpha
    if params.d == 1:
        rel_tol = TRUNCATION_REL_TOL if rel_tol is None else rel_tol
        ls = np.arange(1, TRUNCATION_MAX_MODES_1D + 1)
        weights = _tail_weights(ls[:, None], noise, params)
        retained = np.cumsum(weights)
        remainder = weights[-1] * TRUNCATION_MAX_MODES_1D / (decay - 1.0)
        tail = retained[-1] + remainder - retained
        cap = f"{TRUNCATION_MAX_MODES_1D} modes"
    else:
        rel_tol = TRUNCATION_REL_TOL_2D if rel_tol is None else rel_tol
        max_modes = SPDE_MAX_MODES_2D if max_modes is None else max_modes
        count = math.isqrt(max_modes)
        if count < 1:
            raise ParameterError(f"max_modes must be at least 1, got {max_modes}")
        axis = np.arange(1, count + 1)
        grid = np.stack(np.meshgrid(axis, axis, indexing="ij"), axis=-1).reshape(-1, 2)
        weights = _tail_weights(grid, noise, params).reshape(count, count)
        retained = np.diagonal(weights.cumsum(axis=0).cumsum(axis=1))
        radius = np.hypot(axis[:, None], axis[None, :])
        scaled = weights * radius ** decay
        # A_L = max of w |l|^p over the outer edge of [1, L]^2
        edge = np.array([max(scaled[L - 1, :L].max(), scaled[:L, L - 1].max()) for L in axis])
        tail = 0.5 * math.pi * edge * axis ** (2.0 - decay) / (decay - 2.0)
        cap = f"L1 * L2 <= {max_modes}"
    ok = np.flatnonzero(tail < rel_tol * retained)
    if ok.size == 0:
        raise ParameterError(f"truncation tolerance {rel_tol:g} not reached within {cap}; pass an explicit L")
    L = int(ok[0]) + 1
    logger.debug(f"Default truncation L = {L} per axis (d = {params.d}, rel_tol = {rel_tol:g})")
    return (L,) * params.d


def _ou_recursion(lam: np.ndarray, scale: np.ndarray, sigma: np.ndarray, normals: np.ndarray, dt: float, x0: float) -> np.ndarray:
    """x_i = e^{-lam dt} x_{i-1} + sigma(t_{i-1}) scale sqrt((1 - e^{-2 lam dt}) / (2 lam)) Z_i, row-wise"""
    decay = np.exp(-lam * dt)
    step_sd = scale * np.sqrt(-np.expm1(-2.0 * lam * dt) / (2.0 * lam))
    K, N = normals.shape
    out = np.empty((K, N + 1))
    out[:, 0] = x0
    for i in range(1, N + 1):
        out[:, i] = decay * out[:, i - 1] + sigma[i - 1] * step_sd * normals[:, i - 1]
    return out


def simulate_coefficients(
    params: OperatorParams,
    noise: NoiseSpec,
    profile: VolatilityProfile,
    N: int,
    L: Optional[Sequence[int]] = None,
    seed: int = 0,
    replication_id: int = 0,
    x0: float = 0.0,
) -> CoefficientPaths:
    if N < 1:
        raise ParameterError(f"N must be at least 1, got {N}")
    validate_noise(noise, params.d)
    L = tuple(int(v) for v in L) if L is not None else default_truncation(params, noise)
    if len(L) != params.d or any(v < 1 for v in L):
        raise ParameterError(f"truncation L = {L} must have {params.d} positive entries")

    modes = mode_set(L)
    lam = eigenvalues(modes, params)
    if np.any(lam <= 0):
        raise ParameterError("operator has non-positive eigenvalues on the mode set")
    scale = gammas(modes, noise, params) ** (-noise.alpha / 2.0)
    sigma = np.asarray(volatility_at(np.arange(N) / N, profile), dtype=float).reshape(N)

    logger.info(f"Simulating {len(modes)} coefficient paths over N = {N} steps (seed = {seed}, replication = {replication_id})")
    normals = mode_normals(seed, replication_id, modes, N)
    values = _ou_recursion(lam, scale, sigma, normals, 1.0 / N, x0)
    return CoefficientPaths(modes=modes, values=values, L=L, N=N, seed=seed, replication_id=replication_id)


def simulate_coordinate(
    params: OperatorParams,
    noise: NoiseSpec,
    profile: VolatilityProfile,
    N: int,
    ell: Optional[Sequence[int]] = None,
    seed: int = 0,
    replication_id: int = 0,
    x0: float = 0.0,
) -> CoordinatePath:
    """Simulate x_ell alone on the full time grid.

    Shares the per-mode noise stream with simulate_coefficients, so the path
    equals the ell-th row of the full simulation bit for bit.
    """
    validate_noise(noise, params.d)
    ell = tuple(ell) if ell is not None else (1,) * params.d
    modes = np.asarray([ell], dtype=np.int64)
    lam = eigenvalues(modes, params)
    scale = gammas(modes, noise, params) ** (-noise.alpha / 2.0)
    sigma = np.asarray(volatility_at(np.arange(N) / N, profile), dtype=float).reshape(N)
    normals = make_generator(seed, replication_id, ell).standard_normal(N)[None, :]
    values = _ou_recursion(lam, scale, sigma, normals, 1.0 / N, x0)[0]
    return CoordinatePath(ell=ell, times=np.arange(N + 1) / N, values=values, kappa_used=params.kappa)


def _basis(count: int, M: int, kappa: float) -> np.ndarray:
    y = np.arange(M + 1) / M
    return np.stack([eigenfunction_1d(p, y, kappa) for p in range(1, count + 1)])


def assemble_field(
    coeffs: CoefficientPaths,
    grid: SpaceTimeGrid,
    params: OperatorParams,
    meta: Optional[DatasetMeta] = None,
) -> FieldDataset:
    """Evaluate the truncated eigen-expansion at every grid node, time-major"""
    if grid.d != params.d or len(coeffs.L) != grid.d:
        raise ConfigurationError(f"coefficients (L = {coeffs.L}) and grid (M = {grid.M}) dimensions differ")
    if coeffs.N != grid.N:
        raise ConfigurationError(f"coefficients cover N = {coeffs.N} steps, grid has N = {grid.N}")
    if coeffs.modes.shape != (math.prod(coeffs.L), grid.d) or not np.array_equal(coeffs.modes, mode_set(coeffs.L)):
        raise ConfigurationError(f"coefficient mode set does not match the truncation L = {coeffs.L}")

    kappa = params.kappa
    if grid.d == 1:
        basis = _basis(coeffs.L[0], grid.M[0], kappa[0])
        values = coeffs.values.T @ basis
    else:
        rows = _basis(coeffs.L[0], grid.M[0], kappa[0])
        cols = _basis(coeffs.L[1], grid.M[1], kappa[1])
        slices = coeffs.values.T.reshape(grid.N + 1, coeffs.L[0], coeffs.L[1])
        values = np.matmul(rows.T, np.matmul(slices, cols))
    logger.debug(f"Assembled field of shape {values.shape}")
    return FieldDataset(grid=grid, values=values, meta=meta)


def simulate_field(
    params: OperatorParams,
    noise: NoiseSpec,
    profile: VolatilityProfile,
    grid: SpaceTimeGrid,
    L: Optional[Sequence[int]] = None,
    seed: int = 0,
    replication_id: int = 0,
) -> Tuple[FieldDataset, CoefficientPaths]:
    coeffs = simulate_coefficients(params, noise, profile, grid.N, L=L, seed=seed, replication_id=replication_id)
    meta = DatasetMeta(params=params, noise=noise, profile=profile, L=coeffs.L, seed=seed, replication_id=replication_id)
    return assemble_field(coeffs, grid, params, meta=meta), coeffs
