import logging
import math
from typing import Dict, Optional, Sequence, Tuple, Union

import numpy as np

from .constants import SNAP_EXACT_TOLERANCE, SNAP_MAX_DISPLACEMENT
from .errors import AlignmentError, ConfigurationError, ParameterError
from .models import (
    NoiseSpec,
    OperatorParams,
    SpaceTimeGrid,
    ThinnedIndices,
    ThinningPlan,
    VolatilityProfile,
)

logger = logging.getLogger(__name__)

ArrayLike = Union[float, Sequence[float], np.ndarray]


def wedge_power(h: float, a: float, b: float) -> float:
    """h^{a wedge b}: h^a if a < b, -h^b log h if a = b, h^b if a > b (0 < h < 1)"""
    if not 0.0 < h < 1.0:
        raise ParameterError(f"wedge_power needs h in (0, 1), got {h}")
    if a < b:
        return h ** a
    if a == b:
        return -(h ** b) * math.log(h)
    return h ** b


def wedge_large(L: float, a: float, b: float) -> float:
    """L^{a wedge b} = 1 / (1/L)^{a wedge b} for L > 1"""
    if L <= 1.0:
        raise ParameterError(f"wedge_large needs L > 1, got {L}")
    return 1.0 / wedge_power(1.0 / L, a, b)


def _mode_array(l: Union[int, Sequence[int], np.ndarray]) -> np.ndarray:
    modes = np.atleast_1d(np.asarray(l, dtype=np.int64))
    if np.any(modes < 1):
        raise ParameterError(f"mode indices must be >= 1, got {modes.tolist()}")
    return modes


def eigenvalue(l: Union[int, Sequence[int]], params: OperatorParams) -> float:
    modes = _mode_array(l)
    if modes.size != params.d:
        raise ParameterError(f"mode {modes.tolist()} does not match dimension d = {params.d}")
    return float(params.theta2 * math.pi ** 2 * np.sum(modes.astype(float) ** 2) + params.drift_shift)


def eigenvalues(modes: np.ndarray, params: OperatorParams) -> np.ndarray:
    """Vectorized eigenvalue for a (K, d) array of multi-indices"""
    norms = np.sum(np.asarray(modes, dtype=float) ** 2, axis=1)
    return params.theta2 * math.pi ** 2 * norms + params.drift_shift


def eigenfunction_1d(p: int, x: ArrayLike, kappa: float) -> np.ndarray:
    """sqrt(2) exp(-kappa x / 2) sin(pi p x), the one-axis factor of e_l"""
    x = np.asarray(x, dtype=float)
    values = math.sqrt(2.0) * np.exp(-0.5 * kappa * x) * np.sin(math.pi * p * x)
    return np.where((x == 0.0) | (x == 1.0), 0.0, values)


def eigenfunction(l: Union[int, Sequence[int]], y: ArrayLike, kappa: Union[float, Sequence[float]]) -> Union[float, np.ndarray]:
    """e_l(y; kappa) = 2^{d/2} exp(-kappa.y / 2) prod_k sin(pi l_k y_k).

    For d = 2, ``y`` is a pair of coordinates (or a pair of broadcastable arrays).
    """
    modes = _mode_array(l)
    kappas = np.atleast_1d(np.asarray(kappa, dtype=float))
    if modes.size == 1:
        result = eigenfunction_1d(int(modes[0]), y, float(kappas[0]))
    else:
        if not isinstance(y, (tuple, list)):
            y = np.atleast_1d(np.asarray(y, dtype=float))
        if len(y) != modes.size:
            raise ParameterError(f"point {y} does not match dimension d = {modes.size}")
        result = np.ones(np.broadcast(*[np.asarray(c) for c in y]).shape)
        for p, coord, k in zip(modes, y, kappas):
            result = result * eigenfunction_1d(int(p), coord, float(k))
    return float(result) if np.ndim(result) == 0 else result


def mode_set(L: Tuple[int, ...]) -> np.ndarray:
    """All multi-indices 1 <= l_k <= L_k, row-major in the last axis"""
    axes = [np.arange(1, count + 1) for count in L]
    grids = np.meshgrid(*axes, indexing="ij")
    return np.stack([g.ravel() for g in grids], axis=1)


def validate_noise(noise: NoiseSpec, d: int) -> None:
    if noise.alpha <= d / 2.0 - 1.0:
        raise ParameterError(f"alpha must exceed d/2 - 1 = {d / 2.0 - 1.0}, got {noise.alpha}")
    if noise.gamma_rule == "cylindrical" and d != 1:
        raise ParameterError("cylindrical noise is only defined for d = 1")


def gammas(modes: np.ndarray, noise: NoiseSpec, params: OperatorParams) -> np.ndarray:
    if noise.gamma_rule == "spectral":
        return eigenvalues(modes, params)
    if noise.gamma_rule == "polynomial":
        return math.pi ** 2 * np.sum(np.asarray(modes, dtype=float) ** 2, axis=1) + noise.mu0
    return np.ones(len(modes))


def gamma(l: Union[int, Sequence[int]], noise: NoiseSpec, params: OperatorParams) -> float:
    return float(gammas(_mode_array(l)[None, :], noise, params)[0])


def c_gamma(noise: NoiseSpec, params: OperatorParams) -> float:
    """lim gamma_l / (pi^2 |l|^2): theta2 for the spectral rule, 1 for the polynomial rule"""
    if noise.gamma_rule == "spectral":
        return params.theta2
    return 1.0


def gamma_bounds(modes: np.ndarray, noise: NoiseSpec, params: OperatorParams) -> Tuple[float, float]:
    """Tightest (c1, c2) with c1 |l|^2 <= gamma_l <= c2 |l|^2 over a finite mode set"""
    ratios = gammas(modes, noise, params) / np.sum(np.asarray(modes, dtype=float) ** 2, axis=1)
    return float(ratios.min()), float(ratios.max())


def volatility_at(t: ArrayLike, profile: VolatilityProfile) -> Union[float, np.ndarray]:
    """Right-continuous step evaluation; t = 1 maps to the last level"""
    t_arr = np.asarray(t, dtype=float)
    if np.any((t_arr < 0.0) | (t_arr > 1.0)):
        raise ParameterError("volatility is only defined on [0, 1]")
    idx = np.searchsorted(np.asarray(profile.change_points, dtype=float), t_arr, side="right")
    values = np.asarray(profile.levels, dtype=float)[idx]
    return float(values) if values.ndim == 0 else values


def integrated_variance(profile: VolatilityProfile) -> float:
    """V = int_0^1 sigma(t)^2 dt, exact for the step profile"""
    edges = (0.0,) + profile.change_points + (1.0,)
    return float(sum(s * s * (hi - lo) for s, lo, hi in zip(profile.levels, edges[:-1], edges[1:])))


def v0(profile: VolatilityProfile, theta2: float) -> float:
    return integrated_variance(profile) / math.sqrt(theta2)


def beta_sq_truth(profile: VolatilityProfile, noise: NoiseSpec, params: OperatorParams, ell: Optional[Sequence[int]] = None) -> float:
    """Probability limit of the total quadratic variation of x_ell: gamma_ell^{-alpha} int sigma^2"""
    ell = tuple(ell) if ell is not None else (1,) * params.d
    return gamma(ell, noise, params) ** (-noise.alpha) * integrated_variance(profile)


def time_step(N: int, n: int) -> int:
    if not 1 <= n <= N:
        raise ConfigurationError(f"thinned time count n = {n} must lie in [1, N = {N}]")
    return N // n


def time_indices(N: int, n: int) -> np.ndarray:
    """Full-grid indices of t_i^n = i floor(N/n) / N, i = 0..n"""
    return np.arange(n + 1) * time_step(N, n)


def snap_positions(positions: np.ndarray, M: int, strict: bool = False) -> Tuple[np.ndarray, float]:
    """Map nominal points in [0, 1] to full-grid indices.

    Displacements up to SNAP_MAX_DISPLACEMENT cells are snapped with a warning;
    ``strict`` rejects anything beyond SNAP_EXACT_TOLERANCE * M.
    """
    real = positions * M
    snapped = np.rint(real).astype(np.int64)
    errors = np.abs(real - snapped)
    tolerance = SNAP_EXACT_TOLERANCE * M
    worst = int(np.argmax(errors)) if errors.size else 0
    max_disp = float(errors.max()) if errors.size else 0.0
    if (strict and max_disp > tolerance) or max_disp > SNAP_MAX_DISPLACEMENT:
        raise AlignmentError(
            f"thinned point y~_{worst} = {positions[worst]:.10g} is {errors[worst]:.4g} cells off the grid (M = {M})",
            index=worst,
            position=float(positions[worst]),
        )
    if np.any(snapped < 0) or np.any(snapped > M) or np.any(np.diff(snapped) <= 0):
        raise AlignmentError(
            f"thinned points collapse or leave the grid after snapping (M = {M})",
            index=worst,
            position=float(positions[worst]),
        )
    if max_disp > tolerance:
        logger.warning(f"Snapped thinned points to the grid (M = {M}): max displacement {max_disp:.4g} cells at y~_{worst}")
    return snapped, max_disp


def thinned_grid(full: SpaceTimeGrid, plan: ThinningPlan, strict: bool = False) -> ThinnedIndices:
    if len(plan.m) != full.d:
        raise ConfigurationError(f"plan has {len(plan.m)} spatial counts for a {full.d}-dimensional grid")
    time = time_indices(full.N, plan.n)
    space, positions = [], []
    max_disp = 0.0
    for k, (M_k, m_k) in enumerate(zip(full.M, plan.m)):
        nominal = plan.b + np.arange(m_k + 1) * (1.0 - 2.0 * plan.b) / m_k
        idx, disp = snap_positions(nominal, M_k, strict=strict)
        space.append(idx)
        positions.append(nominal)
        max_disp = max(max_disp, disp)
    return ThinnedIndices(time=time, space=tuple(space), positions=tuple(positions), max_displacement=max_disp)


def effective_r(full: SpaceTimeGrid, indices: ThinnedIndices, axis: int = 0) -> Tuple[float, float]:
    """(r, relative spacing spread) with r = mean snapped spacing / sqrt(Delta_n)"""
    spacing = np.diff(indices.space[axis]) / full.M[axis]
    mean = float(spacing.mean())
    spread = float(np.max(np.abs(spacing - mean)) / mean)
    dt = float(indices.time[1] - indices.time[0]) / full.N
    return mean / math.sqrt(dt), spread


def balance_diagnostics(
    n: int,
    N: int,
    M_min: int,
    alpha: float = 0.0,
    d: int = 1,
    rate: Optional[float] = None,
    m: Optional[int] = None,
) -> Dict[str, float]:
    """Ratios controlling the reconstruction of the coordinate process.

    ``rate`` is the convergence rate R of the kappa estimator; the two rate
    conditions are n^2 Delta_n^{(1+alpha-d/2) wedge 1} / R^2 and
    n^{3/2} / M^{(2(1+alpha)-d) wedge 2}, both of which must vanish.
    """
    delta_n = time_step(N, n) / N
    report: Dict[str, float] = {"n": float(n), "N": float(N), "M": float(M_min)}
    report["spatial_ratio"] = n ** 1.5 / wedge_large(M_min, 2.0 * (1.0 + alpha) - d, 2.0) if M_min > 1 else math.inf
    report["n32_over_M"] = n ** 1.5 / M_min
    if rate is not None and delta_n < 1.0:
        report["temporal_ratio"] = n ** 2 * wedge_power(delta_n, 1.0 + alpha - d / 2.0, 1.0) / rate ** 2
    if m is not None:
        report["n32_over_mN"] = n ** 1.5 / (m * N)
    return report
