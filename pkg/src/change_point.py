import logging
import math
from functools import lru_cache
from typing import Iterable, Optional, Union

import numpy as np
from scipy import optimize, stats

from .constants import KOLMOGOROV_BRACKET, KOLMOGOROV_MAX_TERMS, KOLMOGOROV_SERIES_SWITCH, KOLMOGOROV_TERM_TOL
from .errors import ParameterError
from .models import CusumStatistic, QuadraticVariation, TestResult

logger = logging.getLogger(__name__)

ArrayLike = Union[float, np.ndarray]

SQRT_2PI = math.sqrt(2.0 * math.pi)


def t_statistic(qv: QuadraticVariation, beta_sq: float) -> CusumStatistic:
    """T_n = sqrt(n/2) max_k |S_k - (k/n) S_n| / beta_sq, with the smallest maximizing k"""
    if not beta_sq > 0:
        raise ParameterError(f"beta_sq must be positive, got {beta_sq}")
    n = qv.n
    if n < 2:
        raise ParameterError(f"the CUSUM statistic needs at least two increments, got {n}")
    partial = qv.partials[1:]
    k = np.arange(1, n + 1)
    deviation = np.abs(partial - (k / n) * qv.total)
    k_star = int(np.argmax(deviation)) + 1
    t_n = np.sqrt(n / 2) * deviation[k_star - 1] / beta_sq
    return CusumStatistic(t_n=float(t_n), k_star=k_star, n=n, beta_sq=float(beta_sq))


def _alternating_terms(x: float):
    for k in range(1, KOLMOGOROV_MAX_TERMS + 1):
        term = math.exp(-2.0 * k * k * x * x)
        yield k, term
        if term < KOLMOGOROV_TERM_TOL:
            return


def _dual_terms(x: float):
    for k in range(1, KOLMOGOROV_MAX_TERMS + 1):
        a = (2 * k - 1) ** 2 * math.pi ** 2 / 8.0
        term = math.exp(-a / (x * x))
        yield a, term
        if term < KOLMOGOROV_TERM_TOL:
            return


def kolmogorov_sf_alternating(x: float) -> float:
    """2 sum_k (-1)^{k-1} exp(-2 k^2 x^2)"""
    return 2.0 * sum(term if k % 2 else -term for k, term in _alternating_terms(x))


def kolmogorov_cdf_dual(x: float) -> float:
    """sqrt(2 pi) / x sum_k exp(-(2k - 1)^2 pi^2 / (8 x^2))"""
    return SQRT_2PI / x * sum(term for _, term in _dual_terms(x))


def _cdf_scalar(x: float) -> float:
    if x <= 0.0:
        return 0.0
    if x >= KOLMOGOROV_SERIES_SWITCH:
        return 1.0 - kolmogorov_sf_alternating(x)
    return min(kolmogorov_cdf_dual(x), 1.0)


def _sf_scalar(x: float) -> float:
    if x <= 0.0:
        return 1.0
    if x >= KOLMOGOROV_SERIES_SWITCH:
        return kolmogorov_sf_alternating(x)
    return 1.0 - min(kolmogorov_cdf_dual(x), 1.0)


def _pdf_scalar(x: float) -> float:
    if x <= 0.0:
        return 0.0
    if x >= KOLMOGOROV_SERIES_SWITCH:
        return 8.0 * x * sum((term if k % 2 else -term) * k * k for k, term in _alternating_terms(x))
    return SQRT_2PI / (x * x) * sum(term * (2.0 * a / (x * x) - 1.0) for a, term in _dual_terms(x))


_cdf = np.vectorize(_cdf_scalar, otypes=[float])
_sf = np.vectorize(_sf_scalar, otypes=[float])
_pdf = np.vectorize(_pdf_scalar, otypes=[float])


def _unwrap(values: np.ndarray) -> ArrayLike:
    return float(values) if values.ndim == 0 else values


def kolmogorov_cdf(x: ArrayLike) -> ArrayLike:
    """P(sup |Brownian bridge| <= x); dual series below 0.75, alternating series above"""
    return _unwrap(_cdf(np.asarray(x, dtype=float)))


def kolmogorov_sf(x: ArrayLike) -> ArrayLike:
    return _unwrap(_sf(np.asarray(x, dtype=float)))


def kolmogorov_pdf(x: ArrayLike) -> ArrayLike:
    return _unwrap(_pdf(np.asarray(x, dtype=float)))


@lru_cache(maxsize=256)
def kolmogorov_quantile(p: float) -> float:
    if not 0.0 < p < 1.0:
        raise ParameterError(f"quantile level must lie in (0, 1), got {p}")
    lower, upper = KOLMOGOROV_BRACKET
    return float(optimize.bisect(lambda x: _cdf_scalar(x) - p, lower, upper, xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=200))


def decide(t_n: float, level: float, k_star: Optional[int] = None) -> TestResult:
    """Reject when T_n exceeds the (1 - level) Kolmogorov quantile; p = 1 - F(T_n)"""
    if not 0.0 < level < 1.0:
        raise ParameterError(f"level must lie in (0, 1), got {level}")
    if t_n < 0:
        raise ParameterError(f"test statistic must be non-negative, got {t_n}")
    critical = kolmogorov_quantile(1.0 - level)
    p_value = min(max(_sf_scalar(t_n), 0.0), 1.0)
    return TestResult(t_n=t_n, k_star=k_star, p_value=p_value, critical_value=critical, level=level, reject=t_n > critical)


def run_test(qv: QuadraticVariation, level: float = 0.05, beta_sq: Optional[float] = None) -> TestResult:
    """Full test; beta_sq defaults to the total quadratic variation S_n"""
    beta_sq = qv.total if beta_sq is None else beta_sq
    stat = t_statistic(qv, beta_sq)
    result = decide(stat.t_n, level, k_star=stat.k_star)
    logger.debug(f"T_n = {result.t_n:.5g} (n = {stat.n}, k* = {stat.k_star}), p = {result.p_value:.4g}, reject = {result.reject}")
    return result


def ks_distance(sample: Iterable[float]) -> float:
    """Kolmogorov-Smirnov distance between a T_n sample and the Kolmogorov distribution"""
    values = np.asarray(list(sample), dtype=float)
    if values.size == 0:
        raise ParameterError("ks_distance needs a non-empty sample")
    return float(stats.kstest(values, kolmogorov_cdf).statistic)
