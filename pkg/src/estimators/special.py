"""Special functions for the contrast models: psi_r, psi_{r,alpha} and J0."""
import logging
import math
from typing import Sequence, Union

import numpy as np
from scipy import integrate, special
from scipy.interpolate import CubicSpline

from ..constants import PSI_QUAD_EPSREL, PSI_SPLINE_NODES
from ..errors import ParameterError, QuadratureError

logger = logging.getLogger(__name__)

ArrayLike = Union[float, np.ndarray]

# psi_{r,alpha} is accepted when quad reports at most this relative error
PSI_ALPHA_ACCEPT = 1e-8
# Gaussian factor e^{-x^2} is below 1e-27 past this point
_DAMPED_UPPER = 8.0
_SERIES_SWITCH = 2.0
_SERIES_TERMS = 30


def psi_r(theta2: ArrayLike, r: float) -> ArrayLike:
    """2/sqrt(pi theta2) (1 - exp(-r^2/(4 theta2)) + r/sqrt(theta2) int_{r/sqrt(4 theta2)}^inf e^{-x^2} dx)"""
    theta2 = np.asarray(theta2, dtype=float)
    if np.any(theta2 <= 0) or r <= 0:
        raise ParameterError(f"psi_r needs theta2 > 0 and r > 0, got theta2 = {theta2}, r = {r}")
    root = np.sqrt(theta2)
    u = r / (2.0 * root)
    tail = 0.5 * math.sqrt(math.pi) * special.erfc(u)
    value = 2.0 / np.sqrt(math.pi * theta2) * (-np.expm1(-u * u) + r / root * tail)
    return float(value) if value.ndim == 0 else value


def bessel_j0(x: ArrayLike) -> ArrayLike:
    value = special.j0(x)
    return float(value) if np.ndim(value) == 0 else value


def bessel_j0_series(x: ArrayLike, terms: int = 40) -> ArrayLike:
    """1 + sum_k (-1)^k / (k!)^2 (x/2)^{2k}, truncated after ``terms`` terms"""
    x = np.asarray(x, dtype=float)
    q = -(x * x) / 4.0
    term = np.ones_like(x)
    total = np.ones_like(x)
    for k in range(1, terms):
        term = term * q / (k * k)
        total = total + term
    return float(total) if total.ndim == 0 else total


_C4_COEFFS = np.array(
    [(-1) ** k * (2.0 ** k - 2.0) / (4.0 ** k * math.factorial(k) ** 2) for k in range(2, 2 + _SERIES_TERMS)]
)


def bessel_combination_over_z4(z: ArrayLike) -> ArrayLike:
    """(J0(sqrt(2) z) - 2 J0(z) + 1) / z^4, continuous at 0 with value 1/32"""
    scalar = np.ndim(z) == 0
    z = np.atleast_1d(np.asarray(z, dtype=float))
    small = np.abs(z) <= _SERIES_SWITCH
    out = np.empty_like(z)
    zs = z[small] ** 2
    # Horner in z^2 over the k >= 2 coefficients
    acc = np.zeros_like(zs)
    for c in _C4_COEFFS[::-1]:
        acc = acc * zs + c
    out[small] = acc
    zl = z[~small]
    out[~small] = (special.j0(math.sqrt(2.0) * zl) - 2.0 * special.j0(zl) + 1.0) / zl ** 4
    return float(out[0]) if scalar else out


def _undamped_integral(s: float, alpha: float) -> float:
    """int_0^inf x^{-1-2 alpha} (J0(sqrt(2) s x) - 2 J0(s x) + 1) dx in closed form (Mellin transform of J0)"""
    log2 = math.log(2.0)
    return (
        s ** (2.0 * alpha)
        * 2.0 ** (-2.0 * alpha - 1.0)
        * special.gamma(2.0 - alpha)
        / (alpha * special.gamma(1.0 + alpha))
        * 2.0
        * log2
        * special.exprel((alpha - 1.0) * log2)
    )


def psi_r_alpha(theta2: float, r: float, alpha: float) -> float:
    """2/(theta2 pi) int_0^inf (1 - e^{-x^2}) x^{-1-2 alpha} (J0(sqrt(2) r x / sqrt(theta2)) - 2 J0(r x / sqrt(theta2)) + 1) dx.

    The undamped part has a closed form; the e^{-x^2} part is integrated on
    [0, 8] with the x^{3 - 2 alpha} singularity handled as an algebraic weight.
    """
    if theta2 <= 0 or r <= 0 or not 0.0 < alpha < 2.0:
        raise ParameterError(f"psi_r_alpha needs theta2 > 0, r > 0, alpha in (0, 2); got {theta2}, {r}, {alpha}")
    s = r / math.sqrt(theta2)
    undamped = _undamped_integral(s, alpha)
    damped, abserr, info = integrate.quad(
        lambda x: math.exp(-x * x) * bessel_combination_over_z4(s * x),
        0.0,
        _DAMPED_UPPER,
        weight="alg",
        wvar=(3.0 - 2.0 * alpha, 0.0),
        epsabs=0.0,
        epsrel=PSI_QUAD_EPSREL,
        limit=500,
        full_output=1,
    )[:3]
    damped *= s ** 4
    abserr *= s ** 4
    integral = undamped - damped
    achieved = abserr / abs(integral) if integral != 0 else math.inf
    if not math.isfinite(integral) or achieved > PSI_ALPHA_ACCEPT:
        raise QuadratureError(
            f"psi_r_alpha quadrature did not converge (theta2 = {theta2}, r = {r}, alpha = {alpha}): relative error {achieved:.3g}",
            achieved=achieved,
        )
    return 2.0 / (theta2 * math.pi) * integral


class PsiSpline:
    """Cached psi_{r,alpha} over a theta2 range, interpolated in log-log coordinates"""

    def __init__(self, r: float, alpha: float, theta2_range: Sequence[float], nodes: int = PSI_SPLINE_NODES):
        lower, upper = float(theta2_range[0]), float(theta2_range[1])
        if not 0.0 < lower < upper:
            raise ParameterError(f"invalid theta2 range ({lower}, {upper})")
        self.r = r
        self.alpha = alpha
        self.lower = lower
        self.upper = upper
        grid = np.geomspace(lower, upper, nodes)
        values = np.array([psi_r_alpha(t, r, alpha) for t in grid])
        if np.any(values <= 0):
            raise QuadratureError(f"psi_r_alpha is not positive on [{lower}, {upper}] (r = {r}, alpha = {alpha})", achieved=math.nan)
        self._spline = CubicSpline(np.log(grid), np.log(values))
        logger.debug(f"Built psi spline for r = {r:.6g}, alpha = {alpha:.6g} on [{lower:.4g}, {upper:.4g}]")

    def __call__(self, theta2: ArrayLike) -> ArrayLike:
        t = np.clip(np.asarray(theta2, dtype=float), self.lower, self.upper)
        value = np.exp(self._spline(np.log(t)))
        return float(value) if value.ndim == 0 else value
