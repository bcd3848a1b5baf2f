from .base_estimator import BaseEstimator
from .methodology_a import MethodologyA, fit_methodology_a
from .methodology_b import MethodologyB, fit_methodology_b
from .oracle import OracleEstimator
from .two_dim import TwoDimensional, estimate_alpha, fit_2d

__all__ = [
    'BaseEstimator',
    'MethodologyA',
    'MethodologyB',
    'OracleEstimator',
    'TwoDimensional',
    'fit_methodology_a',
    'fit_methodology_b',
    'estimate_alpha',
    'fit_2d',
]
