from typing import Optional, Sequence


class SpdeError(Exception):
    """Base class for every error raised by the package"""


class ParameterError(SpdeError):
    """Invalid model parameters (operator, noise, volatility, grid)"""


class AlignmentError(SpdeError):
    def __init__(self, message: str, index: int, position: float):
        super().__init__(message)
        self.index = index
        self.position = position


class ConfigurationError(SpdeError):
    """Inconsistent design: r-consistency, divisibility, mode range, conventions"""


class ConvergenceError(SpdeError):
    def __init__(self, message: str, best_point: Optional[Sequence[float]] = None, best_value: Optional[float] = None):
        super().__init__(message)
        self.best_point = None if best_point is None else tuple(float(v) for v in best_point)
        self.best_value = best_value


class QuadratureError(SpdeError):
    def __init__(self, message: str, achieved: float):
        super().__init__(message)
        self.achieved = achieved


class DatasetFormatError(SpdeError):
    """Dataset file cannot be decoded"""


class VersionMismatchError(DatasetFormatError):
    pass


class TruncatedFileError(DatasetFormatError):
    pass


class ChecksumError(DatasetFormatError):
    pass


class ExperimentError(SpdeError):
    def __init__(self, message: str, failures: int, replications: int):
        super().__init__(message)
        self.failures = failures
        self.replications = replications
