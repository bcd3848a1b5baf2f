import math
from typing import Any, Dict, List, Literal, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from .constants import COARSE_GRID_POINTS, MAX_EVALS, REFINE_TOL
from .errors import ConfigurationError, ParameterError


def _as_tuple(value: Any) -> Any:
    if isinstance(value, (int, float)):
        return (value,)
    if isinstance(value, np.ndarray):
        return tuple(value.tolist())
    if isinstance(value, list):
        return tuple(value)
    return value


def _frozen_array(value: Any, dtype: Any = float) -> np.ndarray:
    array = np.array(value, dtype=dtype)
    array.setflags(write=False)
    return array


class OperatorParams(BaseModel):
    model_config = ConfigDict(frozen=True)

    theta0: float = Field(0.0, description="Potential coefficient")
    theta1: Tuple[float, ...] = Field((0.0,), description="Drift coefficients, one per space dimension")
    theta2: float = Field(1.0, description="Diffusivity, strictly positive")

    @field_validator("theta1", mode="before")
    @classmethod
    def wrap_theta1(cls, v: Any) -> Any:
        return _as_tuple(v)

    @model_validator(mode="after")
    def check_invariants(self) -> "OperatorParams":
        if self.theta2 <= 0:
            raise ParameterError(f"theta2 must be positive, got {self.theta2}")
        if self.d not in (1, 2):
            raise ParameterError(f"only d = 1 or d = 2 is supported, got d = {self.d}")
        if self.lambda_min <= 0:
            raise ParameterError(f"smallest eigenvalue must be positive, got {self.lambda_min:.6g}")
        return self

    @property
    def d(self) -> int:
        return len(self.theta1)

    @property
    def kappa(self) -> Tuple[float, ...]:
        return tuple(t / self.theta2 for t in self.theta1)

    @property
    def drift_shift(self) -> float:
        return sum(t * t for t in self.theta1) / (4.0 * self.theta2) - self.theta0

    @property
    def lambda_min(self) -> float:
        return self.theta2 * math.pi ** 2 * self.d + self.drift_shift


class VolatilityProfile(BaseModel):
    model_config = ConfigDict(frozen=True)

    change_points: Tuple[float, ...] = Field((), description="Strictly increasing change points in (0, 1)")
    levels: Tuple[float, ...] = Field((1.0,), description="Volatility levels, one more than change points")

    @field_validator("change_points", "levels", mode="before")
    @classmethod
    def wrap_sequences(cls, v: Any) -> Any:
        return _as_tuple(v)

    @model_validator(mode="after")
    def check_invariants(self) -> "VolatilityProfile":
        taus, levels = self.change_points, self.levels
        if len(levels) != len(taus) + 1:
            raise ParameterError(f"expected {len(taus) + 1} levels for {len(taus)} change points, got {len(levels)}")
        if any(s <= 0 for s in levels):
            raise ParameterError(f"volatility levels must be positive, got {levels}")
        if any(not 0.0 < t < 1.0 for t in taus):
            raise ParameterError(f"change points must lie in (0, 1), got {taus}")
        if any(b <= a for a, b in zip(taus, taus[1:])):
            raise ParameterError(f"change points must be strictly increasing, got {taus}")
        if any(a == b for a, b in zip(levels, levels[1:])):
            raise ParameterError(f"adjacent volatility levels must differ, got {levels}")
        return self

    @classmethod
    def constant(cls, sigma: float = 1.0) -> "VolatilityProfile":
        return cls(change_points=(), levels=(sigma,))

    @classmethod
    def single_change(cls, tau: float, sigma1: float, sigma2: float) -> "VolatilityProfile":
        return cls(change_points=(tau,), levels=(sigma1, sigma2))

    @property
    def r(self) -> int:
        return len(self.change_points)

    @property
    def is_constant(self) -> bool:
        return self.r == 0


class NoiseSpec(BaseModel):
    model_config = ConfigDict(frozen=True)

    alpha: float = Field(0.0, ge=0.0, description="Damping exponent of the Q-Wiener process")
    gamma_rule: Literal["spectral", "polynomial", "cylindrical"] = Field("cylindrical")
    mu0: float = Field(0.0, description="Shift of the polynomial rule gamma_l = pi^2 |l|^2 + mu0")

    @model_validator(mode="after")
    def check_invariants(self) -> "NoiseSpec":
        if self.gamma_rule == "cylindrical" and self.alpha != 0.0:
            raise ParameterError("cylindrical noise requires alpha = 0")
        if self.gamma_rule == "polynomial" and self.mu0 <= -2.0 * math.pi ** 2:
            raise ParameterError(f"mu0 must exceed -2 pi^2, got {self.mu0}")
        return self


class SpaceTimeGrid(BaseModel):
    model_config = ConfigDict(frozen=True)

    N: int = Field(..., ge=1, description="Number of time steps")
    M: Tuple[int, ...] = Field(..., description="Number of space cells per axis")

    @field_validator("M", mode="before")
    @classmethod
    def wrap_counts(cls, v: Any) -> Any:
        return _as_tuple(v)

    @model_validator(mode="after")
    def check_invariants(self) -> "SpaceTimeGrid":
        if not 1 <= len(self.M) <= 2:
            raise ParameterError(f"grid dimension must be 1 or 2, got {len(self.M)}")
        if any(m < 2 for m in self.M):
            raise ParameterError(f"each M_k must be at least 2, got {self.M}")
        return self

    @property
    def d(self) -> int:
        return len(self.M)

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.N + 1) / self.N

    def axis(self, k: int = 0) -> np.ndarray:
        return np.arange(self.M[k] + 1) / self.M[k]

    @property
    def shape(self) -> Tuple[int, ...]:
        return (self.N + 1,) + tuple(m + 1 for m in self.M)


class ThinningPlan(BaseModel):
    model_config = ConfigDict(frozen=True)

    b: float = Field(..., gt=0.0, lt=0.5, description="Distance of the spatial window from the boundary")
    m: Tuple[int, ...] = Field(..., description="Thinned spatial counts per axis")
    n: int = Field(..., ge=1, description="Thinned time count")

    @field_validator("m", mode="before")
    @classmethod
    def wrap_counts(cls, v: Any) -> Any:
        return _as_tuple(v)

    @model_validator(mode="after")
    def check_invariants(self) -> "ThinningPlan":
        if any(k < 1 for k in self.m):
            raise ParameterError(f"thinned spatial counts must be positive, got {self.m}")
        return self

    @property
    def delta(self) -> float:
        return (1.0 - 2.0 * self.b) / self.m[0]

    def with_n(self, n: int) -> "ThinningPlan":
        return self.model_copy(update={"n": n})


class ThinnedIndices(BaseModel):
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    time: np.ndarray
    space: Tuple[np.ndarray, ...]
    positions: Tuple[np.ndarray, ...] = Field(..., description="Nominal (unsnapped) thinned points")
    max_displacement: float = Field(0.0, description="Largest snap displacement in grid cells")


class CoefficientPaths(BaseModel):
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    modes: np.ndarray = Field(..., description="Mode multi-indices, shape (K, d)")
    values: np.ndarray = Field(..., description="x_l(t_i), shape (K, N + 1)")
    L: Tuple[int, ...]
    N: int
    seed: int
    replication_id: int = 0

    @field_validator("modes")
    @classmethod
    def freeze_modes(cls, v: Any) -> np.ndarray:
        return _frozen_array(v, dtype=np.int64)

    @field_validator("values")
    @classmethod
    def freeze_values(cls, v: Any) -> np.ndarray:
        return _frozen_array(v)

    @model_validator(mode="after")
    def check_invariants(self) -> "CoefficientPaths":
        if self.values.shape != (self.modes.shape[0], self.N + 1):
            raise ParameterError(f"values shape {self.values.shape} does not match {self.modes.shape[0]} modes and N = {self.N}")
        return self

    def row(self, ell: Tuple[int, ...]) -> int:
        matches = np.flatnonzero(np.all(self.modes == np.asarray(ell), axis=1))
        if matches.size == 0:
            raise ConfigurationError(f"mode {ell} is outside the simulated mode set (L = {self.L})")
        return int(matches[0])


class DatasetMeta(BaseModel):
    model_config = ConfigDict(frozen=True)

    params: OperatorParams
    noise: NoiseSpec
    profile: VolatilityProfile
    L: Tuple[int, ...]
    seed: int
    replication_id: int = 0
    format_version: int = 1


class FieldDataset(BaseModel):
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    grid: SpaceTimeGrid
    values: np.ndarray = Field(..., description="X_{t_i}(y_j), time-major")
    meta: Optional[DatasetMeta] = None

    @field_validator("values")
    @classmethod
    def freeze(cls, v: Any) -> np.ndarray:
        return _frozen_array(v)

    @model_validator(mode="after")
    def check_invariants(self) -> "FieldDataset":
        if self.values.shape != self.grid.shape:
            raise ParameterError(f"tensor shape {self.values.shape} does not match grid shape {self.grid.shape}")
        return self

    @property
    def d(self) -> int:
        return self.grid.d


class CoordinatePath(BaseModel):
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    ell: Tuple[int, ...]
    times: np.ndarray
    values: np.ndarray
    kappa_used: Optional[Tuple[float, ...]] = None

    @field_validator("times", "values", mode="before")
    @classmethod
    def freeze(cls, v: Any) -> np.ndarray:
        return _frozen_array(v)

    @model_validator(mode="after")
    def check_invariants(self) -> "CoordinatePath":
        if self.values.shape != self.times.shape or self.values.ndim != 1:
            raise ParameterError("path times and values must be 1-D arrays of equal length")
        if not np.all(np.isfinite(self.values)):
            raise ParameterError("coordinate path contains non-finite values")
        return self

    @property
    def n(self) -> int:
        return self.values.size - 1


class QuadraticVariation(BaseModel):
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    partials: np.ndarray = Field(..., description="S_k for k = 0..n, S_0 = 0")

    @field_validator("partials")
    @classmethod
    def freeze(cls, v: Any) -> np.ndarray:
        return _frozen_array(v)

    @property
    def n(self) -> int:
        return self.partials.size - 1

    @property
    def total(self) -> float:
        return float(self.partials[-1])

    @property
    def increments_sq(self) -> np.ndarray:
        return np.diff(self.partials)


class CusumStatistic(BaseModel):
    t_n: float = Field(..., ge=0.0)
    k_star: int = Field(..., ge=1, description="Smallest maximizing index")
    n: int
    beta_sq: float


class TestResult(BaseModel):
    __test__ = False

    t_n: float = Field(..., ge=0.0)
    k_star: Optional[int] = None
    p_value: float = Field(..., ge=0.0, le=1.0)
    critical_value: float
    level: float
    reject: bool


class OptimizerConfig(BaseModel):
    model_config = ConfigDict(frozen=True)

    box: Tuple[Tuple[float, float], ...] = Field(..., description="Per-coordinate (lower, upper) bounds")
    coarse_grid: int = Field(COARSE_GRID_POINTS, ge=2)
    refine_tol: float = Field(REFINE_TOL, gt=0.0)
    max_evals: int = Field(MAX_EVALS, ge=1)

    @model_validator(mode="after")
    def check_invariants(self) -> "OptimizerConfig":
        for lower, upper in self.box:
            if not (math.isfinite(lower) and math.isfinite(upper)) or lower >= upper:
                raise ConfigurationError(f"invalid box bounds ({lower}, {upper})")
        return self

    @property
    def dim(self) -> int:
        return len(self.box)


class EstimateA(BaseModel):
    kappa_hat: float
    v0_hat: float = Field(..., gt=0.0)
    objective_value: float
    evaluations: int = 0


class EstimateB(BaseModel):
    kappa_hat: float
    theta2_hat: float = Field(..., gt=0.0)
    v_hat: float = Field(..., gt=0.0)
    objective_value: float
    r: float
    evaluations: int = 0


class Estimate2D(BaseModel):
    alpha_hat: float
    kappa_hat: Tuple[float, float]
    theta2_hat: float = Field(..., gt=0.0)
    v_hat: float = Field(..., gt=0.0)
    objective_value: float
    r: float
    evaluations: int = 0


class OracleEstimate(BaseModel):
    kappa_hat: Tuple[float, ...] = Field(..., description="True kappa taken from the dataset provenance")


class EstimateRecord(BaseModel):
    estimator: str
    point: Dict[str, Any]
    objective: Optional[float] = None
    config_hash: str = ""


class ExperimentConfig(BaseModel):
    model_config = ConfigDict(frozen=True)

    name: str = "custom"
    params: OperatorParams = Field(default_factory=lambda: OperatorParams(theta0=0.0, theta1=(0.2,), theta2=0.2))
    noise: NoiseSpec = Field(default_factory=NoiseSpec)
    profiles: List[VolatilityProfile] = Field(default_factory=lambda: [VolatilityProfile.constant(1.0)], min_length=1)
    sweep_name: Optional[str] = None
    sweep_values: Optional[List[float]] = None
    N: int = Field(2000, ge=1)
    M: Tuple[int, ...] = (500,)
    L: Optional[Tuple[int, ...]] = None
    b: float = Field(0.1, gt=0.0, lt=0.5)
    m: Tuple[int, ...] = (50,)
    test_ns: List[int] = Field(default_factory=lambda: [400], min_length=1)
    ell: Optional[Tuple[int, ...]] = None
    estimator: Literal["A", "B", "oracle", "2d"] = "oracle"
    beta: Literal["total-qv", "regression"] = "total-qv"
    mode: Literal["field", "coordinate"] = "field"
    level: float = Field(0.05, gt=0.0, lt=1.0)
    replications: int = Field(200, ge=1)
    seed: int = 0
    optimizer: Optional[OptimizerConfig] = None

    @field_validator("M", "L", "m", "ell", mode="before")
    @classmethod
    def wrap_tuples(cls, v: Any) -> Any:
        return None if v is None else _as_tuple(v)

    @model_validator(mode="after")
    def check_invariants(self) -> "ExperimentConfig":
        d = self.params.d
        if len(self.M) != d or len(self.m) != d:
            raise ConfigurationError(f"grid counts M = {self.M} and m = {self.m} must have {d} entries")
        if self.L is not None and len(self.L) != d:
            raise ConfigurationError(f"truncation L = {self.L} must have {d} entries")
        if self.ell is not None and len(self.ell) != d:
            raise ConfigurationError(f"ell = {self.ell} must have {d} entries")
        if self.sweep_values is not None and len(self.sweep_values) != len(self.profiles):
            raise ConfigurationError("sweep_values must have one entry per profile")
        if any(n > self.N for n in self.test_ns):
            raise ConfigurationError(f"test grid sizes {self.test_ns} exceed N = {self.N}")
        if self.beta == "regression" and self.estimator != "B":
            raise ConfigurationError("the regression beta convention needs Methodology B")
        if self.mode == "coordinate" and self.beta != "total-qv":
            raise ConfigurationError("the coordinate fast path only supports the total-qv beta convention")
        if self.estimator == "2d" and d != 2:
            raise ConfigurationError("the 2d estimator needs a two-dimensional model")
        if self.estimator in ("A", "B") and d != 1:
            raise ConfigurationError(f"Methodology {self.estimator} needs a one-dimensional model")
        return self

    @property
    def ell_or_default(self) -> Tuple[int, ...]:
        return self.ell if self.ell is not None else (1,) * self.params.d

    @property
    def labels(self) -> List[float]:
        if self.sweep_values is not None:
            return list(self.sweep_values)
        return [float(i) for i in range(len(self.profiles))]


class ReplicationResult(BaseModel):
    replication_id: int
    profile_index: int = 0
    tests: Dict[int, TestResult] = Field(default_factory=dict)
    estimate: Optional[EstimateRecord] = None
    failed: bool = False
    error: Optional[str] = None


class PowerCell(BaseModel):
    sweep_value: float
    n: int
    rejections: int
    replications: int
    failures: int = 0

    @property
    def rate(self) -> float:
        valid = self.replications - self.failures
        return self.rejections / valid if valid > 0 else float("nan")


class PowerTable(BaseModel):
    sweep_name: Optional[str] = None
    cells: List[PowerCell] = Field(default_factory=list)

    def rate(self, sweep_value: float, n: int) -> float:
        for cell in self.cells:
            if cell.n == n and math.isclose(cell.sweep_value, sweep_value):
                return cell.rate
        raise KeyError((sweep_value, n))


class ExperimentResult(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True)

    config: ExperimentConfig
    table: PowerTable
    t_samples: Dict[Tuple[float, int], List[float]] = Field(default_factory=dict)
    failures: int = 0
    wall_time: float = 0.0
    diagnostics: Dict[str, Any] = Field(default_factory=dict)
