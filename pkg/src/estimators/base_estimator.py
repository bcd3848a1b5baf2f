import logging
from abc import ABC, abstractmethod
from typing import Any, Dict, Optional, Tuple

from pydantic import BaseModel

from ..models import EstimateRecord, FieldDataset, OptimizerConfig, ThinningPlan

logger = logging.getLogger(__name__)


class BaseEstimator(ABC):
    name: str
    description: str
    dimension: int

    def __init__(self, cfg: Optional[OptimizerConfig] = None):
        if not hasattr(self, "name") or not hasattr(self, "description") or not hasattr(self, "dimension"):
            raise ValueError("Estimator must have 'name', 'description' and 'dimension' attributes")
        self.cfg = cfg

    @abstractmethod
    def execute(self, ds: FieldDataset, plan: ThinningPlan, **kwargs: Any) -> BaseModel:
        """Fit the estimator on a dataset under the given thinning"""
        pass

    @abstractmethod
    def kappa(self, estimate: BaseModel) -> Tuple[float, ...]:
        """kappa estimate used to build the approximate coordinate process"""
        pass

    def beta_sq(self, estimate: BaseModel) -> Optional[float]:
        """Regression estimate of int sigma^2, when the estimator provides one"""
        return None

    def to_record(self, estimate: BaseModel, config_hash: str = "") -> EstimateRecord:
        point = estimate.model_dump(mode="json", exclude={"objective_value", "evaluations"})
        return EstimateRecord(
            estimator=self.name,
            point=point,
            objective=getattr(estimate, "objective_value", None),
            config_hash=config_hash,
        )

    def get_metadata(self) -> Dict[str, Any]:
        return {
            "name": self.name,
            "description": self.description,
            "dimension": self.dimension,
        }
