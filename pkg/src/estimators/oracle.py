from typing import Any, Tuple

from ..errors import ConfigurationError
from ..models import FieldDataset, OracleEstimate, ThinningPlan
from .base_estimator import BaseEstimator


class OracleEstimator(BaseEstimator):
    name = "oracle"
    description = "Uses the true kappa recorded in the dataset provenance"
    dimension = 0

    def execute(self, ds: FieldDataset, plan: ThinningPlan, **kwargs: Any) -> OracleEstimate:
        params = kwargs.get("params") or (ds.meta.params if ds.meta is not None else None)
        if params is None:
            raise ConfigurationError("the oracle estimator needs operator parameters or dataset provenance")
        return OracleEstimate(kappa_hat=params.kappa)

    def kappa(self, estimate: OracleEstimate) -> Tuple[float, ...]:
        return tuple(estimate.kappa_hat)
