import hashlib
import logging
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Any, Dict, List, Mapping, Optional, Sequence, Tuple, Union

import orjson
import yaml
from pydantic import BaseModel, ValidationError
from tqdm import tqdm

from config import SPDE_WORKERS
from .constants import (
    DESK_SCALE,
    MAX_FAILURE_RATIO,
    STUDY_LEVEL,
    STUDY_TEST_NS,
    STUDY_THETA,
    SITUATION_2_SIGMA2,
    SITUATION_3_TAU,
)
from .coordinates import approx_coordinate, partial_qv, thin_path
from .errors import ConfigurationError, ExperimentError
from .estimators import BaseEstimator, MethodologyA, MethodologyB, OracleEstimator, TwoDimensional
from .models import (
    ExperimentConfig,
    ExperimentResult,
    FieldDataset,
    OperatorParams,
    PowerCell,
    PowerTable,
    ReplicationResult,
    SpaceTimeGrid,
    ThinningPlan,
    VolatilityProfile,
)
from .change_point import run_test
from .simulator import simulate_coordinate, simulate_field
from .spde import balance_diagnostics, thinned_grid

logger = logging.getLogger(__name__)


def config_hash(cfg: Union[BaseModel, Mapping[str, Any]]) -> str:
    """sha256 of the canonical (sorted-key) JSON form of the config"""
    data = cfg.model_dump(mode="json") if isinstance(cfg, BaseModel) else cfg
    payload = orjson.dumps(data, option=orjson.OPT_SORT_KEYS)
    return hashlib.sha256(payload).hexdigest()


def dataset_hash(ds: FieldDataset) -> str:
    return config_hash(
        {
            "grid": ds.grid.model_dump(mode="json"),
            "meta": ds.meta.model_dump(mode="json") if ds.meta is not None else None,
        }
    )


def apply_assignments(cfg: ExperimentConfig, assignments: Sequence[str]) -> ExperimentConfig:
    """Apply 'key=value' overrides; dotted keys reach nested fields, values are parsed as YAML"""
    data = cfg.model_dump(mode="json")
    for item in assignments:
        key, sep, raw = item.partition("=")
        key = key.strip()
        if not sep or not key:
            raise ConfigurationError(f"expected 'key=value', got '{item}'")
        try:
            value = yaml.safe_load(raw)
        except yaml.YAMLError as e:
            raise ConfigurationError(f"unreadable value in '{item}' ({e})") from e
        *parents, leaf = key.split(".")
        target = data
        for part in parents:
            if not isinstance(target.get(part), dict):
                raise ConfigurationError(f"'{key}' does not name a nested config field")
            target = target[part]
        if leaf not in target:
            raise ConfigurationError(f"unknown config field '{key}'")
        target[leaf] = value
        logger.debug(f"Config override {key} = {value!r}")
    try:
        return ExperimentConfig.model_validate(data)
    except ValidationError as e:
        raise ConfigurationError(f"invalid config override: {e}") from e


def load_config(path: Union[str, Path], **overrides: Any) -> ExperimentConfig:
    """Read an ExperimentConfig from JSON or YAML; non-None overrides replace file values"""
    path = Path(path)
    text = path.read_bytes()
    data = yaml.safe_load(text) if path.suffix.lower() in (".yaml", ".yml") else orjson.loads(text)
    data = dict(data or {})
    data.update({k: v for k, v in overrides.items() if v is not None})
    return ExperimentConfig.model_validate(data)


def situation(
    index: int,
    replications: int = DESK_SCALE["replications"],
    mode: str = "coordinate",
    estimator: str = "oracle",
    beta: str = "total-qv",
    test_ns: Sequence[int] = STUDY_TEST_NS,
    seed: int = 0,
    **overrides: Any,
) -> ExperimentConfig:
    """Situation 1: sigma = 1. Situation 2: tau = 0.5, sigma2 swept. Situation 3: sigma2 = 1.8, tau swept."""
    theta0, theta1, theta2 = STUDY_THETA
    if index == 1:
        profiles = [VolatilityProfile.constant(1.0)]
        sweep_name, sweep_values = "sigma", [1.0]
    elif index == 2:
        profiles = [VolatilityProfile.single_change(0.5, 1.0, s) for s in SITUATION_2_SIGMA2]
        sweep_name, sweep_values = "sigma2", list(SITUATION_2_SIGMA2)
    elif index == 3:
        profiles = [VolatilityProfile.single_change(t, 1.0, 1.8) for t in SITUATION_3_TAU]
        sweep_name, sweep_values = "tau", list(SITUATION_3_TAU)
    else:
        raise ConfigurationError(f"situations are numbered 1 to 3, got {index}")
    fields: Dict[str, Any] = {
        "name": f"situation-{index}",
        "params": OperatorParams(theta0=theta0, theta1=(theta1,), theta2=theta2),
        "profiles": profiles,
        "sweep_name": sweep_name,
        "sweep_values": sweep_values,
        "N": DESK_SCALE["N"],
        "M": (DESK_SCALE["M"],),
        "L": (DESK_SCALE["L"],),
        "b": DESK_SCALE["b"],
        "m": (DESK_SCALE["m"],),
        "test_ns": list(test_ns),
        "estimator": estimator,
        "beta": beta,
        "mode": mode,
        "level": STUDY_LEVEL,
        "replications": replications,
        "seed": seed,
    }
    fields.update(overrides)
    return ExperimentConfig(**fields)


class ExperimentRunner:
    def __init__(self):
        self.estimators: Dict[str, BaseEstimator] = {}
        self.register_estimator(OracleEstimator())
        self.register_estimator(MethodologyA())
        self.register_estimator(MethodologyB())
        self.register_estimator(TwoDimensional())

    def register_estimator(self, estimator: BaseEstimator) -> None:
        self.estimators[estimator.name] = estimator
        logger.debug(f"Registered estimator: {estimator.name}")

    def run_replication(self, cfg: ExperimentConfig, replication_id: int, profile_index: int = 0) -> ReplicationResult:
        """simulate -> estimate kappa -> x^_ell -> partial QV -> T_n -> decision, once per test grid size.

        Any failure is recorded on the result; the batch never aborts.
        """
        try:
            profile = cfg.profiles[profile_index]
            ell = cfg.ell_or_default
            if cfg.mode == "coordinate":
                path = simulate_coordinate(cfg.params, cfg.noise, profile, cfg.N, ell, cfg.seed, replication_id)
                tests = {n: run_test(partial_qv(thin_path(path, cfg.N, n)), cfg.level) for n in cfg.test_ns}
                return ReplicationResult(replication_id=replication_id, profile_index=profile_index, tests=tests)

            grid = SpaceTimeGrid(N=cfg.N, M=cfg.M)
            ds, _ = simulate_field(cfg.params, cfg.noise, profile, grid, L=cfg.L, seed=cfg.seed, replication_id=replication_id)
            plan = ThinningPlan(b=cfg.b, m=cfg.m, n=cfg.N)
            if cfg.estimator not in self.estimators:
                raise ConfigurationError(f"unknown estimator '{cfg.estimator}'; registered: {', '.join(self.estimators)}")
            estimator = self.estimators[cfg.estimator]
            estimate = estimator.execute(ds, plan, cfg=cfg.optimizer, params=cfg.params)
            kappa_hat = estimator.kappa(estimate)
            beta_sq = estimator.beta_sq(estimate) if cfg.beta == "regression" else None
            tests = {}
            for n in cfg.test_ns:
                qv = partial_qv(approx_coordinate(ds, ell, kappa_hat, plan.with_n(n)))
                tests[n] = run_test(qv, cfg.level, beta_sq=beta_sq)
            return ReplicationResult(
                replication_id=replication_id,
                profile_index=profile_index,
                tests=tests,
                estimate=estimator.to_record(estimate, config_hash(cfg)),
            )
        except Exception as e:
            logger.error(f"Replication {replication_id} (profile {profile_index}) failed: {str(e)}", exc_info=True)
            return ReplicationResult(
                replication_id=replication_id,
                profile_index=profile_index,
                failed=True,
                error=f"{type(e).__name__}: {e}",
            )

    def run_experiment(
        self,
        cfg: ExperimentConfig,
        workers: Optional[int] = None,
        progress: bool = False,
    ) -> Tuple[ExperimentResult, List[ReplicationResult]]:
        workers = SPDE_WORKERS if workers is None else workers
        tasks = [(p, rep) for p in range(len(cfg.profiles)) for rep in range(cfg.replications)]
        logger.info(f"Running experiment '{cfg.name}': {len(cfg.profiles)} profiles x {cfg.replications} replications on {workers} worker(s)")
        start = time.perf_counter()

        if workers <= 1:
            results = [self.run_replication(cfg, rep, p) for p, rep in tqdm(tasks, disable=not progress, desc=cfg.name)]
        else:
            with ProcessPoolExecutor(max_workers=workers) as pool:
                chunksize = max(1, len(tasks) // (8 * workers))
                mapped = pool.map(_run_task, [(cfg, rep, p) for p, rep in tasks], chunksize=chunksize)
                results = list(tqdm(mapped, total=len(tasks), disable=not progress, desc=cfg.name))

        results.sort(key=lambda r: (r.profile_index, r.replication_id))
        wall_time = time.perf_counter() - start
        result = aggregate(cfg, results, wall_time)
        logger.info(f"Experiment '{cfg.name}' finished in {wall_time:.1f}s with {result.failures} failed replication(s)")
        return result, results


_default_runner: Optional[ExperimentRunner] = None


def _runner() -> ExperimentRunner:
    global _default_runner
    if _default_runner is None:
        _default_runner = ExperimentRunner()
    return _default_runner


def _run_task(task: Tuple[ExperimentConfig, int, int]) -> ReplicationResult:
    cfg, replication_id, profile_index = task
    return _runner().run_replication(cfg, replication_id, profile_index)


def run_replication(cfg: ExperimentConfig, replication_id: int, profile_index: int = 0) -> ReplicationResult:
    return _runner().run_replication(cfg, replication_id, profile_index)


def run_experiment(cfg: ExperimentConfig, workers: Optional[int] = None, progress: bool = False) -> ExperimentResult:
    result, _ = _runner().run_experiment(cfg, workers=workers, progress=progress)
    return result


def design_diagnostics(cfg: ExperimentConfig) -> Dict[str, Any]:
    diagnostics: Dict[str, Any] = {"config_hash": config_hash(cfg)}
    if cfg.mode == "field":
        indices = thinned_grid(SpaceTimeGrid(N=cfg.N, M=cfg.M), ThinningPlan(b=cfg.b, m=cfg.m, n=cfg.N))
        diagnostics["max_snap_displacement"] = indices.max_displacement
        diagnostics["balance"] = {
            str(n): balance_diagnostics(n, cfg.N, min(cfg.M), alpha=cfg.noise.alpha, d=cfg.params.d, m=cfg.m[0])
            for n in cfg.test_ns
        }
        logger.info(f"Design balance for '{cfg.name}': {diagnostics['balance']}")
    return diagnostics


def aggregate(cfg: ExperimentConfig, results: Sequence[ReplicationResult], wall_time: float = 0.0) -> ExperimentResult:
    """Reduce replication results into rejection rates and T_n samples, in (profile, replication) order"""
    labels = cfg.labels
    cells: List[PowerCell] = []
    samples: Dict[Tuple[float, int], List[float]] = {}
    failures_by_profile: Dict[str, int] = {}
    errors: List[str] = []
    for p, label in enumerate(labels):
        batch = sorted((r for r in results if r.profile_index == p), key=lambda r: r.replication_id)
        failed = [r for r in batch if r.failed]
        failures_by_profile[str(label)] = len(failed)
        errors.extend(r.error for r in failed[:3] if r.error)
        if len(failed) > MAX_FAILURE_RATIO * cfg.replications:
            raise ExperimentError(
                f"{len(failed)} of {cfg.replications} replications failed for {cfg.sweep_name or 'profile'} = {label}",
                failures=len(failed),
                replications=cfg.replications,
            )
        for n in cfg.test_ns:
            ok = [r.tests[n] for r in batch if not r.failed]
            cells.append(
                PowerCell(
                    sweep_value=label,
                    n=n,
                    rejections=sum(t.reject for t in ok),
                    replications=cfg.replications,
                    failures=len(failed),
                )
            )
            samples[(label, n)] = [t.t_n for t in ok]
    diagnostics = design_diagnostics(cfg)
    diagnostics["failures_by_profile"] = failures_by_profile
    if errors:
        diagnostics["errors"] = errors
    return ExperimentResult(
        config=cfg,
        table=PowerTable(sweep_name=cfg.sweep_name, cells=cells),
        t_samples=samples,
        failures=sum(failures_by_profile.values()),
        wall_time=wall_time,
        diagnostics=diagnostics,
    )
