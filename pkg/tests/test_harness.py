import numpy as np
import orjson
import pytest
import yaml

import src.harness as harness
from src.change_point import ks_distance
from src.constants import SITUATION_2_SIGMA2, SITUATION_3_TAU, STUDY_CRITICAL_VALUE
from src.coordinates import approx_coordinate, exact_coordinate, partial_qv
from src.errors import ConfigurationError, ExperimentError
from src.harness import (
    ExperimentRunner,
    aggregate,
    apply_assignments,
    config_hash,
    dataset_hash,
    load_config,
    run_experiment,
    run_replication,
    situation,
)
from src.models import (
    Estimate2D,
    EstimateB,
    ExperimentConfig,
    NoiseSpec,
    OperatorParams,
    ReplicationResult,
    SpaceTimeGrid,
    ThinningPlan,
    VolatilityProfile,
)
from src.simulator import simulate_field


@pytest.fixture
def coordinate_cfg():
    return ExperimentConfig(
        name="null",
        mode="coordinate",
        N=200,
        M=(100,),
        test_ns=[50, 100],
        replications=4,
        seed=11,
    )


@pytest.fixture
def field_cfg():
    return ExperimentConfig(
        name="field",
        mode="field",
        N=200,
        M=(100,),
        L=(20,),
        b=0.1,
        m=(10,),
        test_ns=[50, 100],
        replications=2,
        seed=5,
    )


def test_coordinate_replication(coordinate_cfg):
    result = run_replication(coordinate_cfg, 0)
    assert not result.failed
    assert sorted(result.tests) == [50, 100]
    assert result.estimate is None
    for test in result.tests.values():
        assert 0.0 <= test.p_value <= 1.0


def test_failed_replication_is_recorded(mocker, coordinate_cfg):
    mocker.patch("src.harness.simulate_coordinate", side_effect=RuntimeError("boom"))
    result = ExperimentRunner().run_replication(coordinate_cfg, 3)
    assert result.failed
    assert result.replication_id == 3
    assert result.error == "RuntimeError: boom"


def test_too_many_failures_abort_the_experiment(mocker, coordinate_cfg):
    mocker.patch("src.harness.simulate_coordinate", side_effect=RuntimeError("boom"))
    with pytest.raises(ExperimentError):
        ExperimentRunner().run_experiment(coordinate_cfg)


def test_aggregate_counts_failures_under_the_threshold(coordinate_cfg):
    cfg = coordinate_cfg.model_copy(update={"replications": 40})
    results = [run_replication(cfg, rep) for rep in range(39)]
    results.append(ReplicationResult(replication_id=39, failed=True, error="ConvergenceError: budget"))
    result = aggregate(cfg, results)
    assert result.failures == 1
    cell = result.table.cells[0]
    assert cell.failures == 1
    assert cell.rate == pytest.approx(cell.rejections / 39)
    assert len(result.t_samples[(0.0, 50)]) == 39
    assert result.diagnostics["errors"] == ["ConvergenceError: budget"]


def test_experiment_is_deterministic(coordinate_cfg):
    a = run_experiment(coordinate_cfg)
    b = run_experiment(coordinate_cfg)
    assert a.t_samples == b.t_samples
    assert a.table == b.table


def test_worker_count_does_not_change_results(coordinate_cfg):
    serial = run_experiment(coordinate_cfg, workers=1)
    parallel = run_experiment(coordinate_cfg, workers=2)
    assert serial.t_samples == parallel.t_samples


def test_field_replication_with_oracle(field_cfg):
    result = run_replication(field_cfg, 0)
    assert not result.failed, result.error
    assert sorted(result.tests) == [50, 100]
    assert result.estimate.estimator == "oracle"
    assert result.estimate.config_hash == config_hash(field_cfg)


def test_field_experiment_reports_design_diagnostics(field_cfg):
    result = run_experiment(field_cfg)
    assert result.failures == 0
    assert result.diagnostics["max_snap_displacement"] >= 0.0
    assert set(result.diagnostics["balance"]) == {"50", "100"}


def test_regression_beta_comes_from_methodology_b(mocker, field_cfg):
    estimate = EstimateB(kappa_hat=1.0, theta2_hat=0.2, v_hat=2.5, objective_value=0.0, r=1.13, evaluations=1)
    mocker.patch("src.estimators.methodology_b.fit_methodology_b", return_value=estimate)
    spy = mocker.spy(harness, "run_test")
    cfg = field_cfg.model_copy(update={"estimator": "B", "beta": "regression"})
    result = run_replication(cfg, 0)
    assert not result.failed, result.error
    assert result.estimate.estimator == "B"
    assert [call.kwargs["beta_sq"] for call in spy.call_args_list] == [2.5, 2.5]


def test_two_dimensional_field_replication(mocker):
    estimate = Estimate2D(alpha_hat=0.5, kappa_hat=(0.2, 0.2), theta2_hat=0.2, v_hat=1.0, objective_value=0.0, r=1.0)
    alpha = mocker.patch("src.estimators.two_dim.estimate_alpha", return_value=0.5)
    fit = mocker.patch("src.estimators.two_dim.fit_2d", return_value=estimate)
    cfg = ExperimentConfig(
        name="field-2d",
        params=OperatorParams(theta0=0.0, theta1=(0.2, 0.2), theta2=0.2),
        noise=NoiseSpec(alpha=0.5, gamma_rule="polynomial"),
        N=64,
        M=(32, 32),
        L=(8, 8),
        b=0.125,
        m=(8, 8),
        test_ns=[16, 32],
        estimator="2d",
        replications=1,
    )
    result = run_replication(cfg, 0)
    assert not result.failed, result.error
    assert sorted(result.tests) == [16, 32]
    assert result.estimate.estimator == "2d"
    assert fit.call_args.args[2] == alpha.return_value


def test_regression_beta_needs_methodology_b():
    with pytest.raises(ConfigurationError):
        ExperimentConfig(estimator="A", beta="regression")
    with pytest.raises(ConfigurationError):
        ExperimentConfig(mode="coordinate", estimator="B", beta="regression")


def test_config_hash_tracks_changes(coordinate_cfg):
    assert config_hash(coordinate_cfg) == config_hash(coordinate_cfg.model_copy())
    assert config_hash(coordinate_cfg) != config_hash(coordinate_cfg.model_copy(update={"seed": 12}))


def test_load_config_from_yaml_and_json(tmp_path, coordinate_cfg):
    data = coordinate_cfg.model_dump(mode="json")
    yaml_path = tmp_path / "cfg.yaml"
    yaml_path.write_text(yaml.safe_dump(data))
    json_path = tmp_path / "cfg.json"
    json_path.write_bytes(orjson.dumps(data))
    assert load_config(yaml_path) == coordinate_cfg
    assert load_config(json_path) == coordinate_cfg
    overridden = load_config(json_path, seed=99, replications=None)
    assert overridden.seed == 99
    assert overridden.replications == coordinate_cfg.replications


def test_situation_presets():
    one = situation(1)
    assert one.profiles == [VolatilityProfile.constant(1.0)]
    two = situation(2, replications=10)
    assert two.sweep_values == list(SITUATION_2_SIGMA2)
    assert all(p.change_points == (0.5,) for p in two.profiles)
    three = situation(3, N=400, test_ns=[100])
    assert three.sweep_name == "tau"
    assert [p.change_points[0] for p in three.profiles] == list(SITUATION_3_TAU)
    assert three.N == 400
    with pytest.raises(ConfigurationError):
        situation(4)


def test_assignments_reach_nested_fields(coordinate_cfg):
    cfg = apply_assignments(
        coordinate_cfg,
        ["params.theta2=0.3", "noise.gamma_rule=spectral", "noise.alpha=0.5", "ell=[2]", "test_ns=[20, 40]", "name=override"],
    )
    assert cfg.params.theta2 == 0.3
    assert cfg.noise.gamma_rule == "spectral"
    assert cfg.noise.alpha == 0.5
    assert cfg.ell == (2,)
    assert cfg.test_ns == [20, 40]
    assert cfg.name == "override"
    assert cfg.seed == coordinate_cfg.seed


def test_assignments_are_checked(coordinate_cfg):
    for bad in (["seed"], ["nosuch=1"], ["params.nosuch=1"], ["seed.value=1"], ["N=abc"], ["beta=regression"]):
        with pytest.raises(ConfigurationError):
            apply_assignments(coordinate_cfg, bad)


def test_dataset_hash_follows_provenance(small_field, params_1d, cylindrical, constant_profile):
    ds, _ = small_field
    again, _ = simulate_field(params_1d, cylindrical, constant_profile, ds.grid, L=(20,), seed=7)
    other, _ = simulate_field(params_1d, cylindrical, constant_profile, ds.grid, L=(20,), seed=8)
    assert dataset_hash(ds) == dataset_hash(again)
    assert dataset_hash(ds) != dataset_hash(other)
    assert len(dataset_hash(ds)) == 64


@pytest.mark.slow
def test_null_size_and_kolmogorov_fit():
    cfg = situation(1, replications=1000, N=2000, test_ns=[400], seed=2024)
    result = run_experiment(cfg)
    assert 0.032 <= result.table.rate(1.0, 400) <= 0.071
    assert ks_distance(result.t_samples[(1.0, 400)]) <= 0.06


@pytest.mark.slow
def test_power_against_a_single_change():
    cfg = situation(2, replications=500, N=2000, test_ns=[400], seed=7)
    result = run_experiment(cfg)
    assert result.table.rate(1.8, 400) >= 0.99
    assert result.table.rate(1.5, 400) >= 0.97


def _cusum_drift(tau, sigma2, n):
    """Deterministic limit of T_n under a single change from sigma = 1 with beta^2 = S_n"""
    integrated = tau + sigma2 ** 2 * (1.0 - tau)
    return np.sqrt(n / 2.0) * tau * (1.0 - tau) * (sigma2 ** 2 - 1.0) / integrated


@pytest.mark.slow
def test_power_grows_with_the_change_time():
    cfg = situation(3, replications=500, N=2000, test_ns=[400], seed=8)
    result = run_experiment(cfg)
    rates = [result.table.rate(tau, 400) for tau in (0.1, 0.3, 0.5)]
    assert rates[0] <= rates[1] <= rates[2]
    # an early change leaves the drift under the critical value, so power stays moderate
    assert _cusum_drift(0.1, 1.8, 400) < STUDY_CRITICAL_VALUE
    assert 0.2 <= rates[0] < 0.5
    assert _cusum_drift(0.3, 1.8, 400) > STUDY_CRITICAL_VALUE
    assert rates[1] >= 0.95


def test_statistic_grows_with_n_under_a_change():
    cfg = ExperimentConfig(
        name="alternative",
        mode="coordinate",
        profiles=[VolatilityProfile.single_change(0.5, 1.0, 1.8)],
        N=2000,
        M=(500,),
        test_ns=[100, 400],
        replications=50,
        seed=17,
    )
    result = run_experiment(cfg)
    assert np.median(result.t_samples[(0.0, 400)]) > np.median(result.t_samples[(0.0, 100)])
    assert result.table.rate(0.0, 400) >= result.table.rate(0.0, 100)


@pytest.mark.slow
@pytest.mark.parametrize("estimator", ["A", "B"])
def test_kappa_error_shrinks_with_more_time_steps(estimator):
    errors = {}
    for N in (2000, 8000):
        cfg = ExperimentConfig(
            name="consistency",
            mode="field",
            estimator=estimator,
            N=N,
            M=(500,),
            L=(1000,),
            b=0.1,
            m=(50,),
            test_ns=[100],
            replications=50,
            seed=31,
        )
        kappas = []
        for rep in range(cfg.replications):
            result = run_replication(cfg, rep)
            assert not result.failed, result.error
            kappas.append(result.estimate.point["kappa_hat"])
        errors[N] = np.median(np.abs(np.array(kappas) - 1.0))
    assert errors[8000] < errors[2000]


@pytest.mark.slow
def test_oracle_reconstruction_keeps_the_partial_qv(params_1d, cylindrical, constant_profile):
    grid = SpaceTimeGrid(N=2000, M=(500,))
    plan = ThinningPlan(b=0.1, m=(50,), n=100)
    gaps, truth, reconstructed = [], [], []
    for rep in range(20):
        ds, coeffs = simulate_field(params_1d, cylindrical, constant_profile, grid, L=(2000,), seed=3, replication_id=rep)
        approx = partial_qv(approx_coordinate(ds, (1,), params_1d.kappa, plan)).total
        exact = partial_qv(exact_coordinate(coeffs, (1,), plan)).total
        gaps.append(np.sqrt(plan.n) * abs(approx - exact))
        truth.append(exact)
        reconstructed.append(approx)
    assert np.median(gaps) <= 0.05 * np.median(truth)
    # beta^2 = S_n of the reconstructed path estimates the integrated variance
    assert np.mean(reconstructed) == pytest.approx(1.0, rel=0.1)
