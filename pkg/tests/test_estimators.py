import math

import numpy as np
import pytest

from src.errors import ConfigurationError
from src.estimators import BaseEstimator, MethodologyA, MethodologyB, OracleEstimator, TwoDimensional, estimate_alpha
from src.estimators.increments import (
    alpha_from_energies,
    coarse_plan,
    design_r,
    double_increments,
    midpoints,
    thinned_indices,
    triple_increments,
    z_statistic,
    z_statistics,
)
from src.estimators.methodology_a import fit_methodology_a, fit_z_curve
from src.estimators.methodology_b import fit_double_increment_curves
from src.estimators.special import psi_r, psi_r_alpha
from src.estimators.two_dim import fit_triple_increment_surfaces, theta2_lower_bound
from src.models import EstimateA, EstimateB, FieldDataset, NoiseSpec, OptimizerConfig, SpaceTimeGrid, ThinningPlan, VolatilityProfile
from src.simulator import simulate_field


def test_z_statistics_on_product_field(product_field_1d, plan_1d):
    # X = i * j, so every time increment at spatial index s equals s
    z = z_statistics(product_field_1d, plan_1d)
    s = np.arange(20, 181, 10)
    np.testing.assert_allclose(z, s.astype(float) ** 2 * 20.0)
    assert z_statistic(product_field_1d, plan_1d, 0) == pytest.approx(8000.0)
    with pytest.raises(IndexError):
        z_statistic(product_field_1d, plan_1d, 17)


def test_double_increments_on_product_field(product_field_1d, plan_1d):
    assert double_increments(product_field_1d, plan_1d, 1, 1) == (10.0, 20.0)
    assert double_increments(product_field_1d, plan_1d, 400, 16) == (10.0, None)
    with pytest.raises(IndexError):
        double_increments(product_field_1d, plan_1d, 401, 1)


def test_triple_increments_on_product_field(product_field_2d):
    plan = ThinningPlan(b=0.125, m=(16, 16), n=64)
    assert triple_increments(product_field_2d, plan, 1, 1, 1) == (9.0, 18.0)
    assert triple_increments(product_field_2d, plan, 64, 16, 16) == (9.0, None)
    with pytest.raises(IndexError):
        triple_increments(product_field_2d, plan, 1, 17, 1)


def test_design_r_and_midpoints(product_field_1d, plan_1d):
    indices = thinned_indices(product_field_1d, plan_1d)
    assert design_r(product_field_1d, indices) == pytest.approx(1.0)
    with pytest.raises(ConfigurationError):
        design_r(product_field_1d, indices, r=1.5)
    np.testing.assert_allclose(midpoints(product_field_1d, indices), 0.125 + 0.05 * np.arange(16))


def test_alpha_from_constructed_ratio():
    assert alpha_from_energies(1.0, 4.0 ** 0.7) == pytest.approx(0.7)
    with pytest.raises(ConfigurationError):
        alpha_from_energies(0.0, 1.0)


def test_coarse_plan():
    plan = coarse_plan(ThinningPlan(b=0.125, m=(16, 16), n=64))
    assert plan.m == (8, 8)
    assert plan.n == 16
    with pytest.raises(ConfigurationError):
        coarse_plan(ThinningPlan(b=0.125, m=(15, 16), n=64))
    with pytest.raises(ConfigurationError):
        coarse_plan(ThinningPlan(b=0.125, m=(16, 16), n=62))


def test_estimate_alpha_returns_log_ratio(mocker):
    q = 2.5
    fine = np.full((64, 16, 16), 1.0)
    coarse = np.full((16, 8, 8), math.sqrt(q))
    mocked = mocker.patch(
        "src.estimators.two_dim.triple_increment_tensor",
        side_effect=[(fine, fine[:-1]), (coarse, coarse[:-1])],
    )
    plan = ThinningPlan(b=0.125, m=(16, 16), n=64)
    assert estimate_alpha(object(), plan) == pytest.approx(math.log(q) / math.log(4.0))
    assert mocked.call_args_list[1].args[1] == coarse_plan(plan)


def test_estimate_alpha_checks_the_second_plan():
    plan = ThinningPlan(b=0.125, m=(16, 16), n=64)
    with pytest.raises(ConfigurationError):
        estimate_alpha(object(), plan, ThinningPlan(b=0.125, m=(8, 8), n=32))


def test_methodology_a_zero_residual():
    y = np.linspace(0.1, 0.9, 21)
    z = 2.0 * np.exp(-0.8 * y) / math.sqrt(math.pi)
    estimate = fit_z_curve(z, y)
    assert estimate.kappa_hat == pytest.approx(0.8, abs=1e-6)
    assert estimate.v0_hat == pytest.approx(2.0, abs=1e-6)


def test_methodology_a_scales_with_the_field(small_field):
    ds, _ = small_field
    plan = ThinningPlan(b=0.1, m=(8,), n=200)
    scaled = FieldDataset(grid=ds.grid, values=2.0 * ds.values, meta=ds.meta)
    np.testing.assert_allclose(z_statistics(scaled, plan), 4.0 * z_statistics(ds, plan), rtol=1e-12)
    base = fit_methodology_a(ds, plan)
    rescaled = fit_methodology_a(scaled, plan)
    assert rescaled.kappa_hat == pytest.approx(base.kappa_hat, abs=1e-3)
    assert rescaled.v0_hat == pytest.approx(4.0 * base.v0_hat, rel=1e-3)


def test_methodology_a_rejects_wrong_box():
    with pytest.raises(ConfigurationError):
        fit_z_curve(np.ones(3), np.ones(3), OptimizerConfig(box=((0.0, 1.0),)))


def test_methodology_b_zero_residual():
    kappa, theta2, v, r = 0.5, 0.2, 1.5, 1.0
    ybar = np.linspace(0.125, 0.875, 16)
    stat = v * np.exp(-kappa * ybar) * psi_r(theta2, r)
    stat_tilde = v * np.exp(-kappa * ybar) * psi_r(theta2, r / math.sqrt(2.0))
    cfg = OptimizerConfig(box=((-2.0, 2.0), (0.05, 1.0), (0.1, 5.0)))
    estimate = fit_double_increment_curves(stat, stat_tilde, ybar, r, cfg)
    assert estimate.kappa_hat == pytest.approx(kappa, abs=1e-5)
    assert estimate.theta2_hat == pytest.approx(theta2, abs=1e-5)
    assert estimate.v_hat == pytest.approx(v, abs=1e-5)


def test_two_dimensional_bound_is_enforced():
    r = 1.06
    assert theta2_lower_bound(r) == pytest.approx(r * r / (-8.0 * math.log(math.sqrt(2.0) - 1.0)))
    cfg = OptimizerConfig(box=((-1.0, 1.0), (-1.0, 1.0), (0.1, 0.5), (0.5, 3.0)))
    stat = np.ones((4, 4))
    ybar = (np.linspace(0.2, 0.8, 4), np.linspace(0.2, 0.8, 4))
    with pytest.raises(ConfigurationError):
        fit_triple_increment_surfaces(stat, stat, ybar, r, 0.5, cfg)
    with pytest.raises(ConfigurationError):
        fit_triple_increment_surfaces(stat, stat, ybar, r, 2.5, cfg)


def test_two_dimensional_zero_residual():
    kappa1, kappa2, theta2, v, r, alpha = 0.4, -0.3, 0.2, 1.5, 1.06, 0.5
    cfg = OptimizerConfig(box=((-1.0, 1.0), (-1.0, 1.0), (0.16, 0.5), (0.5, 3.0)), coarse_grid=9)
    y1 = np.linspace(0.15, 0.85, 8)
    y2 = np.linspace(0.15, 0.85, 8)
    shape = v * np.exp(-kappa1 * y1)[:, None] * np.exp(-kappa2 * y2)[None, :]
    # data from the quadrature itself, the fit interpolates a spline of it
    stat = shape * psi_r_alpha(theta2, r, alpha)
    stat_tilde = shape * psi_r_alpha(theta2, r / math.sqrt(2.0), alpha)
    estimate = fit_triple_increment_surfaces(stat, stat_tilde, (y1, y2), r, alpha, cfg, gamma_rule="polynomial")
    np.testing.assert_allclose(estimate.kappa_hat, (kappa1, kappa2), atol=1e-5)
    assert estimate.theta2_hat == pytest.approx(theta2, abs=1e-5)
    assert estimate.v_hat == pytest.approx(v, abs=1e-5)


def test_methodology_a_runs_on_simulated_data(small_field):
    ds, _ = small_field
    estimate = MethodologyA().execute(ds, ThinningPlan(b=0.1, m=(8,), n=200))
    assert math.isfinite(estimate.kappa_hat)
    assert estimate.v0_hat > 0


def test_oracle_reads_provenance(small_field):
    ds, _ = small_field
    oracle = OracleEstimator()
    estimate = oracle.execute(ds, ThinningPlan(b=0.1, m=(8,), n=200))
    assert oracle.kappa(estimate) == pytest.approx((1.0,))
    assert oracle.beta_sq(estimate) is None


def test_estimator_metadata_and_records():
    b = MethodologyB()
    estimate = EstimateB(kappa_hat=0.9, theta2_hat=0.2, v_hat=1.1, objective_value=1e-9, r=1.0, evaluations=10)
    assert b.beta_sq(estimate) == 1.1
    record = b.to_record(estimate, "abc")
    assert record.estimator == "B"
    assert record.point["kappa_hat"] == 0.9
    assert "evaluations" not in record.point
    assert record.objective == 1e-9
    assert TwoDimensional().get_metadata()["dimension"] == 2


def test_estimators_must_declare_their_attributes():
    class Nameless(BaseEstimator):
        description = "missing name"
        dimension = 1

        def execute(self, ds, plan, **kwargs):
            return None

        def kappa(self, estimate):
            return ()

    with pytest.raises(ValueError):
        Nameless()


def test_fit_methodology_a_uses_thinned_points(mocker, product_field_1d, plan_1d):
    fit = mocker.patch(
        "src.estimators.methodology_a.fit_z_curve",
        return_value=EstimateA(kappa_hat=0.0, v0_hat=1.0, objective_value=0.0),
    )
    fit_methodology_a(product_field_1d, plan_1d)
    z, y = fit.call_args.args[:2]
    assert z.shape == (16,)
    np.testing.assert_allclose(y, np.arange(30, 181, 10) / 200)


@pytest.mark.slow
def test_damping_estimate_on_simulated_two_dimensional_data(params_2d):
    noise = NoiseSpec(alpha=0.5, gamma_rule="polynomial", mu0=0.0)
    grid = SpaceTimeGrid(N=2048, M=(64, 64))
    plan = ThinningPlan(b=0.125, m=(16, 16), n=2048)
    alphas = []
    for rep in range(10):
        ds, _ = simulate_field(params_2d, noise, VolatilityProfile.constant(1.0), grid, L=(64, 64), seed=41, replication_id=rep)
        alphas.append(estimate_alpha(ds, plan))
    assert 0.3 <= np.median(alphas) <= 0.7
