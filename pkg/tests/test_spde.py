import math

import numpy as np
import pytest

from src.errors import AlignmentError, ConfigurationError, ParameterError
from src.models import NoiseSpec, OperatorParams, SpaceTimeGrid, ThinningPlan, VolatilityProfile
from src.spde import (
    balance_diagnostics,
    beta_sq_truth,
    c_gamma,
    eigenfunction,
    eigenfunction_1d,
    eigenvalue,
    eigenvalues,
    gamma,
    gamma_bounds,
    integrated_variance,
    mode_set,
    snap_positions,
    thinned_grid,
    effective_r,
    time_indices,
    time_step,
    v0,
    validate_noise,
    volatility_at,
    wedge_large,
    wedge_power,
)


def test_first_eigenvalue_of_reference_operator(params_1d):
    # 0.2 pi^2 + 0.2^2 / (4 * 0.2)
    assert eigenvalue(1, params_1d) == pytest.approx(0.2 * math.pi ** 2 + 0.05, abs=1e-12)
    assert eigenvalue(1, params_1d) == pytest.approx(2.02392, abs=1e-5)


def test_two_dimensional_eigenvalue(params_2d):
    assert eigenvalue((1, 2), params_2d) == pytest.approx(0.2 * math.pi ** 2 * 5 + 0.1, abs=1e-12)


def test_vectorized_eigenvalues_match_scalar(params_2d):
    modes = mode_set((3, 4))
    expected = [eigenvalue(tuple(l), params_2d) for l in modes]
    np.testing.assert_allclose(eigenvalues(modes, params_2d), expected, rtol=1e-14)


def test_mode_set_is_row_major():
    modes = mode_set((2, 3))
    assert modes.tolist() == [[1, 1], [1, 2], [1, 3], [2, 1], [2, 2], [2, 3]]


def test_eigenvalue_rejects_zero_mode(params_1d):
    with pytest.raises(ParameterError):
        eigenvalue(0, params_1d)


def test_eigenfunctions_vanish_on_the_boundary():
    values = eigenfunction_1d(3, np.array([0.0, 1.0]), kappa=2.5)
    assert values.tolist() == [0.0, 0.0]


def test_weighted_orthonormality():
    kappa = 1.3
    x = np.linspace(0.0, 1.0, 20001)
    for p in range(1, 5):
        for q in range(1, 5):
            integrand = eigenfunction_1d(p, x, kappa) * eigenfunction_1d(q, x, kappa) * np.exp(kappa * x)
            assert np.trapezoid(integrand, x) == pytest.approx(1.0 if p == q else 0.0, abs=1e-6)


def test_discrete_orthonormality_on_the_grid():
    M, kappa = 64, -0.7
    y = np.arange(1, M) / M
    for p in range(1, 6):
        for q in range(1, 6):
            total = np.sum(eigenfunction_1d(p, y, kappa) * eigenfunction_1d(q, y, kappa) * np.exp(kappa * y)) / M
            assert abs(total - (1.0 if p == q else 0.0)) <= 10.0 / M ** 2


def test_two_dimensional_eigenfunction_is_a_product():
    value = eigenfunction((2, 1), (0.3, 0.6), (0.5, -0.5))
    expected = eigenfunction_1d(2, 0.3, 0.5) * eigenfunction_1d(1, 0.6, -0.5)
    assert value == pytest.approx(float(expected))


def test_two_dimensional_eigenfunction_point_forms():
    point = eigenfunction((2, 1), np.array([0.3, 0.6]), (0.5, -0.5))
    assert point == pytest.approx(eigenfunction((2, 1), (0.3, 0.6), (0.5, -0.5)))
    with pytest.raises(ParameterError, match="dimension"):
        eigenfunction((1, 1), 0.5, (0.0, 0.0))


def test_wedge_power_cases():
    assert wedge_power(0.5, 1.0, 2.0) == pytest.approx(0.5)
    assert wedge_power(0.5, 1.0, 1.0) == pytest.approx(-0.5 * math.log(0.5))
    assert wedge_power(0.5, 3.0, 2.0) == pytest.approx(0.25)
    assert wedge_large(4.0, 3.0, 2.0) == pytest.approx(16.0)
    with pytest.raises(ParameterError):
        wedge_power(1.5, 1.0, 1.0)


def test_noise_weights():
    params = OperatorParams(theta0=0.0, theta1=(0.2,), theta2=0.2)
    spectral = NoiseSpec(alpha=0.5, gamma_rule="spectral")
    polynomial = NoiseSpec(alpha=0.5, gamma_rule="polynomial", mu0=1.0)
    assert gamma(2, spectral, params) == pytest.approx(eigenvalue(2, params))
    assert gamma(2, polynomial, params) == pytest.approx(4 * math.pi ** 2 + 1.0)
    assert gamma(5, NoiseSpec(), params) == 1.0
    assert c_gamma(spectral, params) == 0.2
    assert c_gamma(polynomial, params) == 1.0
    c1, c2 = gamma_bounds(mode_set((10,)), polynomial, params)
    assert 0 < c1 <= c2


def test_validate_noise_bounds_alpha():
    validate_noise(NoiseSpec(), 1)
    with pytest.raises(ParameterError):
        validate_noise(NoiseSpec(), 2)
    with pytest.raises(ParameterError):
        validate_noise(NoiseSpec(alpha=0.5, gamma_rule="polynomial"), 3)


def test_cylindrical_noise_requires_alpha_zero():
    with pytest.raises(ParameterError):
        NoiseSpec(alpha=0.5, gamma_rule="cylindrical")


def test_volatility_is_right_continuous():
    profile = VolatilityProfile.single_change(0.5, 1.0, 2.0)
    assert volatility_at(0.49, profile) == 1.0
    assert volatility_at(0.5, profile) == 2.0
    assert volatility_at(1.0, profile) == 2.0
    np.testing.assert_array_equal(volatility_at(np.array([0.0, 0.75]), profile), [1.0, 2.0])
    with pytest.raises(ParameterError):
        volatility_at(1.2, profile)


def test_invalid_profiles_are_rejected():
    with pytest.raises(ParameterError):
        VolatilityProfile(change_points=(0.5,), levels=(1.0, 1.0))
    with pytest.raises(ParameterError):
        VolatilityProfile(change_points=(0.6, 0.4), levels=(1.0, 2.0, 3.0))
    with pytest.raises(ParameterError):
        VolatilityProfile(change_points=(0.5,), levels=(1.0,))


def test_integrated_variance_and_limits():
    profile = VolatilityProfile.single_change(0.5, 1.0, 2.0)
    assert integrated_variance(profile) == pytest.approx(2.5)
    assert v0(profile, 0.25) == pytest.approx(5.0)
    params = OperatorParams(theta0=0.0, theta1=(0.2,), theta2=0.2)
    assert beta_sq_truth(profile, NoiseSpec(), params) == pytest.approx(2.5)


def test_time_grid_arithmetic():
    assert time_step(10, 3) == 3
    assert time_indices(10, 3).tolist() == [0, 3, 6, 9]
    assert time_indices(8, 8).tolist() == list(range(9))
    with pytest.raises(ConfigurationError):
        time_step(10, 11)


def test_snap_positions_exact_and_strict():
    idx, disp = snap_positions(np.array([0.1, 0.5, 0.9]), 100, strict=True)
    assert idx.tolist() == [10, 50, 90]
    assert disp < 1e-9
    with pytest.raises(AlignmentError) as excinfo:
        snap_positions(np.array([0.101, 0.5]), 100, strict=True)
    assert excinfo.value.index == 0


def test_snap_positions_warns_on_small_displacement(caplog):
    idx, disp = snap_positions(np.array([0.101, 0.5]), 100)
    assert idx.tolist() == [10, 50]
    assert disp == pytest.approx(0.1)
    assert "Snapped" in caplog.text


def test_snap_positions_rejects_collapsing_points():
    with pytest.raises(AlignmentError):
        snap_positions(np.array([0.1, 0.102]), 10)


def test_thinned_grid_and_design_ratio():
    grid = SpaceTimeGrid(N=400, M=(200,))
    plan = ThinningPlan(b=0.1, m=(16,), n=400)
    indices = thinned_grid(grid, plan, strict=True)
    assert indices.space[0].tolist() == list(range(20, 181, 10))
    assert indices.time.size == 401
    r, spread = effective_r(grid, indices)
    assert r == pytest.approx(1.0)
    assert spread == pytest.approx(0.0, abs=1e-12)


def test_balance_diagnostics_summary_ratios():
    report = balance_diagnostics(100, 10_000, 10_000, m=100)
    assert report["n32_over_mN"] == pytest.approx(0.001)
    assert report["n32_over_M"] == pytest.approx(0.1)
    assert "temporal_ratio" not in report
    assert "temporal_ratio" in balance_diagnostics(100, 10_000, 10_000, rate=1e3)
