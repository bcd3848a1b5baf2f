import numpy as np
import pytest

from src.models import FieldDataset, NoiseSpec, OperatorParams, SpaceTimeGrid, ThinningPlan, VolatilityProfile
from src.simulator import simulate_field


@pytest.fixture
def params_1d():
    return OperatorParams(theta0=0.0, theta1=(0.2,), theta2=0.2)


@pytest.fixture
def params_2d():
    return OperatorParams(theta0=0.0, theta1=(0.2, 0.2), theta2=0.2)


@pytest.fixture
def cylindrical():
    return NoiseSpec()


@pytest.fixture
def constant_profile():
    return VolatilityProfile.constant(1.0)


@pytest.fixture
def small_field(params_1d, cylindrical, constant_profile):
    """Simulated field on a 200 x 100 grid with 20 modes, plus its coefficient paths"""
    grid = SpaceTimeGrid(N=200, M=(100,))
    return simulate_field(params_1d, cylindrical, constant_profile, grid, L=(20,), seed=7)


@pytest.fixture
def product_field_1d():
    """X(t_i, y_j) = i * j on N = 400, M = 200"""
    grid = SpaceTimeGrid(N=400, M=(200,))
    i, j = np.meshgrid(np.arange(401), np.arange(201), indexing="ij")
    return FieldDataset(grid=grid, values=(i * j).astype(float))


@pytest.fixture
def product_field_2d():
    """X(t_i, y_j, y_k) = i * j * k on N = 64, M = (64, 64)"""
    grid = SpaceTimeGrid(N=64, M=(64, 64))
    i, j, k = np.meshgrid(np.arange(65), np.arange(65), np.arange(65), indexing="ij")
    return FieldDataset(grid=grid, values=(i * j * k).astype(float))


@pytest.fixture
def plan_1d():
    # spacing 0.05 = 10 cells on M = 200, sqrt(1/400) = 0.05, so r = 1
    return ThinningPlan(b=0.1, m=(16,), n=400)
