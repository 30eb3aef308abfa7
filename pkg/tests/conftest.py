import numpy as np
import pytest

from src.basis import KnotGrid
from src.constraints import bounds_constraint, monotonicity_constraint, stack
from src.experiments import CDF_DESIGN, normal_cdf_profile
from src.kernels import KernelFamily, KernelParams, gram
from src.model import ConstrainedGPModel
from src.posterior import TruncatedGaussian


@pytest.fixture
def se_params():
    return KernelParams(KernelFamily.SE, 1.0, (0.2,))


@pytest.fixture
def grid():
    return KnotGrid.regular(20)


@pytest.fixture
def cdf_data():
    design = np.asarray(CDF_DESIGN).reshape(-1, 1)
    return design, normal_cdf_profile(design[:, 0])


@pytest.fixture
def bounded_monotone_model(se_params, grid, cdf_data):
    system = stack([bounds_constraint(grid.size, 0.0, 1.0), monotonicity_constraint(grid.size)])
    design, y = cdf_data
    return ConstrainedGPModel(se_params, grid, system, design, y)


@pytest.fixture
def half_normal():
    """N(0, 1) restricted to [0, inf); mean sqrt(2 / pi)."""
    return TruncatedGaussian(mean=[0.0], cov=[[1.0]], lower=[0.0], upper=[np.inf])


@pytest.fixture
def bounded_target(se_params):
    """Prior on 8 knot values restricted to [-1, 1]."""
    grid = KnotGrid.regular(8)
    return TruncatedGaussian(
        mean=np.zeros(grid.size),
        cov=gram(se_params, grid.points()).values,
        lower=np.full(grid.size, -1.0),
        upper=np.full(grid.size, 1.0),
    )
