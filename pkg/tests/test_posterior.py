import numpy as np
import pytest
from numpy.testing import assert_allclose

from src.basis import KnotGrid, interp_matrix
from src.constraints import bounds_constraint, monotonicity_constraint, stack
from src.errors import InconsistentEtaError, InfeasibleProblemError, InvalidArgumentError
from src.kernels import gram
from src.posterior import TruncatedGaussian, back_solve, condition_on_data, truncated_target


def test_conditioning_interpolates(se_params, grid, cdf_data):
    design, y = cdf_data
    phi = interp_matrix(grid, design)
    conditional = condition_on_data(gram(se_params, grid.points()), phi, y)
    assert_allclose(phi @ conditional.mean, y, atol=1e-10)
    assert_allclose(phi @ conditional.cov, 0.0, atol=1e-10)
    assert_allclose(conditional.cov, conditional.cov.T)


def test_conditioning_at_knots_pins_values(se_params):
    grid = KnotGrid.regular(5)
    phi = interp_matrix(grid, [[0.25], [0.75]])
    conditional = condition_on_data(gram(se_params, grid.points()), phi, [0.3, -0.2])
    assert_allclose(conditional.mean[[1, 3]], [0.3, -0.2], atol=1e-10)
    assert_allclose(np.diag(conditional.cov)[[1, 3]], 0.0, atol=1e-10)
    assert np.all(np.diag(conditional.cov)[[0, 2, 4]] > 1e-3)


def test_no_observations_keeps_prior(se_params, grid):
    gamma = gram(se_params, grid.points())
    conditional = condition_on_data(gamma, np.zeros((0, grid.size)), np.zeros(0))
    assert_allclose(conditional.mean, 0.0)
    assert_allclose(conditional.cov, gamma.values)


def test_too_many_observations(se_params):
    grid = KnotGrid.regular(3)
    design = np.linspace(0, 1, 4).reshape(-1, 1)
    with pytest.raises(InvalidArgumentError):
        condition_on_data(gram(se_params, grid.points()), interp_matrix(grid, design), np.zeros(4))


def test_truncated_target_shapes(bounded_monotone_model):
    target = bounded_monotone_model.target
    system = bounded_monotone_model.system
    assert target.dim == system.n_rows
    assert_allclose(target.lower, system.lower)
    # Interpolation removes one direction per observation
    assert 0 < target.factor().rank <= system.size - bounded_monotone_model.n_obs


def test_reduced_factor_reproduces_covariance(bounded_target):
    factor = bounded_target.factor()
    assert_allclose(factor.loadings @ factor.loadings.T, bounded_target.cov, atol=1e-8)
    assert np.all(np.diff(factor.eigenvalues) <= 0)


def test_back_solve_round_trip():
    system = stack([bounds_constraint(6, 0, 1), monotonicity_constraint(6)])
    rng = np.random.default_rng(1)
    xi = rng.standard_normal((4, 6))
    assert_allclose(back_solve(system, xi @ system.matrix.T), xi, atol=1e-10)
    assert_allclose(back_solve(system, system.matrix @ xi[0]), xi[0], atol=1e-10)


def test_back_solve_rejects_eta_outside_image():
    system = stack([bounds_constraint(6, 0, 1), monotonicity_constraint(6)])
    eta = np.random.default_rng(2).standard_normal(system.n_rows)
    with pytest.raises(InconsistentEtaError) as info:
        back_solve(system, eta)
    assert info.value.residual > 0


def test_pinned_value_outside_bounds(se_params):
    grid = KnotGrid.regular(11)
    phi = interp_matrix(grid, [[0.5]])
    conditional = condition_on_data(gram(se_params, grid.points()), phi, [2.0])
    target = truncated_target(conditional, bounds_constraint(grid.size, 0.0, 1.0))
    with pytest.raises(InfeasibleProblemError) as info:
        target.whitened()
    assert info.value.certificate["row"] == 5


def test_target_validation():
    with pytest.raises(InvalidArgumentError):
        TruncatedGaussian(mean=[0.0, 0.0], cov=np.eye(3), lower=0.0, upper=1.0)
    with pytest.raises(InvalidArgumentError):
        TruncatedGaussian(mean=[0.0], cov=[[1.0]], lower=[1.0], upper=[0.0])


def test_contains(half_normal):
    assert half_normal.contains(np.array([0.3]))
    assert not half_normal.contains(np.array([-0.1]))
