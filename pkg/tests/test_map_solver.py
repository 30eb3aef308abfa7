import numpy as np
import pytest
import scipy.linalg
from numpy.testing import assert_allclose

from src.basis import KnotGrid, interp_matrix
from src.constraints import (
    bounds_constraint,
    custom_constraint,
    is_feasible,
    stack,
    vacuous_constraint,
)
from src.errors import InfeasibleProblemError, NonConvergenceError
from src.kernels import gram
from src.map_solver import MapOptions, max_margin_point, project_origin, solve_map
from src.posterior import condition_on_data


def test_max_margin_point_of_interval():
    point, margin = max_margin_point([[1.0], [-1.0]], [0.0, -1.0])
    assert_allclose(point, [0.5], atol=1e-9)
    assert margin == pytest.approx(0.5)


def test_max_margin_point_empty_polyhedron():
    with pytest.raises(InfeasibleProblemError) as info:
        max_margin_point([[1.0], [-1.0]], [1.0, 0.0])
    assert set(info.value.certificate["rows"]) == {0, 1}


def test_project_origin():
    projection = project_origin([[1.0]], [1.0])
    assert_allclose(projection.point, [1.0], atol=1e-9)
    assert projection.active == (0,)
    assert_allclose(projection.multipliers, [1.0], atol=1e-9)

    projection = project_origin([[1.0, 1.0], [1.0, 0.0]], [2.0, -5.0])
    assert_allclose(projection.point, [1.0, 1.0], atol=1e-9)
    assert projection.active == (0,)
    assert projection.kkt_residual < 1e-8


def test_project_origin_already_feasible():
    projection = project_origin([[1.0, 0.0]], [-1.0])
    assert_allclose(projection.point, [0.0, 0.0], atol=1e-9)
    assert projection.active == ()


def test_iteration_cap():
    matrix = np.array([[1.0, 0.2], [0.2, 1.0], [1.0, 1.0]])
    with pytest.raises(NonConvergenceError) as info:
        project_origin(matrix, [1.0, 1.0, 1.5], MapOptions(max_iter=1))
    assert info.value.best_iterate is not None


def test_unconstrained_map_is_conditional_mean(se_params, grid, cdf_data):
    design, y = cdf_data
    gamma = gram(se_params, grid.points())
    phi = interp_matrix(grid, design)
    result = solve_map(gamma, phi, y, vacuous_constraint(grid.size))
    assert_allclose(result.xi, condition_on_data(gamma, phi, y).mean, atol=1e-4)
    assert result.active_rows == ()


def test_constrained_map(bounded_monotone_model):
    model = bounded_monotone_model
    result = model.solve_map()
    assert_allclose(model.phi @ result.xi, model.y, atol=1e-6)
    assert is_feasible(model.system, result.xi, tol=1e-8)
    assert_allclose(result.nu, model.system.matrix @ result.xi)
    assert result.kkt_residual < 1e-5
    assert len(result.active_rows) > 0


def test_prior_only_map_beats_feasible_points(se_params):
    grid = KnotGrid.regular(8)
    gamma = gram(se_params, grid.points())
    system = bounds_constraint(grid.size, 0.5, 1.0)
    result = solve_map(gamma, np.zeros((0, grid.size)), np.zeros(0), system)
    assert is_feasible(system, result.xi, tol=1e-8)

    factor = scipy.linalg.cholesky(gamma.values, lower=True)

    def objective(xi):
        scores = scipy.linalg.solve_triangular(factor, xi, lower=True)
        return scores @ scores

    assert result.objective == pytest.approx(objective(result.xi), rel=1e-6)
    rng = np.random.default_rng(0)
    for _ in range(1000):
        candidate = rng.uniform(0.5, 1.0, grid.size)
        assert result.objective <= objective(candidate) + 1e-6


def test_data_outside_bounds_is_infeasible(se_params):
    grid = KnotGrid.regular(11)
    phi = interp_matrix(grid, [[0.5]])
    with pytest.raises(InfeasibleProblemError) as info:
        solve_map(gram(se_params, grid.points()), phi, [2.0], bounds_constraint(11, 0.0, 1.0))
    assert 5 in info.value.certificate["rows"]


def test_contradictory_rows_are_infeasible(se_params):
    system = custom_constraint([[1.0, 0.0], [1.0, 0.0]], [1.0, -np.inf], [np.inf, 0.0])
    grid = KnotGrid.regular(2)
    with pytest.raises(InfeasibleProblemError) as info:
        solve_map(gram(se_params, grid.points()), np.zeros((0, 2)), np.zeros(0), system)
    assert set(info.value.certificate["rows"]) == {0, 1}
    assert info.value.exit_code == 2


def test_result_serialises(bounded_monotone_model):
    data = bounded_monotone_model.solve_map().to_dict()
    assert set(data) == {"xi", "nu", "objective", "kkt_residual", "iterations", "active_rows"}
    assert len(data["xi"]) == bounded_monotone_model.grid.size


def test_project_origin_with_repeated_and_opposite_rows():
    # x >= 1 twice, x <= 1 and y >= 0.5: a zero-width strip in x
    matrix = np.array([[1.0, 0.0], [2.0, 0.0], [-1.0, 0.0], [0.0, 1.0], [0.0, 3.0]])
    offset = np.array([1.0, 2.0, -1.0, 0.5, 0.0])
    projection = project_origin(matrix, offset)
    assert_allclose(projection.point, [1.0, 0.5], atol=1e-7)
    assert projection.kkt_residual < 1e-6
    assert 3 in projection.active
    assert np.all(projection.multipliers >= -1e-9)


def test_map_with_data_on_the_bound_between_knots(se_params):
    # y = 1 halfway between the first two knots pins both to the upper bound
    grid = KnotGrid.regular(11)
    phi = interp_matrix(grid, [[0.05], [0.55]])
    bounds = bounds_constraint(grid.size, 0.0, 1.0)
    system = stack([bounds, bounds])
    result = solve_map(gram(se_params, grid.points()), phi, [1.0, 0.3], system)
    assert_allclose(result.xi[:2], [1.0, 1.0], atol=1e-7)
    assert is_feasible(system, result.xi, tol=1e-7)
    assert_allclose(phi @ result.xi, [1.0, 0.3], atol=1e-6)
