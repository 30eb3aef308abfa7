import numpy as np
import pytest
from numpy.testing import assert_allclose

from src.basis import InputScaler, KnotGrid, evaluate, finite_dim_eval, hat_eval, interp_matrix
from src.errors import InvalidArgumentError


def test_regular_grid():
    grid = KnotGrid.regular(5)
    assert_allclose(grid.knots[0], [0, 0.25, 0.5, 0.75, 1])
    assert grid.size == 5 and grid.dim == 1

    lattice = KnotGrid.regular([3, 4])
    assert lattice.shape == (3, 4)
    assert lattice.size == 12


def test_points_order_x1_fastest():
    points = KnotGrid.regular([3, 2]).points()
    assert_allclose(points[:4], [[0, 0], [0.5, 0], [1, 0], [0, 1]])


@pytest.mark.parametrize("counts", [7, [4, 5]])
def test_interp_at_knots_is_identity(counts):
    grid = KnotGrid.regular(counts)
    assert_allclose(interp_matrix(grid, grid.points()), np.eye(grid.size), atol=1e-14)


def test_partition_of_unity():
    rng = np.random.default_rng(0)
    grid = KnotGrid.regular([6, 4])
    phi = interp_matrix(grid, rng.random((50, 2)))
    assert_allclose(phi.sum(axis=1), 1.0)
    assert np.all(phi >= 0)


def test_unequal_knots():
    grid = KnotGrid((np.array([0.0, 0.1, 1.0]),))
    assert hat_eval(grid, 1, 0.05) == pytest.approx(0.5)
    assert hat_eval(grid, 1, 0.55) == pytest.approx(0.5)
    assert hat_eval(grid, 0, 0.5) == 0.0


def test_evaluate_many_draws():
    grid = KnotGrid.regular(5)
    xi = np.array([[0, 1, 2, 3, 4], [4, 3, 2, 1, 0]], dtype=float)
    values = evaluate(grid, xi, [0.125, 1.0])
    assert values.shape == (2, 2)
    assert_allclose(values, [[0.5, 4.0], [3.5, 0.0]])
    assert finite_dim_eval(grid, xi[0], 0.375) == pytest.approx(1.5)


def test_design_outside_domain():
    grid = KnotGrid.regular(5)
    with pytest.raises(InvalidArgumentError):
        interp_matrix(grid, [[1.5]])
    with pytest.raises(InvalidArgumentError):
        evaluate(grid, np.zeros(4), [0.5])


def test_invalid_knots():
    with pytest.raises(InvalidArgumentError):
        KnotGrid((np.array([0.1, 0.5, 1.0]),))
    with pytest.raises(InvalidArgumentError):
        KnotGrid((np.array([0.0, 0.6, 0.5, 1.0]),))
    with pytest.raises(InvalidArgumentError):
        KnotGrid.regular(1)


def test_grid_dict_round_trip():
    grid = KnotGrid((np.array([0.0, 0.3, 1.0]), np.array([0.0, 1.0])))
    again = KnotGrid.from_dict(grid.to_dict())
    for mine, theirs in zip(grid.knots, again.knots):
        assert_allclose(mine, theirs)


def test_scaler():
    scaler = InputScaler(np.array([-2.0, 10.0]), np.array([2.0, 20.0]))
    points = np.array([[-2.0, 10.0], [0.0, 15.0], [2.0, 20.0]])
    unit = scaler.to_unit(points)
    assert_allclose(unit, [[0, 0], [0.5, 0.5], [1, 1]])
    assert_allclose(scaler.from_unit(unit), points)
    assert_allclose(InputScaler.from_dict(scaler.to_dict()).upper, [2.0, 20.0])
    with pytest.raises(InvalidArgumentError):
        InputScaler(np.array([1.0]), np.array([1.0]))


def test_scaler_fit_degenerate_axis():
    scaler = InputScaler.fit(np.array([[1.0, 5.0], [3.0, 5.0]]))
    assert_allclose(scaler.lower, [1.0, 5.0])
    assert_allclose(scaler.upper, [3.0, 6.0])
