import numpy as np
import pytest
from numpy.testing import assert_allclose

from src.basis import KnotGrid, evaluate
from src.constraints import (
    ConstraintKind,
    IntervalPiece,
    LinearConstraintSystem,
    RowKind,
    RowLabel,
    bounds_constraint,
    convexity_constraint,
    custom_constraint,
    interval_constraints,
    is_feasible,
    monotonicity_2d,
    monotonicity_constraint,
    pad_to_full_rank,
    reduced_bounded_monotone,
    stack,
    vacuous_constraint,
)
from src.errors import InvalidArgumentError, InvalidSystemError


def test_bounds():
    system = bounds_constraint(4, 0.0, 1.0)
    assert system.n_rows == 4
    assert is_feasible(system, [0.0, 0.5, 1.0, 1.0])
    assert not is_feasible(system, [0.0, 0.5, 1.1, 1.0])
    assert_allclose(system.violations([-1.0, 0.5, 2.0, 0.0]), [0, 2])


def test_monotone():
    system = monotonicity_constraint(5)
    assert system.n_rows == 5 and system.rank == 5
    assert is_feasible(system, [-3.0, -1.0, -1.0, 2.0, 8.0])
    assert not is_feasible(system, [0.0, 1.0, 0.5, 2.0, 3.0])
    assert system.labels[0].kind is RowKind.PADDING


def test_convex_regular_and_unequal():
    knots = np.linspace(0, 1, 6)
    assert is_feasible(convexity_constraint(6), knots**2)
    assert not is_feasible(convexity_constraint(6), -(knots**2))

    uneven = np.array([0.0, 0.5, 0.9, 1.0])
    system = convexity_constraint(4, uneven)
    assert is_feasible(system, uneven**2)
    # Plain second differences would reject this convex vector
    assert not is_feasible(convexity_constraint(4), uneven**2)


def test_reduced_bounded_monotone():
    system = reduced_bounded_monotone(6, 0.0, 1.0)
    assert system.n_rows == 7
    assert is_feasible(system, np.linspace(0, 1, 6))
    assert not is_feasible(system, np.linspace(0, 1.2, 6))
    assert not is_feasible(system, np.linspace(1, 0, 6))


def test_stack_is_intersection():
    system = stack([bounds_constraint(4, 0.0, 1.0), monotonicity_constraint(4)])
    assert system.n_rows == 8
    assert is_feasible(system, [0.1, 0.2, 0.3, 0.9])
    assert not is_feasible(system, [0.1, 0.3, 0.2, 0.9])
    assert not is_feasible(system, [0.1, 0.2, 0.3, 1.9])


def test_stack_size_mismatch():
    with pytest.raises(InvalidArgumentError):
        stack([bounds_constraint(4, 0, 1), bounds_constraint(5, 0, 1)])
    with pytest.raises(InvalidArgumentError):
        stack([])


def test_custom_padding():
    system = custom_constraint([[1.0, -1.0, 0.0]], 0.0, None)
    assert system.n_rows == 3
    assert system.rank == 3
    assert [label.kind for label in system.labels] == [
        RowKind.CUSTOM,
        RowKind.PADDING,
        RowKind.PADDING,
    ]
    assert np.isneginf(system.lower[1:]).all()
    with pytest.raises(InvalidSystemError):
        custom_constraint([[1.0, -1.0, 0.0]], 0.0, None, pad=False)


def test_pad_to_full_rank_keeps_full_systems():
    system = bounds_constraint(3, 0, 1)
    assert pad_to_full_rank(system) is system


def test_invalid_systems():
    label = (RowLabel(RowKind.CUSTOM),)
    with pytest.raises(InvalidSystemError):
        LinearConstraintSystem(np.ones((1, 2)), [1.0], [0.0], label)
    with pytest.raises(InvalidSystemError):
        LinearConstraintSystem(np.ones((1, 2)), [0.0, 1.0], [1.0], label)
    with pytest.raises(InvalidSystemError):
        LinearConstraintSystem(np.ones((1, 2)), [0.0], [1.0], label).require_full_rank()
    with pytest.raises(InvalidArgumentError):
        bounds_constraint(3, 1.0, 0.0)


def test_vacuous():
    system = vacuous_constraint(4)
    assert system.is_vacuous()
    assert system.active_rows().size == 0
    assert not bounds_constraint(4, 0, 1).is_vacuous()


def test_dict_round_trip_and_digest():
    system = stack([reduced_bounded_monotone(5, -1.0, 1.0), convexity_constraint(5)])
    data = system.to_dict()
    assert data["upper"][0] is None
    again = LinearConstraintSystem.from_dict(data)
    assert again.digest() == system.digest()
    assert again.labels == system.labels
    data["upper"][0] = 5.0
    with pytest.raises(InvalidSystemError):
        LinearConstraintSystem.from_dict(data)


def test_label_text_round_trip():
    label = RowLabel(RowKind.MONOTONE, 2)
    assert str(label) == "monotone[2]"
    assert RowLabel.parse(str(label)) == label
    assert RowLabel.parse("bound") == RowLabel(RowKind.BOUND)


def test_monotonicity_2d():
    grid = KnotGrid.regular([3, 3])
    system = monotonicity_2d(grid)
    assert system.n_rows == 13
    points = grid.points()
    assert is_feasible(system, points[:, 0] + 2 * points[:, 1])
    assert not is_feasible(system, points[:, 0] - points[:, 1])

    along_x1 = monotonicity_2d(grid, axes=[0])
    assert is_feasible(along_x1, points[:, 0] - points[:, 1])
    with pytest.raises(InvalidArgumentError):
        monotonicity_2d(KnotGrid.regular(4))


def test_interval_constraints():
    grid = KnotGrid.regular(11)
    pieces = [
        IntervalPiece(0.0, 0.4, (ConstraintKind.BOUNDS, ConstraintKind.MONOTONE), 0.0, 1.0),
        IntervalPiece(0.4, 1.0, "bounds", 0.0, 1.0),
    ]
    system = interval_constraints(grid, pieces)
    assert system.n_rows == 5 + 4 + 7
    assert {label.interval for label in system.labels} == {0, 1}

    rising_then_falling = np.concatenate([np.linspace(0, 1, 5), np.linspace(0.9, 0.3, 6)])
    assert is_feasible(system, rising_then_falling)
    falling = np.linspace(1, 0, 11)
    assert not is_feasible(system, falling)


def test_whole_domain_piece_matches_bounds_builder():
    grid = KnotGrid.regular(11)
    system = interval_constraints(grid, [IntervalPiece(0.0, 1.0, "bounds", -1.0, 2.0)])
    reference = bounds_constraint(grid.size, -1.0, 2.0)
    assert system.labels == reference.labels
    assert system.digest() == reference.digest()
    assert str(system.labels[0]) == "bound"


def test_interval_pieces_validation():
    grid = KnotGrid.regular(11)
    with pytest.raises(InvalidArgumentError):
        interval_constraints(
            grid, [IntervalPiece(0.0, 0.5, "bounds", 0, 1), IntervalPiece(0.4, 1.0, "bounds", 0, 1)]
        )
    with pytest.raises(InvalidArgumentError):
        IntervalPiece(0.5, 0.5, "bounds")
    with pytest.raises(InvalidArgumentError):
        interval_constraints(grid, [IntervalPiece(0.01, 0.05, "bounds", 0, 1)])


def test_knot_feasibility_matches_dense_evaluation():
    """Constraints on knot values are equivalent to constraints on the whole curve."""
    rng = np.random.default_rng(3)
    grid = KnotGrid.regular(6)
    dense = np.union1d(np.linspace(0, 1, 1000), grid.knots[0])
    bounds = bounds_constraint(6, -1.0, 1.0)
    monotone = monotonicity_constraint(6)
    convex = convexity_constraint(6)
    for trial in range(300):
        xi = rng.uniform(-1.3, 1.3, 6)
        if trial % 3 == 0:
            xi = np.sort(xi)
        elif trial % 3 == 1:
            xi = np.linspace(0, 1, 6) ** 2 + 0.05 * rng.standard_normal(6)
        curve = evaluate(grid, xi, dense)
        steps = np.diff(curve)
        slopes = np.diff(xi)
        assert is_feasible(bounds, xi) == bool(np.all(np.abs(curve) <= 1.0 + 1e-9))
        assert is_feasible(monotone, xi) == bool(np.all(steps >= -1e-12))
        assert is_feasible(convex, xi) == bool(np.all(np.diff(slopes) >= -1e-9))
