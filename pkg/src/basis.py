"""
Knot grids and hat basis functions on [0, 1]^d (d = 1 or 2).

In 2D the knot values are ordered with the first input varying fastest:
xi = (xi_{1,1}, ..., xi_{1,m1}, ..., xi_{m2,1}, ..., xi_{m2,m1}),
so knot (j1, j2) (0-based) sits at index j2 * m1 + j1.
"""

import logging
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from src.errors import InvalidArgumentError

logger = logging.getLogger(__name__)

DOMAIN_TOLERANCE = 1e-12

DEFAULT_KNOTS_1D = 100
DEFAULT_KNOTS_2D = (30, 30)


@dataclass(frozen=True, eq=False)
class KnotGrid:
    """Per-dimension strictly increasing knot vectors spanning [0, 1]"""

    knots: tuple[np.ndarray, ...]

    def __post_init__(self):
        axes = tuple(np.asarray(k, dtype=float).copy() for k in self.knots)
        if len(axes) not in (1, 2):
            raise InvalidArgumentError(f"grids must be 1D or 2D, got {len(axes)} axes")
        for axis, knots in enumerate(axes):
            if knots.ndim != 1 or knots.size < 2:
                raise InvalidArgumentError(f"axis {axis} needs at least 2 knots")
            if knots[0] != 0.0 or knots[-1] != 1.0:
                raise InvalidArgumentError(
                    f"axis {axis} knots must start at 0 and end at 1, "
                    f"got [{knots[0]}, {knots[-1]}]"
                )
            if np.any(np.diff(knots) <= 0):
                raise InvalidArgumentError(f"axis {axis} knots are not strictly increasing")
            knots.setflags(write=False)
        object.__setattr__(self, "knots", axes)

    @classmethod
    def regular(cls, counts: int | Sequence[int]) -> "KnotGrid":
        """Equally spaced knots t_j = j / (m - 1) on every axis."""
        counts = [int(c) for c in np.atleast_1d(counts)]
        if any(c < 2 for c in counts):
            raise InvalidArgumentError(f"each axis needs at least 2 knots, got {counts}")
        return cls(tuple(np.linspace(0.0, 1.0, c) for c in counts))

    @property
    def dim(self) -> int:
        return len(self.knots)

    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(k.size for k in self.knots)

    @property
    def size(self) -> int:
        return int(np.prod(self.shape))

    def points(self) -> np.ndarray:
        """Knot locations as an (M, d) array in xi ordering."""
        if self.dim == 1:
            return self.knots[0].reshape(-1, 1)
        grid_1, grid_2 = np.meshgrid(self.knots[0], self.knots[1])
        return np.column_stack([grid_1.ravel(), grid_2.ravel()])

    def to_dict(self) -> dict:
        return {"knots": [k.tolist() for k in self.knots]}

    @classmethod
    def from_dict(cls, data: dict) -> "KnotGrid":
        return cls(tuple(np.asarray(k, dtype=float) for k in data["knots"]))


@dataclass(frozen=True, eq=False)
class InputScaler:
    """Affine map between the user's input box and [0, 1]^d"""

    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lower = np.atleast_1d(np.asarray(self.lower, dtype=float))
        upper = np.atleast_1d(np.asarray(self.upper, dtype=float))
        if lower.shape != upper.shape or np.any(upper <= lower):
            raise InvalidArgumentError(f"invalid input box [{lower}, {upper}]")
        object.__setattr__(self, "lower", lower)
        object.__setattr__(self, "upper", upper)

    @classmethod
    def unit(cls, dim: int) -> "InputScaler":
        return cls(np.zeros(dim), np.ones(dim))

    @classmethod
    def fit(cls, points: np.ndarray) -> "InputScaler":
        """Box spanned by the given points (degenerate axes fall back to [x, x + 1])."""
        points = np.asarray(points, dtype=float)
        lower = points.min(axis=0)
        upper = points.max(axis=0)
        upper = np.where(upper > lower, upper, lower + 1.0)
        return cls(lower, upper)

    def to_unit(self, points) -> np.ndarray:
        points = np.asarray(points, dtype=float).reshape(-1, self.lower.size)
        return (points - self.lower) / (self.upper - self.lower)

    def from_unit(self, points) -> np.ndarray:
        points = np.asarray(points, dtype=float).reshape(-1, self.lower.size)
        return self.lower + points * (self.upper - self.lower)

    def to_dict(self) -> dict:
        return {"lower": self.lower.tolist(), "upper": self.upper.tolist()}

    @classmethod
    def from_dict(cls, data: dict) -> "InputScaler":
        return cls(np.asarray(data["lower"]), np.asarray(data["upper"]))


def _hat_widths(knots: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Left and right support widths of every hat (boundary hats reuse their inner spacing)."""
    spacing = np.diff(knots)
    left = np.concatenate([[spacing[0]], spacing])
    right = np.concatenate([spacing, [spacing[-1]]])
    return left, right


def _axis_matrix(knots: np.ndarray, x: np.ndarray) -> np.ndarray:
    """(n, m) matrix of phi_j(x_i) for one axis."""
    left, right = _hat_widths(knots)
    offset = x[:, None] - knots[None, :]
    width = np.where(offset < 0, left[None, :], right[None, :])
    return np.clip(1.0 - np.abs(offset) / width, 0.0, None)


def hat_eval(grid: KnotGrid, j: int, x: float, axis: int = 0) -> float:
    """
    Hat function phi_j(x) on one axis of the grid.

    With unequal spacing the hat is linear on each adjacent interval.
    """
    if not 0 <= axis < grid.dim:
        raise InvalidArgumentError(f"axis {axis} out of range for a {grid.dim}D grid")
    knots = grid.knots[axis]
    if not 0 <= j < knots.size:
        raise InvalidArgumentError(f"knot index {j} out of range [0, {knots.size})")
    if not np.isfinite(x):
        raise InvalidArgumentError(f"x must be finite, got {x}")
    return float(_axis_matrix(knots, np.array([float(x)]))[0, j])


def _as_design(grid: KnotGrid, design) -> np.ndarray:
    design = np.asarray(design, dtype=float)
    if design.ndim == 1:
        design = design.reshape(-1, 1) if grid.dim == 1 else design.reshape(-1, grid.dim)
    if design.ndim != 2 or design.shape[1] != grid.dim:
        raise InvalidArgumentError(
            f"design has shape {design.shape}, expected (n, {grid.dim})"
        )
    outside = (design < -DOMAIN_TOLERANCE) | (design > 1.0 + DOMAIN_TOLERANCE)
    if np.any(outside):
        row = int(np.argwhere(outside.any(axis=1))[0, 0])
        raise InvalidArgumentError(
            f"design point {design[row].tolist()} lies outside [0, 1]^{grid.dim}; "
            "rescale inputs first"
        )
    return np.clip(design, 0.0, 1.0)


def interp_matrix(grid: KnotGrid, design) -> np.ndarray:
    """
    Interpolation matrix Phi with Phi[i, j] = phi_j(x_i).

    In 2D row i holds phi_{j1}(x_1^i) * phi_{j2}(x_2^i) at column j2 * m1 + j1.
    """
    design = _as_design(grid, design)
    n = design.shape[0]
    if grid.dim == 1:
        return _axis_matrix(grid.knots[0], design[:, 0])
    first = _axis_matrix(grid.knots[0], design[:, 0])
    second = _axis_matrix(grid.knots[1], design[:, 1])
    return np.einsum("ni,nj->nij", second, first).reshape(n, grid.size)


def evaluate(grid: KnotGrid, xi: np.ndarray, points) -> np.ndarray:
    """
    Finite-dimensional function sum_j xi_j phi_j at many points.

    `xi` may be a single coefficient vector (M,) or a stack of draws (S, M);
    the result has shape (n,) or (S, n) accordingly.
    """
    xi = np.asarray(xi, dtype=float)
    if xi.shape[-1] != grid.size:
        raise InvalidArgumentError(
            f"coefficient vector has length {xi.shape[-1]}, grid has {grid.size} knots"
        )
    phi = interp_matrix(grid, points)
    return xi @ phi.T


def finite_dim_eval(grid: KnotGrid, xi, x) -> float:
    """Y_m(x) = sum_j xi_j phi_j(x) at a single point."""
    xi = np.asarray(xi, dtype=float)
    if xi.ndim != 1:
        raise InvalidArgumentError("finite_dim_eval takes a single coefficient vector")
    point = np.atleast_1d(np.asarray(x, dtype=float)).reshape(1, grid.dim)
    return float(evaluate(grid, xi, point)[0])
