"""
Linear inequality systems l <= Lambda xi <= u on the knot values.

Builders cover boundedness, monotonicity and convexity, their stacking, the
reduced bounded+monotone encoding and interval-wise activation. Every public
builder returns a system with rank(Lambda) = M; selection rows with infinite
bounds (label `padding`) restore the rank when the natural rows do not.
"""

import hashlib
import logging
from dataclasses import dataclass
from enum import Enum
from typing import NamedTuple, Sequence

import numpy as np

from src.basis import KnotGrid
from src.errors import InvalidArgumentError, InvalidSystemError

logger = logging.getLogger(__name__)

RANK_RELATIVE_TOLERANCE = 1e-8
DEFAULT_FEASIBILITY_TOL = 1e-9
KNOT_MATCH_TOLERANCE = 1e-12


class RowKind(str, Enum):
    BOUND = "bound"
    MONOTONE = "monotone"
    CONVEX = "convex"
    CUSTOM = "custom"
    PADDING = "padding"


class ConstraintKind(str, Enum):
    """Constraint families that can be activated on a sub-interval"""

    BOUNDS = "bounds"
    MONOTONE = "monotone"
    CONVEX = "convex"


class RowLabel(NamedTuple):
    kind: RowKind
    interval: int | None = None

    def __str__(self) -> str:
        if self.interval is None:
            return self.kind.value
        return f"{self.kind.value}[{self.interval}]"

    @classmethod
    def parse(cls, text: str) -> "RowLabel":
        if text.endswith("]") and "[" in text:
            kind, interval = text[:-1].split("[", 1)
            return cls(RowKind(kind), int(interval))
        return cls(RowKind(text))


def numerical_rank(matrix: np.ndarray) -> int:
    """Rank with threshold 1e-8 times the largest singular value."""
    matrix = np.asarray(matrix, dtype=float)
    if matrix.size == 0:
        return 0
    singular = np.linalg.svd(matrix, compute_uv=False)
    if singular[0] == 0:
        return 0
    return int(np.sum(singular > RANK_RELATIVE_TOLERANCE * singular[0]))


@dataclass(frozen=True, eq=False)
class LinearConstraintSystem:
    """
    Triple (Lambda, l, u) with one provenance label per row.

    Bounds are explicit: l may hold -inf and u may hold +inf. Construction
    checks shapes and l <= u; the rank condition is checked by the builders
    through `require_full_rank`.
    """

    matrix: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    labels: tuple[RowLabel, ...]

    def __post_init__(self):
        matrix = np.atleast_2d(np.asarray(self.matrix, dtype=float)).copy()
        lower = np.atleast_1d(np.asarray(self.lower, dtype=float)).copy()
        upper = np.atleast_1d(np.asarray(self.upper, dtype=float)).copy()
        labels = tuple(
            label if isinstance(label, RowLabel) else RowLabel.parse(str(label))
            for label in self.labels
        )
        q = matrix.shape[0]
        if lower.shape != (q,) or upper.shape != (q,) or len(labels) != q:
            raise InvalidSystemError(
                f"inconsistent system: Lambda has {q} rows, "
                f"bounds {lower.shape}/{upper.shape}, {len(labels)} labels"
            )
        if not np.all(np.isfinite(matrix)):
            raise InvalidSystemError("Lambda must be finite")
        if np.any(np.isnan(lower)) or np.any(np.isnan(upper)):
            raise InvalidSystemError("bounds must not be NaN")
        if np.any(lower == np.inf) or np.any(upper == -np.inf):
            raise InvalidSystemError("lower bounds cannot be +inf nor upper bounds -inf")
        if np.any(lower > upper):
            row = int(np.argmax(lower > upper))
            raise InvalidSystemError(
                f"row {row} ({labels[row]}) has lower bound {lower[row]} > upper {upper[row]}"
            )
        for array in (matrix, lower, upper):
            array.setflags(write=False)
        object.__setattr__(self, "matrix", matrix)
        object.__setattr__(self, "lower", lower)
        object.__setattr__(self, "upper", upper)
        object.__setattr__(self, "labels", labels)

    @property
    def n_rows(self) -> int:
        return self.matrix.shape[0]

    @property
    def size(self) -> int:
        return self.matrix.shape[1]

    @property
    def rank(self) -> int:
        return numerical_rank(self.matrix)

    def require_full_rank(self) -> "LinearConstraintSystem":
        if self.n_rows < self.size:
            raise InvalidSystemError(
                f"system has q = {self.n_rows} rows for M = {self.size} knot values"
            )
        rank = self.rank
        if rank < self.size:
            raise InvalidSystemError(f"rank(Lambda) = {rank} < M = {self.size}")
        return self

    def is_vacuous(self) -> bool:
        return bool(np.all(np.isneginf(self.lower)) and np.all(np.isposinf(self.upper)))

    def active_rows(self) -> np.ndarray:
        """Indices of rows with at least one finite bound."""
        return np.flatnonzero(np.isfinite(self.lower) | np.isfinite(self.upper))

    def violations(self, xi, tol: float = DEFAULT_FEASIBILITY_TOL) -> np.ndarray:
        """Indices of rows violated by `xi` beyond `tol`."""
        values = self.matrix @ self._check_vector(xi)
        return np.flatnonzero((values < self.lower - tol) | (values > self.upper + tol))

    def digest(self) -> str:
        """SHA-256 of (Lambda, l, u), stable across platforms."""
        sha = hashlib.sha256()
        sha.update(np.asarray(self.matrix.shape, dtype="<i8").tobytes())
        for array in (self.matrix, self.lower, self.upper):
            sha.update(np.ascontiguousarray(array, dtype="<f8").tobytes())
        return sha.hexdigest()

    def to_dict(self) -> dict:
        return {
            "matrix": self.matrix.tolist(),
            "lower": [None if np.isneginf(v) else float(v) for v in self.lower],
            "upper": [None if np.isposinf(v) else float(v) for v in self.upper],
            "labels": [str(label) for label in self.labels],
            "digest": self.digest(),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "LinearConstraintSystem":
        lower = [-np.inf if v is None else v for v in data["lower"]]
        upper = [np.inf if v is None else v for v in data["upper"]]
        system = cls(np.asarray(data["matrix"]), lower, upper, tuple(data["labels"]))
        if "digest" in data and data["digest"] != system.digest():
            raise InvalidSystemError("constraint system digest does not match its content")
        return system

    def _check_vector(self, xi) -> np.ndarray:
        xi = np.asarray(xi, dtype=float)
        if xi.shape != (self.size,):
            raise InvalidArgumentError(
                f"vector has shape {xi.shape}, system acts on {self.size} knot values"
            )
        return xi


def is_feasible(
    system: LinearConstraintSystem, xi, tol: float = DEFAULT_FEASIBILITY_TOL
) -> bool:
    """True iff l_k - tol <= (Lambda xi)_k <= u_k + tol for every row."""
    return system.violations(xi, tol).size == 0


def _check_bounds(lower: float, upper: float):
    if np.isnan(lower) or np.isnan(upper):
        raise InvalidArgumentError("bounds must not be NaN")
    if lower > upper:
        raise InvalidArgumentError(f"lower bound {lower} exceeds upper bound {upper}")


def _selection_rows(size: int, indices: Sequence[int]) -> np.ndarray:
    rows = np.zeros((len(indices), size))
    rows[np.arange(len(indices)), list(indices)] = 1.0
    return rows


def _difference_rows(size: int, indices: Sequence[int]) -> np.ndarray:
    """Rows xi_{i_k} - xi_{i_{k-1}} for consecutive entries of `indices`."""
    indices = list(indices)
    rows = np.zeros((len(indices) - 1, size))
    for row, (previous, current) in enumerate(zip(indices[:-1], indices[1:])):
        rows[row, previous] = -1.0
        rows[row, current] = 1.0
    return rows


def _slope_difference_rows(
    size: int, indices: Sequence[int], locations: np.ndarray | None
) -> np.ndarray:
    """
    Convexity rows over consecutive index triples.

    With `locations` None the rows are plain second differences; otherwise
    they are differences of consecutive slopes, which stays correct with
    unequal knot spacing.
    """
    indices = list(indices)
    rows = np.zeros((len(indices) - 2, size))
    for row in range(len(indices) - 2):
        a, b, c = indices[row : row + 3]
        if locations is None:
            rows[row, [a, b, c]] = (1.0, -2.0, 1.0)
        else:
            left = 1.0 / (locations[b] - locations[a])
            right = 1.0 / (locations[c] - locations[b])
            rows[row, a] = left
            rows[row, b] = -left - right
            rows[row, c] = right
    return rows


def pad_to_full_rank(
    system: LinearConstraintSystem, interval: int | None = None
) -> LinearConstraintSystem:
    """
    Append selection rows e_j with bounds (-inf, +inf) until rank(Lambda) = M.

    Candidates are tried in index order and kept when they enlarge the row
    space, so the padding is the first-index greedy completion.
    """
    size = system.size
    _, singular, vt = np.linalg.svd(system.matrix, full_matrices=False)
    keep = (
        singular > RANK_RELATIVE_TOLERANCE * singular[0]
        if singular.size and singular[0] > 0
        else np.zeros(singular.shape, dtype=bool)
    )
    basis = list(vt[keep])
    added = []
    for j in range(size):
        if len(basis) >= size:
            break
        residual = np.zeros(size)
        residual[j] = 1.0
        for vector in basis:
            residual -= (vector @ residual) * vector
        norm = np.linalg.norm(residual)
        if norm > RANK_RELATIVE_TOLERANCE:
            basis.append(residual / norm)
            added.append(j)
    if not added:
        return system
    logger.debug(f"Padding constraint system with {len(added)} selection rows")
    padding = RowLabel(RowKind.PADDING, interval)
    return LinearConstraintSystem(
        np.vstack([system.matrix, _selection_rows(size, added)]),
        np.concatenate([system.lower, np.full(len(added), -np.inf)]),
        np.concatenate([system.upper, np.full(len(added), np.inf)]),
        system.labels + (padding,) * len(added),
    )


def vacuous_constraint(size: int) -> LinearConstraintSystem:
    """Identity rows with infinite bounds: the unconstrained model."""
    if size < 1:
        raise InvalidArgumentError(f"size must be positive, got {size}")
    return LinearConstraintSystem(
        np.eye(size),
        np.full(size, -np.inf),
        np.full(size, np.inf),
        (RowLabel(RowKind.PADDING),) * size,
    )


def bounds_constraint(size: int, lower: float, upper: float) -> LinearConstraintSystem:
    """lower <= xi_j <= upper for every knot value (Lambda = I)."""
    if size < 1:
        raise InvalidArgumentError(f"size must be positive, got {size}")
    _check_bounds(lower, upper)
    return LinearConstraintSystem(
        np.eye(size),
        np.full(size, float(lower)),
        np.full(size, float(upper)),
        (RowLabel(RowKind.BOUND),) * size,
    ).require_full_rank()


def monotonicity_constraint(size: int) -> LinearConstraintSystem:
    """
    Non-decreasing knot values: a free selection row for xi_1, then
    0 <= xi_j - xi_{j-1} for j = 2..M.
    """
    if size < 2:
        raise InvalidArgumentError(f"monotonicity needs at least 2 knots, got {size}")
    matrix = np.vstack([_selection_rows(size, [0]), _difference_rows(size, range(size))])
    lower = np.concatenate([[-np.inf], np.zeros(size - 1)])
    labels = (RowLabel(RowKind.PADDING),) + (RowLabel(RowKind.MONOTONE),) * (size - 1)
    return LinearConstraintSystem(
        matrix, lower, np.full(size, np.inf), labels
    ).require_full_rank()


def convexity_constraint(size: int, knots=None) -> LinearConstraintSystem:
    """
    Convex knot values: free selection rows for xi_1 and xi_2, then
    nonnegative second differences (slope differences for unequal knots).
    """
    if size < 3:
        raise InvalidArgumentError(f"convexity needs at least 3 knots, got {size}")
    locations = None
    if knots is not None:
        locations = np.asarray(knots, dtype=float)
        if locations.shape != (size,) or np.any(np.diff(locations) <= 0):
            raise InvalidArgumentError("knots must be strictly increasing with one per value")
    matrix = np.vstack(
        [_selection_rows(size, [0, 1]), _slope_difference_rows(size, range(size), locations)]
    )
    lower = np.concatenate([[-np.inf, -np.inf], np.zeros(size - 2)])
    labels = (RowLabel(RowKind.PADDING),) * 2 + (RowLabel(RowKind.CONVEX),) * (size - 2)
    return LinearConstraintSystem(
        matrix, lower, np.full(size, np.inf), labels
    ).require_full_rank()


def reduced_bounded_monotone(size: int, lower: float, upper: float) -> LinearConstraintSystem:
    """
    Bounded and non-decreasing in q = M + 1 rows: lower <= xi_1,
    the M - 1 monotone rows, and xi_M <= upper.
    """
    if size < 2:
        raise InvalidArgumentError(f"monotonicity needs at least 2 knots, got {size}")
    _check_bounds(lower, upper)
    matrix = np.vstack(
        [
            _selection_rows(size, [0]),
            _difference_rows(size, range(size)),
            _selection_rows(size, [size - 1]),
        ]
    )
    lower_bounds = np.concatenate([[lower], np.zeros(size - 1), [-np.inf]])
    upper_bounds = np.concatenate([[np.inf], np.full(size - 1, np.inf), [upper]])
    labels = (
        (RowLabel(RowKind.BOUND),)
        + (RowLabel(RowKind.MONOTONE),) * (size - 1)
        + (RowLabel(RowKind.BOUND),)
    )
    return LinearConstraintSystem(
        matrix, lower_bounds, upper_bounds, labels
    ).require_full_rank()


def custom_constraint(matrix, lower, upper, pad: bool = True) -> LinearConstraintSystem:
    """
    Arbitrary user system labelled `custom`.

    `lower`/`upper` may be scalars or per-row vectors; None stands for an
    infinite bound. Rank-deficient systems are padded unless `pad` is False.
    """
    matrix = np.atleast_2d(np.asarray(matrix, dtype=float))
    q = matrix.shape[0]
    lower = np.broadcast_to(
        np.asarray(-np.inf if lower is None else lower, dtype=float), (q,)
    )
    upper = np.broadcast_to(np.asarray(np.inf if upper is None else upper, dtype=float), (q,))
    system = LinearConstraintSystem(matrix, lower, upper, (RowLabel(RowKind.CUSTOM),) * q)
    if pad:
        system = pad_to_full_rank(system)
    return system.require_full_rank()


def stack(systems: Sequence[LinearConstraintSystem]) -> LinearConstraintSystem:
    """Concatenate rows in order; the feasible set is the intersection."""
    systems = list(systems)
    if not systems:
        raise InvalidArgumentError("stack needs at least one system")
    sizes = {system.size for system in systems}
    if len(sizes) != 1:
        raise InvalidArgumentError(f"systems act on different sizes: {sorted(sizes)}")
    stacked = LinearConstraintSystem(
        np.vstack([s.matrix for s in systems]),
        np.concatenate([s.lower for s in systems]),
        np.concatenate([s.upper for s in systems]),
        sum((s.labels for s in systems), ()),
    )
    return stacked.require_full_rank()


def monotonicity_2d(grid: KnotGrid, axes: Sequence[int] = (0, 1)) -> LinearConstraintSystem:
    """
    Non-decreasing along the given axes of a 2D knot lattice.

    One difference row per pair of neighbouring knots on every line of the
    lattice parallel to each axis, then rank-padded.
    """
    if grid.dim != 2:
        raise InvalidArgumentError("monotonicity_2d needs a 2D grid")
    axes = sorted(set(int(a) for a in axes))
    if not axes or any(a not in (0, 1) for a in axes):
        raise InvalidArgumentError(f"axes must be a nonempty subset of (0, 1), got {axes}")
    m1, m2 = grid.shape
    index = np.arange(grid.size).reshape(m2, m1)
    blocks = []
    for axis in axes:
        lines = index if axis == 0 else index.T
        blocks.extend(_difference_rows(grid.size, line) for line in lines)
    matrix = np.vstack(blocks)
    q = matrix.shape[0]
    system = LinearConstraintSystem(
        matrix, np.zeros(q), np.full(q, np.inf), (RowLabel(RowKind.MONOTONE),) * q
    )
    return pad_to_full_rank(system).require_full_rank()


@dataclass(frozen=True)
class IntervalPiece:
    """Constraint families switched on over [start, end]"""

    start: float
    end: float
    kinds: tuple[ConstraintKind, ...]
    lower: float = -np.inf
    upper: float = np.inf

    def __post_init__(self):
        kinds = self.kinds
        if isinstance(kinds, (str, ConstraintKind)):
            kinds = (kinds,)
        object.__setattr__(self, "kinds", tuple(ConstraintKind(k) for k in kinds))
        if not self.start < self.end:
            raise InvalidArgumentError(f"empty interval [{self.start}, {self.end}]")
        if not self.kinds:
            raise InvalidArgumentError("interval piece needs at least one constraint kind")
        _check_bounds(self.lower, self.upper)


def interval_constraints(
    grid: KnotGrid, pieces: Sequence[IntervalPiece]
) -> LinearConstraintSystem:
    """
    Interval-wise constraints on a 1D grid.

    Each piece applies its families to the knots inside its closed interval;
    rows carry the piece index as interval id. The stacked rows are
    rank-padded with selection rows for the uncovered knots.
    """
    if grid.dim != 1:
        raise InvalidArgumentError("interval constraints are defined on 1D grids")
    pieces = list(pieces)
    if not pieces:
        raise InvalidArgumentError("interval_constraints needs at least one piece")
    ordered = sorted(enumerate(pieces), key=lambda item: item[1].start)
    for (_, previous), (_, current) in zip(ordered[:-1], ordered[1:]):
        if current.start < previous.end:
            raise InvalidArgumentError(
                f"intervals [{previous.start}, {previous.end}] and "
                f"[{current.start}, {current.end}] overlap"
            )

    knots = grid.knots[0]
    size = grid.size
    matrices, lowers, uppers, labels = [], [], [], []
    for index, piece in enumerate(pieces):
        inside = np.flatnonzero(
            (knots >= piece.start - KNOT_MATCH_TOLERANCE)
            & (knots <= piece.end + KNOT_MATCH_TOLERANCE)
        )
        # A lone piece over every knot is labelled like the whole-domain builders
        interval = None if len(pieces) == 1 and inside.size == size else index
        if inside.size == 0:
            raise InvalidArgumentError(
                f"interval [{piece.start}, {piece.end}] contains no knot"
            )
        for kind in piece.kinds:
            if kind is ConstraintKind.BOUNDS:
                rows = _selection_rows(size, inside)
                row_lower, row_upper = piece.lower, piece.upper
                row_kind = RowKind.BOUND
            elif kind is ConstraintKind.MONOTONE:
                if inside.size < 2:
                    raise InvalidArgumentError(
                        f"monotonicity on [{piece.start}, {piece.end}] needs 2 knots"
                    )
                rows = _difference_rows(size, inside)
                row_lower, row_upper = 0.0, np.inf
                row_kind = RowKind.MONOTONE
            else:
                if inside.size < 3:
                    raise InvalidArgumentError(
                        f"convexity on [{piece.start}, {piece.end}] needs 3 knots"
                    )
                rows = _slope_difference_rows(size, inside, knots)
                row_lower, row_upper = 0.0, np.inf
                row_kind = RowKind.CONVEX
            matrices.append(rows)
            lowers.append(np.full(rows.shape[0], row_lower))
            uppers.append(np.full(rows.shape[0], row_upper))
            labels.extend([RowLabel(row_kind, interval)] * rows.shape[0])

    system = LinearConstraintSystem(
        np.vstack(matrices), np.concatenate(lowers), np.concatenate(uppers), tuple(labels)
    )
    return pad_to_full_rank(system).require_full_rank()
