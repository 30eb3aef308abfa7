"""
Posterior mode under interpolation and inequality constraints.

    minimise    xi^T Gamma^{-1} xi
    subject to  Phi xi = y,  l <= Lambda xi <= u

With Gamma = L L^T and xi = L v the objective is ||v||^2. The equalities are
eliminated through v = v0 + N w (v0 the minimum-norm solution of Phi L v = y,
N an orthonormal null-space basis), which leaves the projection of the
origin onto the polyhedron {A w >= b}. That projection is solved by a
primal active-set method started from the Phase-1 point of largest margin.
"""

import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
from scipy.optimize import linprog

from src.constraints import LinearConstraintSystem
from src.errors import InfeasibleProblemError, InvalidArgumentError, NonConvergenceError
from src.kernels import GramMatrix
from src.utils import robust_cholesky

logger = logging.getLogger(__name__)

DEFAULT_MAX_ITER = 10_000
DEFAULT_KKT_TOL = 1e-6
ZERO_ROW_TOLERANCE = 1e-12
# Steps whose directional derivative is below this share of the step length
# are treated as parallel to the row
DIRECTION_TOLERANCE = 1e-10
PARALLEL_DECIMALS = 10


@dataclass(frozen=True)
class MapOptions:
    max_iter: int = DEFAULT_MAX_ITER
    kkt_tol: float = DEFAULT_KKT_TOL
    feasibility_tol: float = 1e-9
    equality_tol: float = 1e-8

    def __post_init__(self):
        if self.max_iter < 1:
            raise InvalidArgumentError(f"max_iter must be positive, got {self.max_iter}")
        if not self.kkt_tol > 0:
            raise InvalidArgumentError(f"kkt_tol must be positive, got {self.kkt_tol}")


@dataclass(frozen=True, eq=False)
class MapResult:
    xi: np.ndarray
    nu: np.ndarray
    objective: float
    kkt_residual: float
    iterations: int
    active_rows: tuple[int, ...] = field(default=())

    def to_dict(self) -> dict:
        return {
            "xi": self.xi.tolist(),
            "nu": self.nu.tolist(),
            "objective": self.objective,
            "kkt_residual": self.kkt_residual,
            "iterations": self.iterations,
            "active_rows": list(self.active_rows),
        }


@dataclass(frozen=True, eq=False)
class Projection:
    """Solution of min ||w||^2 subject to A w >= b"""

    point: np.ndarray
    multipliers: np.ndarray
    kkt_residual: float
    iterations: int
    active: tuple[int, ...]


def _normalise(matrix: np.ndarray, offset: np.ndarray):
    norms = np.linalg.norm(matrix, axis=1)
    if np.any(norms <= 0):
        raise InvalidArgumentError("half-space normals must be nonzero")
    return matrix / norms[:, None], offset / norms, norms


def max_margin_point(matrix, offset, tol: float = 1e-9) -> tuple[np.ndarray, float]:
    """
    Point of largest uniform slack in {z : A z >= b} (Phase 1).

    Solves max s subject to a_i^T z / |a_i| - s >= b_i / |a_i|, s <= 1 with
    HiGHS. A positive margin means the returned point is strictly interior.

    Raises:
        InfeasibleProblemError: if the polyhedron is empty; the certificate
            lists the rows carrying nonzero dual weight
    """
    matrix = np.atleast_2d(np.asarray(matrix, dtype=float))
    offset = np.asarray(offset, dtype=float).reshape(-1)
    n_rows, dim = matrix.shape[0], matrix.shape[1]
    if n_rows == 0 or offset.size == 0:
        return np.zeros(dim), np.inf
    unit, scaled, _ = _normalise(matrix, offset)

    # Variables (z, s); minimise -s
    cost = np.zeros(dim + 1)
    cost[-1] = -1.0
    a_ub = np.hstack([-unit, np.ones((n_rows, 1))])
    bounds = [(None, None)] * dim + [(None, 1.0)]
    result = linprog(cost, A_ub=a_ub, b_ub=-scaled, bounds=bounds, method="highs")
    if result.status != 0:
        raise NonConvergenceError(f"Phase-1 LP failed: {result.message}")
    point = result.x[:dim]
    margin = float(result.x[-1])
    if margin < -tol:
        duals = np.abs(result.ineqlin.marginals)
        rows = np.flatnonzero(duals > 1e-9 * max(duals.max(), 1.0))
        raise InfeasibleProblemError(
            f"constraint set is empty (largest margin {margin:.3g})",
            certificate={
                "rows": rows.tolist(),
                "weights": duals[rows].tolist(),
                "margin": margin,
            },
        )
    return point, margin


def _merge_parallel(unit: np.ndarray, scaled: np.ndarray) -> np.ndarray:
    """Indices keeping only the tightest row of each set of identical normals."""
    # + 0.0 folds -0.0 into 0.0 before the row comparison
    rounded = np.round(unit, PARALLEL_DECIMALS) + 0.0
    _, group = np.unique(rounded, axis=0, return_inverse=True)
    group = np.asarray(group).reshape(-1)
    kept = []
    for label in np.unique(group):
        members = np.flatnonzero(group == label)
        kept.append(int(members[np.argmax(scaled[members])]))
    return np.array(sorted(kept), dtype=int)


def _extends_rank(rows: np.ndarray, working: list[int], candidate: int) -> bool:
    stacked = rows[working + [candidate]]
    return np.linalg.matrix_rank(stacked) == len(working) + 1


def project_origin(
    matrix,
    offset,
    options: MapOptions | None = None,
    start: np.ndarray | None = None,
) -> Projection:
    """
    Primal active-set projection of the origin onto {w : A w >= b}.

    Starts from `start` (or the Phase-1 point) and keeps a working set of
    linearly independent active rows; each iteration either moves to the
    projection onto the working set's subspace, stopping at the first
    blocking row, or drops a row with a negative multiplier. Rows sharing a
    normal are merged into the tightest one first. After a zero-length step
    ties and drops follow the smallest-index rule so degenerate vertices
    cannot cycle.

    Raises:
        InfeasibleProblemError: from the Phase-1 check
        NonConvergenceError: after `max_iter` iterations, with the best iterate
    """
    options = options or MapOptions()
    matrix = np.atleast_2d(np.asarray(matrix, dtype=float))
    offset = np.asarray(offset, dtype=float).reshape(-1)
    dim = matrix.shape[1]
    if offset.size == 0:
        return Projection(np.zeros(dim), np.zeros(0), 0.0, 0, ())

    unit, scaled, norms = _normalise(matrix, offset)
    if start is None:
        start, _ = max_margin_point(unit, scaled, tol=options.feasibility_tol)
    w = np.asarray(start, dtype=float).copy()
    if np.any(unit @ w - scaled < -1e3 * options.feasibility_tol):
        raise InvalidArgumentError("active-set start point is infeasible")

    kept = _merge_parallel(unit, scaled)
    if kept.size < offset.size:
        logger.debug(f"Merged {offset.size - kept.size} parallel half-spaces")
    rows, bounds = unit[kept], scaled[kept]

    working: list[int] = []
    for row in np.flatnonzero(np.abs(rows @ w - bounds) <= options.feasibility_tol):
        if _extends_rank(rows, working, int(row)):
            working.append(int(row))

    tol = options.kkt_tol
    lam = np.zeros(0)
    stalled = False
    for iteration in range(1, options.max_iter + 1):
        if working:
            lam, *_ = scipy.linalg.lstsq(rows[working].T, w)
            step = rows[working].T @ lam - w
        else:
            lam = np.zeros(0)
            step = -w

        step_norm = np.linalg.norm(step)
        if step_norm <= tol * max(1.0, np.linalg.norm(w)):
            if lam.size == 0 or lam.min() >= -tol:
                multipliers = np.zeros(offset.size)
                multipliers[kept[working]] = lam
                residual = _kkt_residual(unit, scaled, w, multipliers)
                logger.debug(
                    f"Active-set projection converged in {iteration} iterations "
                    f"({len(working)} active rows)"
                )
                # Multipliers are reported for the unscaled rows
                return Projection(
                    point=w,
                    multipliers=multipliers / norms,
                    kkt_residual=residual,
                    iterations=iteration,
                    active=tuple(sorted(kept[working].tolist())),
                )
            if stalled:
                negative = np.flatnonzero(lam < -tol)
                position = int(negative[np.argmin([working[k] for k in negative])])
            else:
                position = int(np.argmin(lam))
            dropped = working.pop(position)
            logger.debug(f"Dropping row {kept[dropped]} from the working set")
            continue

        directional = rows @ step
        outside = np.ones(bounds.size, dtype=bool)
        outside[working] = False
        candidates = np.flatnonzero(
            outside & (directional < -DIRECTION_TOLERANCE * step_norm)
        )
        slack = bounds[candidates] - rows[candidates] @ w
        ratios = np.maximum(slack / directional[candidates], 0.0)
        alpha, blocking = 1.0, None
        for position in np.lexsort((candidates, ratios)):
            if ratios[position] >= 1.0:
                break
            candidate = int(candidates[position])
            # Rows in the span of the working set only block through roundoff
            if _extends_rank(rows, working, candidate):
                alpha, blocking = float(ratios[position]), candidate
                break
        w = w + alpha * step
        if blocking is not None:
            working.append(blocking)
        stalled = blocking is not None and alpha == 0.0

    raise NonConvergenceError(
        f"active-set projection did not converge in {options.max_iter} iterations",
        best_iterate=w,
    )


def _kkt_residual(unit, scaled, w, multipliers) -> float:
    stationarity = np.abs(w - unit.T @ multipliers).max(initial=0.0)
    slack = unit @ w - scaled
    primal = np.clip(-slack, 0.0, None).max(initial=0.0)
    dual = np.clip(-multipliers, 0.0, None).max(initial=0.0)
    complementarity = np.abs(multipliers * slack).max(initial=0.0)
    return float(max(stationarity, primal, dual, complementarity))


def _inequality_rows(system: LinearConstraintSystem, transform: np.ndarray, base: np.ndarray):
    """Half-spaces A w >= b for Lambda (base + transform w) within [l, u]."""
    mapped = system.matrix @ transform
    fixed = system.matrix @ base
    matrices, offsets, rows = [], [], []
    for k in range(system.n_rows):
        if np.isfinite(system.lower[k]):
            matrices.append(mapped[k])
            offsets.append(system.lower[k] - fixed[k])
            rows.append(k)
        if np.isfinite(system.upper[k]):
            matrices.append(-mapped[k])
            offsets.append(fixed[k] - system.upper[k])
            rows.append(k)
    dim = transform.shape[1]
    return (
        np.array(matrices).reshape(len(matrices), dim),
        np.array(offsets, dtype=float),
        np.array(rows, dtype=int),
    )


def solve_map(
    gamma: GramMatrix | np.ndarray,
    phi: np.ndarray,
    y: np.ndarray,
    system: LinearConstraintSystem,
    options: MapOptions | None = None,
) -> MapResult:
    """
    Most probable knot vector of the constrained posterior.

    Raises:
        InfeasibleProblemError: empty constraint set; the certificate names the
            constraint rows involved
        NonConvergenceError: iteration cap reached
        IllConditionedError: Gamma cannot be factorised
    """
    options = options or MapOptions()
    values = gamma.values if isinstance(gamma, GramMatrix) else np.asarray(gamma, dtype=float)
    size = values.shape[0]
    if system.size != size:
        raise InvalidArgumentError(f"system acts on {system.size} values, Gamma is {size}x{size}")
    phi = np.asarray(phi, dtype=float).reshape(-1, size)
    y = np.asarray(y, dtype=float).reshape(-1)
    if phi.shape[0] != y.shape[0]:
        raise InvalidArgumentError(f"{y.shape[0]} observations for {phi.shape[0]} design rows")

    factor, _ = robust_cholesky(values, jitter=0.0)
    if y.size:
        equality = phi @ factor
        base, *_ = scipy.linalg.lstsq(equality, y)
        mismatch = np.linalg.norm(equality @ base - y)
        if mismatch > options.equality_tol * max(1.0, np.linalg.norm(y)):
            raise InfeasibleProblemError(
                f"interpolation conditions are inconsistent (residual {mismatch:.3g})",
                certificate={"equality_residual": float(mismatch)},
            )
        null = scipy.linalg.null_space(equality)
    else:
        base = np.zeros(size)
        null = np.eye(size)

    matrix, offset, rows = _inequality_rows(system, factor @ null, factor @ base)

    row_norms = np.linalg.norm(matrix, axis=1) if matrix.size else np.zeros(offset.size)
    scale = max(float(row_norms.max(initial=0.0)), 1.0)
    pinned = row_norms <= ZERO_ROW_TOLERANCE * scale
    broken = pinned & (offset > options.feasibility_tol * max(1.0, np.abs(offset).max(initial=0.0)))
    if np.any(broken):
        raise InfeasibleProblemError(
            "interpolation conditions violate the inequality constraints",
            certificate={
                "rows": sorted(set(rows[broken].tolist())),
                "labels": [str(system.labels[k]) for k in sorted(set(rows[broken].tolist()))],
            },
        )
    free = ~pinned
    try:
        projection = project_origin(matrix[free], offset[free], options)
    except InfeasibleProblemError as exc:
        certificate_rows = sorted(set(rows[free][exc.certificate.get("rows", [])].tolist()))
        raise InfeasibleProblemError(
            str(exc),
            certificate={
                **exc.certificate,
                "rows": certificate_rows,
                "labels": [str(system.labels[k]) for k in certificate_rows],
            },
        ) from exc

    v = base + null @ projection.point
    xi = factor @ v
    active_rows = tuple(sorted(set(rows[free][list(projection.active)].tolist())))
    logger.info(
        f"MAP solved: objective {float(v @ v):.6g}, {len(active_rows)} active "
        f"constraints, {projection.iterations} iterations"
    )
    return MapResult(
        xi=xi,
        nu=system.matrix @ xi,
        objective=float(v @ v),
        kkt_residual=projection.kkt_residual,
        iterations=projection.iterations,
        active_rows=active_rows,
    )
