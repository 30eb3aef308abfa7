"""
Conditioning the knot-value Gaussian on interpolation conditions and
forming the truncated target on eta = Lambda xi.

The target covariance Lambda Sigma Lambda^T is singular whenever q > M or
the data pin some directions down (always, after exact interpolation).
Sampling therefore happens in the reduced coordinates of
`TruncatedGaussian.factor()`: eta = center + loadings @ z, z ~ N(0, I_r).
"""

import logging
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.linalg

from src.constraints import LinearConstraintSystem
from src.errors import InconsistentEtaError, InfeasibleProblemError, InvalidArgumentError
from src.kernels import GramMatrix
from src.utils import robust_cholesky, symmetrize

logger = logging.getLogger(__name__)

EIGEN_RELATIVE_TOLERANCE = 1e-10
BACK_SOLVE_RELATIVE_TOLERANCE = 1e-6
# Rows of the loading matrix below this (relative to the largest row) are fixed
DEGENERATE_ROW_TOLERANCE = 1e-9
FIXED_ROW_TOLERANCE = 1e-7


@dataclass(frozen=True, eq=False)
class ConditionalGaussian:
    """Law of xi given Phi xi = y"""

    mean: np.ndarray
    cov: np.ndarray
    jitter: float = 0.0

    @property
    def size(self) -> int:
        return self.mean.shape[0]


@dataclass(frozen=True, eq=False)
class ReducedFactor:
    """eta = center + loadings @ z with z ~ N(0, I_rank)"""

    center: np.ndarray
    loadings: np.ndarray
    eigenvalues: np.ndarray
    dropped: int

    @property
    def rank(self) -> int:
        return self.loadings.shape[1]


@dataclass(frozen=True, eq=False)
class WhitenedConstraints:
    """
    Half-spaces A z >= b in reduced coordinates.

    `rows` maps each half-space to the eta coordinate it comes from and
    `sides` holds +1 for a lower bound and -1 for an upper bound.
    """

    matrix: np.ndarray
    offset: np.ndarray
    rows: np.ndarray
    sides: np.ndarray

    @property
    def n_walls(self) -> int:
        return self.matrix.shape[0]

    def slack(self, z: np.ndarray) -> np.ndarray:
        return self.matrix @ z - self.offset

    def contains(self, z: np.ndarray, tol: float = 0.0) -> bool:
        return bool(np.all(self.slack(z) >= -tol))


@dataclass(frozen=True, eq=False)
class TruncatedGaussian:
    """N(mean, cov) restricted to lower <= eta <= upper"""

    mean: np.ndarray
    cov: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    jitter: float = 0.0
    labels: tuple = field(default=())

    def __post_init__(self):
        mean = np.atleast_1d(np.asarray(self.mean, dtype=float))
        cov = np.atleast_2d(np.asarray(self.cov, dtype=float))
        lower = np.broadcast_to(np.asarray(self.lower, dtype=float), mean.shape).copy()
        upper = np.broadcast_to(np.asarray(self.upper, dtype=float), mean.shape).copy()
        if cov.shape != (mean.size, mean.size):
            raise InvalidArgumentError(
                f"covariance shape {cov.shape} does not match mean length {mean.size}"
            )
        if np.any(lower > upper):
            raise InvalidArgumentError("target lower bounds exceed upper bounds")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "cov", symmetrize(cov))
        object.__setattr__(self, "lower", lower)
        object.__setattr__(self, "upper", upper)

    @property
    def dim(self) -> int:
        return self.mean.shape[0]

    def contains(self, eta: np.ndarray, tol: float = 1e-9) -> bool:
        eta = np.asarray(eta, dtype=float)
        return bool(np.all(eta >= self.lower - tol) and np.all(eta <= self.upper + tol))

    def factor(self) -> ReducedFactor:
        return self._factor

    def whitened(self) -> WhitenedConstraints:
        return self._whitened

    def to_eta(self, z: np.ndarray) -> np.ndarray:
        """Map reduced coordinates (r,) or (S, r) to eta."""
        factor = self._factor
        return factor.center + np.asarray(z) @ factor.loadings.T

    @cached_property
    def _factor(self) -> ReducedFactor:
        eigenvalues, vectors = scipy.linalg.eigh(self.cov)
        top = float(eigenvalues[-1]) if eigenvalues.size else 0.0
        if top <= 0:
            return ReducedFactor(
                center=self.mean.copy(),
                loadings=np.zeros((self.dim, 0)),
                eigenvalues=np.zeros(0),
                dropped=self.dim,
            )
        keep = eigenvalues > EIGEN_RELATIVE_TOLERANCE * top
        if np.any(eigenvalues < -1e-8 * top):
            logger.warning(
                f"Target covariance has eigenvalues down to {eigenvalues[0]:.3g} "
                f"(largest {top:.3g}); treating them as zero"
            )
        dropped = int(np.sum(~keep))
        if dropped:
            logger.debug(f"Reduced-rank target: kept {int(keep.sum())} of {self.dim} directions")
        # Descending order keeps the leading directions first
        kept_values = eigenvalues[keep][::-1]
        kept_vectors = vectors[:, keep][:, ::-1]
        return ReducedFactor(
            center=self.mean.copy(),
            loadings=kept_vectors * np.sqrt(kept_values),
            eigenvalues=kept_values,
            dropped=dropped,
        )

    @cached_property
    def _whitened(self) -> WhitenedConstraints:
        factor = self._factor
        loadings = factor.loadings
        norms = np.linalg.norm(loadings, axis=1) if factor.rank else np.zeros(self.dim)
        scale = float(norms.max()) if norms.size else 0.0
        fixed = norms <= DEGENERATE_ROW_TOLERANCE * max(scale, 1.0)

        center = factor.center
        for k in np.flatnonzero(fixed):
            tol = FIXED_ROW_TOLERANCE * max(1.0, abs(center[k]))
            if center[k] < self.lower[k] - tol or center[k] > self.upper[k] + tol:
                raise InfeasibleProblemError(
                    f"eta[{k}] is pinned at {center[k]:.6g} by the data, outside "
                    f"[{self.lower[k]}, {self.upper[k]}]",
                    certificate={"row": int(k), "value": float(center[k])},
                )

        matrices, offsets, rows, sides = [], [], [], []
        for k in np.flatnonzero(~fixed):
            if np.isfinite(self.lower[k]):
                matrices.append(loadings[k])
                offsets.append(self.lower[k] - center[k])
                rows.append(k)
                sides.append(1)
            if np.isfinite(self.upper[k]):
                matrices.append(-loadings[k])
                offsets.append(center[k] - self.upper[k])
                rows.append(k)
                sides.append(-1)
        rank = factor.rank
        return WhitenedConstraints(
            matrix=np.array(matrices).reshape(len(matrices), rank),
            offset=np.array(offsets, dtype=float),
            rows=np.array(rows, dtype=int),
            sides=np.array(sides, dtype=int),
        )


def _as_gram_values(gamma) -> np.ndarray:
    if isinstance(gamma, GramMatrix):
        return gamma.values
    return np.asarray(gamma, dtype=float)


def condition_on_data(
    gamma: GramMatrix | np.ndarray,
    phi: np.ndarray,
    y: np.ndarray,
    jitter: float | None = None,
) -> ConditionalGaussian:
    """
    Gaussian law of xi ~ N(0, Gamma) given Phi xi = y.

        mu    = Gamma Phi^T (Phi Gamma Phi^T)^{-1} y
        Sigma = Gamma - Gamma Phi^T (Phi Gamma Phi^T)^{-1} Phi Gamma

    computed through the Cholesky factor of Phi Gamma Phi^T + jitter * I.

    Raises:
        IllConditionedError: if the factorisation fails after jitter escalation
    """
    values = _as_gram_values(gamma)
    size = values.shape[0]
    phi = np.asarray(phi, dtype=float).reshape(-1, size)
    y = np.asarray(y, dtype=float).reshape(-1)
    n = phi.shape[0]
    if y.shape[0] != n:
        raise InvalidArgumentError(f"{y.shape[0]} observations for {n} design rows")
    if n == 0:
        return ConditionalGaussian(mean=np.zeros(size), cov=values.copy(), jitter=0.0)
    if n > size:
        raise InvalidArgumentError(
            f"{n} observations exceed the {size} knot values; refine the grid"
        )

    phi_gamma = phi @ values
    factor, used = robust_cholesky(symmetrize(phi_gamma @ phi.T), jitter=jitter)
    weights = scipy.linalg.solve_triangular(factor, phi_gamma, lower=True)
    scores = scipy.linalg.solve_triangular(factor, y, lower=True)
    mean = weights.T @ scores
    cov = values - weights.T @ weights

    # The jitter leaks O(jitter) variance into the data directions; project it
    # out so that Phi Sigma = 0 and Phi mu = y hold to rounding.
    row_space = scipy.linalg.orth(phi.T)
    projector = np.eye(size) - row_space @ row_space.T
    cov = symmetrize(projector @ cov @ projector)
    correction, *_ = scipy.linalg.lstsq(phi, y - phi @ mean)
    mean = mean + correction
    return ConditionalGaussian(mean=mean, cov=cov, jitter=used)


def truncated_target(
    conditional: ConditionalGaussian, system: LinearConstraintSystem
) -> TruncatedGaussian:
    """TN(Lambda mu, Lambda Sigma Lambda^T, l, u)."""
    if system.size != conditional.size:
        raise InvalidArgumentError(
            f"system acts on {system.size} values, conditional law has {conditional.size}"
        )
    matrix = system.matrix
    return TruncatedGaussian(
        mean=matrix @ conditional.mean,
        cov=matrix @ conditional.cov @ matrix.T,
        lower=system.lower,
        upper=system.upper,
        labels=system.labels,
    )


def back_solve(system: LinearConstraintSystem, eta: np.ndarray) -> np.ndarray:
    """
    Least-squares solution of Lambda xi = eta for one (q,) or many (S, q) vectors.

    Raises:
        InconsistentEtaError: if some eta is not in the image of Lambda
    """
    eta = np.asarray(eta, dtype=float)
    single = eta.ndim == 1
    block = np.atleast_2d(eta)
    if block.shape[1] != system.n_rows:
        raise InvalidArgumentError(
            f"eta has length {block.shape[1]}, system has {system.n_rows} rows"
        )
    solution, *_ = scipy.linalg.lstsq(system.matrix, block.T)
    xi = solution.T
    residual = np.linalg.norm(xi @ system.matrix.T - block, axis=1)
    limit = BACK_SOLVE_RELATIVE_TOLERANCE * np.linalg.norm(block, axis=1) + 1e-12
    if np.any(residual > limit):
        worst = int(np.argmax(residual - limit))
        raise InconsistentEtaError(
            f"eta is not in the image of Lambda (residual {residual[worst]:.3g})",
            residual=float(residual[worst]),
        )
    return xi[0] if single else xi
