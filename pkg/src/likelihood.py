"""
Unconstrained and constrained log-likelihoods of the covariance parameters,
and their multistart maximisation.

    log p(y)  = -1/2 log det K - 1/2 y^T K^{-1} y - n/2 log(2 pi),  K = Phi Gamma Phi^T

    log p_C(y) = log p(y) + log P(xi in C | Phi xi = y) - log P(xi in C)

The two probabilities are Gaussian box probabilities estimated by GHK with
one fixed seed per optimisation run, so the constrained objective is a
deterministic (smooth up to Monte Carlo bias) function of the parameters.
"""

import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import Sequence

import numpy as np
import scipy.linalg
from scipy.optimize import minimize
from tqdm import tqdm

from src.basis import KnotGrid
from src.constraints import LinearConstraintSystem
from src.design import maximin_lhs
from src.errors import EstimationFailedError, IllConditionedError, InvalidArgumentError
from src.kernels import KernelFamily, KernelParams, gram
from src.orthant import OrthantConfig, log_orthant_prob
from src.posterior import condition_on_data
from src.utils import robust_cholesky, symmetrize

logger = logging.getLogger(__name__)

DEFAULT_STARTS = 10
DEFAULT_MAX_EVALUATIONS = 500
# Stand-in for -inf inside the simplex search
FAILED_OBJECTIVE = 1e25


class EstimationMethod(str, Enum):
    MLE = "MLE"
    CMLE = "CMLE"


@dataclass(frozen=True)
class ParamDomain:
    """Box of admissible (variance, lengthscale_1[, lengthscale_2])"""

    family: KernelFamily
    variance: tuple[float, float]
    lengthscales: tuple[tuple[float, float], ...]
    n_starts: int = DEFAULT_STARTS
    max_evaluations: int = DEFAULT_MAX_EVALUATIONS

    def __post_init__(self):
        object.__setattr__(self, "family", KernelFamily(self.family))
        object.__setattr__(self, "variance", tuple(float(v) for v in self.variance))
        object.__setattr__(
            self,
            "lengthscales",
            tuple(tuple(float(v) for v in interval) for interval in self.lengthscales),
        )
        for lo, hi in (self.variance, *self.lengthscales):
            if not lo > 0:
                raise InvalidArgumentError(f"parameter intervals must be positive, got [{lo}, {hi}]")
            if hi < lo:
                raise InvalidArgumentError(f"empty parameter interval [{lo}, {hi}]")
        if len(self.lengthscales) not in (1, 2):
            raise InvalidArgumentError("expected 1 or 2 lengthscale intervals")
        if self.n_starts < 1:
            raise InvalidArgumentError(f"n_starts must be positive, got {self.n_starts}")

    @property
    def lower(self) -> np.ndarray:
        return np.array([self.variance[0], *(lo for lo, _ in self.lengthscales)])

    @property
    def upper(self) -> np.ndarray:
        return np.array([self.variance[1], *(hi for _, hi in self.lengthscales)])

    @property
    def free(self) -> np.ndarray:
        return self.upper > self.lower

    def contains(self, vector: Sequence[float], tol: float = 1e-12) -> bool:
        vector = np.asarray(vector, dtype=float)
        return bool(np.all(vector >= self.lower - tol) and np.all(vector <= self.upper + tol))

    def from_unit(self, unit: np.ndarray) -> np.ndarray:
        """Full parameter vector from unit coordinates of the free dimensions."""
        vector = self.lower.copy()
        free = self.free
        vector[free] = self.lower[free] + np.clip(unit, 0.0, 1.0) * (
            self.upper[free] - self.lower[free]
        )
        return vector

    def to_dict(self) -> dict:
        return {
            "family": self.family.value,
            "variance": list(self.variance),
            "lengthscales": [list(interval) for interval in self.lengthscales],
            "n_starts": self.n_starts,
            "max_evaluations": self.max_evaluations,
        }


@dataclass(frozen=True)
class StartRecord:
    start: tuple[float, ...]
    converged: tuple[float, ...]
    value: float
    evaluations: int

    def to_dict(self) -> dict:
        return {
            "start": list(self.start),
            "converged": list(self.converged),
            "value": self.value if np.isfinite(self.value) else None,
            "evaluations": self.evaluations,
        }


@dataclass(frozen=True)
class EstimationResult:
    params: KernelParams
    objective: float
    method: EstimationMethod
    trace: tuple[StartRecord, ...] = field(default=())
    orthant: OrthantConfig | None = None

    def to_dict(self) -> dict:
        result = {
            "method": self.method.value,
            "params": self.params.to_dict(),
            "objective": self.objective,
            "trace": [record.to_dict() for record in self.trace],
        }
        if self.orthant is not None:
            result["orthant"] = {"n_draws": self.orthant.n_draws, "seed": self.orthant.seed}
        if self.params.family is KernelFamily.MATERN52 and self.params.dim == 1:
            result["log_microergodic_ratio"] = float(np.log(microergodic_ratio(self.params)))
        return result


def microergodic_ratio(params: KernelParams) -> float:
    """sigma^2 / theta^5, the consistently estimable Matern 5/2 combination in 1D."""
    if params.dim != 1:
        raise InvalidArgumentError("the microergodic ratio is defined for 1D kernels")
    return params.variance / params.lengthscales[0] ** 5


def _data_covariance(params: KernelParams, grid: KnotGrid, phi: np.ndarray):
    gamma = gram(params, grid.points())
    return gamma, symmetrize(phi @ gamma.values @ phi.T)


def log_likelihood(
    params: KernelParams, grid: KnotGrid, phi: np.ndarray, y: np.ndarray
) -> float:
    """
    Gaussian log-likelihood of noise-free observations y = Phi xi.

    Raises:
        IllConditionedError: if K cannot be factorised
    """
    phi = np.asarray(phi, dtype=float).reshape(-1, grid.size)
    y = np.asarray(y, dtype=float).reshape(-1)
    n = y.size
    if phi.shape[0] != n:
        raise InvalidArgumentError(f"{n} observations for {phi.shape[0]} design rows")
    if n == 0:
        return 0.0
    _, covariance = _data_covariance(params, grid, phi)
    factor, _ = robust_cholesky(covariance)
    scores = scipy.linalg.solve_triangular(factor, y, lower=True)
    return float(
        -np.sum(np.log(np.diag(factor))) - 0.5 * scores @ scores - 0.5 * n * np.log(2 * np.pi)
    )


def constrained_log_likelihood(
    params: KernelParams,
    grid: KnotGrid,
    phi: np.ndarray,
    y: np.ndarray,
    system: LinearConstraintSystem,
    orthant: OrthantConfig | None = None,
) -> float:
    """
    log p(y) + log P(xi in C | data) - log P(xi in C).

    Equals `log_likelihood` exactly for a vacuous system; -inf when either
    probability estimate underflows.
    """
    base = log_likelihood(params, grid, phi, y)
    if system.is_vacuous():
        return base
    orthant = orthant or OrthantConfig()
    gamma = gram(params, grid.points())
    matrix = system.matrix
    conditional = condition_on_data(gamma, np.asarray(phi).reshape(-1, grid.size), y)
    posterior = log_orthant_prob(
        matrix @ conditional.mean,
        matrix @ conditional.cov @ matrix.T,
        system.lower,
        system.upper,
        n_draws=orthant.n_draws,
        seed=orthant.seed,
    )
    prior = log_orthant_prob(
        np.zeros(system.n_rows),
        matrix @ gamma.values @ matrix.T,
        system.lower,
        system.upper,
        n_draws=orthant.n_draws,
        seed=orthant.seed,
    )
    if not np.isfinite(posterior.log_prob) or not np.isfinite(prior.log_prob):
        return -np.inf
    return base + posterior.log_prob - prior.log_prob


def maximize(
    method: EstimationMethod | str,
    domain: ParamDomain,
    grid: KnotGrid,
    phi: np.ndarray,
    y: np.ndarray,
    system: LinearConstraintSystem | None = None,
    orthant: OrthantConfig | None = None,
    seed: int = 0,
    progress: bool = True,
) -> EstimationResult:
    """
    Multistart maximisation of the (constrained) log-likelihood over `domain`.

    Starts form a maximin Latin hypercube in the unit-scaled box of the
    free parameters; each runs a bounded Nelder-Mead search capped at
    `domain.max_evaluations` evaluations. Ties go to the earliest start.

    Raises:
        EstimationFailedError: when no start reaches a finite objective
    """
    method = EstimationMethod(method)
    if method is EstimationMethod.CMLE:
        if system is None:
            raise InvalidArgumentError("CMLE needs a constraint system")
        orthant = orthant or OrthantConfig(seed=seed)
    if len(domain.lengthscales) != grid.dim:
        raise InvalidArgumentError(
            f"domain has {len(domain.lengthscales)} lengthscales for a {grid.dim}D grid"
        )

    def objective(vector: np.ndarray) -> float:
        params = KernelParams.from_vector(domain.family, vector)
        try:
            if method is EstimationMethod.MLE:
                return log_likelihood(params, grid, phi, y)
            return constrained_log_likelihood(params, grid, phi, y, system, orthant)
        except IllConditionedError as exc:
            logger.debug(f"Objective undefined at {vector}: {exc}")
            return -np.inf

    free = domain.free
    n_free = int(free.sum())
    if n_free == 0:
        starts = np.zeros((1, 0))
    else:
        starts = maximin_lhs(domain.n_starts, n_free, seed=seed)

    def negated(unit: np.ndarray) -> float:
        value = objective(domain.from_unit(unit))
        return -value if np.isfinite(value) else FAILED_OBJECTIVE

    trace: list[StartRecord] = []
    best_index, best_value = -1, -np.inf
    for index, start in enumerate(
        tqdm(starts, desc=f"{method.value} multistart", disable=not progress)
    ):
        if n_free:
            result = minimize(
                negated,
                start,
                method="Nelder-Mead",
                bounds=[(0.0, 1.0)] * n_free,
                options={
                    "maxfev": domain.max_evaluations,
                    "xatol": 1e-4,
                    "fatol": 1e-8,
                },
            )
            converged, evaluations = np.clip(result.x, 0.0, 1.0), int(result.nfev)
        else:
            converged, evaluations = start, 0
        vector = domain.from_unit(converged)
        value = objective(vector)
        trace.append(
            StartRecord(
                start=tuple(domain.from_unit(start).tolist()),
                converged=tuple(vector.tolist()),
                value=float(value),
                evaluations=evaluations,
            )
        )
        if np.isfinite(value) and value > best_value:
            best_index, best_value = index, value

    if best_index < 0:
        raise EstimationFailedError(
            f"{method.value} failed at every start", trace=[r.to_dict() for r in trace]
        )
    best = trace[best_index]
    params = KernelParams.from_vector(domain.family, best.converged)
    logger.info(
        f"{method.value} estimate: variance {params.variance:.4g}, "
        f"lengthscales {params.lengthscales}, objective {best_value:.6g} "
        f"(start {best_index + 1}/{len(trace)})"
    )
    return EstimationResult(
        params=params,
        objective=float(best_value),
        method=method,
        trace=tuple(trace),
        orthant=orthant if method is EstimationMethod.CMLE else None,
    )
