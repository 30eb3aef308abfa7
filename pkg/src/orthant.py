"""
Gaussian box probabilities P(lower <= X <= upper), X ~ N(mean, cov), by the
GHK sequential importance sampler.

Variables are reordered so the tightest intervals come first, the
covariance is factorised by a Cholesky decomposition that tolerates zero
pivots (singular covariances are common here), and each draw walks the
coordinates in turn, sampling within the interval left by the previous
ones and multiplying the interval probabilities into its weight.
"""

import logging
from dataclasses import dataclass

import numpy as np
from scipy.special import log_ndtr, logsumexp, ndtr, ndtri

from src.errors import InvalidArgumentError
from src.utils import make_rng, symmetrize

logger = logging.getLogger(__name__)

DEFAULT_N_DRAWS = 10_000
PIVOT_RELATIVE_TOLERANCE = 1e-12


@dataclass(frozen=True)
class OrthantConfig:
    n_draws: int = DEFAULT_N_DRAWS
    seed: int = 0

    def __post_init__(self):
        if self.n_draws < 2:
            raise InvalidArgumentError(f"n_draws must be at least 2, got {self.n_draws}")


@dataclass(frozen=True)
class OrthantEstimate:
    log_prob: float
    std_error: float
    n_draws: int
    method: str = "GHK"

    @property
    def probability(self) -> float:
        return float(np.exp(self.log_prob))

    def to_dict(self) -> dict:
        return {
            "log_prob": self.log_prob,
            "std_error": self.std_error,
            "n_draws": self.n_draws,
            "method": self.method,
        }


def log_interval_mass(a, b) -> np.ndarray:
    """log(Phi(b) - Phi(a)) without cancellation in either tail."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    right = a > 0
    with np.errstate(divide="ignore", invalid="ignore"):
        # Right tail: Q(a) - Q(b) with Q the survival function
        upper_side = log_ndtr(-a) + np.log1p(-np.exp(log_ndtr(-b) - log_ndtr(-a)))
        lower_side = log_ndtr(b) + np.log1p(-np.exp(log_ndtr(a) - log_ndtr(b)))
    result = np.where(right, upper_side, lower_side)
    return np.where(b > a, result, -np.inf)


def _truncated_standard(a: np.ndarray, b: np.ndarray, u: np.ndarray) -> np.ndarray:
    """Inverse-CDF draws of N(0, 1) restricted to [a, b], vectorised."""
    right = a > 0
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        q_a, q_b = ndtr(-a), ndtr(-b)
        p_a, p_b = ndtr(a), ndtr(b)
        from_right = -ndtri(q_b + u * (q_a - q_b))
        from_left = ndtri(p_a + u * (p_b - p_a))
    draws = np.where(right, from_right, from_left)
    fallback = np.where(np.isfinite(a), a, np.where(np.isfinite(b), b, 0.0))
    draws = np.where(np.isfinite(draws), draws, fallback)
    return np.clip(draws, a, b)


def _pivot_tolerant_cholesky(cov: np.ndarray) -> np.ndarray:
    """Lower factor L with L L^T = cov; columns with a vanishing pivot are zero."""
    dim = cov.shape[0]
    factor = np.zeros_like(cov)
    floor = PIVOT_RELATIVE_TOLERANCE * max(float(np.max(np.diag(cov))), 0.0)
    for k in range(dim):
        pivot = cov[k, k] - factor[k, :k] @ factor[k, :k]
        if pivot <= floor:
            continue
        factor[k, k] = np.sqrt(pivot)
        below = cov[k + 1 :, k] - factor[k + 1 :, :k] @ factor[k, :k]
        factor[k + 1 :, k] = below / factor[k, k]
    return factor


def log_orthant_prob(
    mean,
    cov,
    lower,
    upper,
    n_draws: int = DEFAULT_N_DRAWS,
    seed: int = 0,
) -> OrthantEstimate:
    """
    GHK estimate of log P(lower <= X <= upper) with X ~ N(mean, cov).

    The estimate is a deterministic function of the inputs and `seed`
    (common random numbers across calls). Coordinates with both bounds
    infinite are dropped; when all are, the result is exactly 0.

    Returns:
        OrthantEstimate; `log_prob` is -inf with infinite `std_error` when
        every importance weight underflows
    """
    mean = np.atleast_1d(np.asarray(mean, dtype=float))
    cov = np.atleast_2d(np.asarray(cov, dtype=float))
    lower = np.broadcast_to(np.asarray(lower, dtype=float), mean.shape)
    upper = np.broadcast_to(np.asarray(upper, dtype=float), mean.shape)
    if cov.shape != (mean.size, mean.size):
        raise InvalidArgumentError(f"covariance {cov.shape} does not match mean {mean.shape}")
    if np.any(lower > upper):
        raise InvalidArgumentError("orthant lower bounds exceed upper bounds")
    if n_draws < 2:
        raise InvalidArgumentError(f"n_draws must be at least 2, got {n_draws}")

    keep = np.isfinite(lower) | np.isfinite(upper)
    if not keep.any():
        return OrthantEstimate(log_prob=0.0, std_error=0.0, n_draws=n_draws)
    mean, lower, upper = mean[keep], lower[keep] - mean[keep], upper[keep] - mean[keep]
    cov = symmetrize(cov[np.ix_(keep, keep)])
    dim = mean.size

    # Tightest intervals first
    sd = np.sqrt(np.clip(np.diag(cov), 0.0, None))
    with np.errstate(divide="ignore", invalid="ignore"):
        mass = np.where(
            sd > 0,
            ndtr(upper / np.where(sd > 0, sd, 1.0)) - ndtr(lower / np.where(sd > 0, sd, 1.0)),
            ((lower <= 0) & (upper >= 0)).astype(float),
        )
    order = np.argsort(mass, kind="stable")
    lower, upper = lower[order], upper[order]
    factor = _pivot_tolerant_cholesky(cov[np.ix_(order, order)])

    rng = make_rng(seed)
    uniforms = rng.random((n_draws, dim))
    samples = np.zeros((n_draws, dim))
    log_weights = np.zeros(n_draws)
    for k in range(dim):
        shift = samples[:, :k] @ factor[k, :k]
        pivot = factor[k, k]
        if pivot > 0:
            a = (lower[k] - shift) / pivot
            b = (upper[k] - shift) / pivot
            log_weights += log_interval_mass(a, b)
            samples[:, k] = _truncated_standard(a, b, uniforms[:, k])
        else:
            inside = (shift >= lower[k]) & (shift <= upper[k])
            log_weights = np.where(inside, log_weights, -np.inf)

    if not np.any(np.isfinite(log_weights)):
        logger.debug(f"All {n_draws} GHK weights underflowed in dimension {dim}")
        return OrthantEstimate(log_prob=-np.inf, std_error=np.inf, n_draws=n_draws)
    log_prob = float(logsumexp(log_weights) - np.log(n_draws))
    scaled = np.exp(log_weights - log_weights.max())
    std_error = float(scaled.std(ddof=1) / (np.sqrt(n_draws) * scaled.mean()))
    return OrthantEstimate(log_prob=min(log_prob, 0.0), std_error=std_error, n_draws=n_draws)
