"""
Maximin Latin hypercube designs.

Used for multistart starting points and for space-filling 2D training
designs. A random Latin hypercube is improved by simulated annealing on
column swaps, keeping the swap when it does not shrink the smallest
pairwise distance too much.
"""

import logging

import numpy as np
from scipy.spatial.distance import pdist
from scipy.stats import qmc

from src.errors import InvalidArgumentError
from src.utils import make_rng

logger = logging.getLogger(__name__)

DEFAULT_ANNEALING_STEPS = 1000
COOLING_RATE = 0.99


def min_distance(points: np.ndarray) -> float:
    if points.shape[0] < 2:
        return np.inf
    return float(np.min(pdist(points)))


def maximin_lhs(
    n_points: int,
    dim: int,
    seed: int = 0,
    n_iter: int = DEFAULT_ANNEALING_STEPS,
    lower=None,
    upper=None,
) -> np.ndarray:
    """
    (n_points, dim) maximin Latin hypercube, scaled to [lower, upper].

    Deterministic given `seed`; defaults to the unit cube.
    """
    if n_points < 1 or dim < 1:
        raise InvalidArgumentError(f"need n_points >= 1 and dim >= 1, got {n_points}, {dim}")
    rng = make_rng(seed, stream=1)
    sampler = qmc.LatinHypercube(d=dim, rng=make_rng(seed))
    current = sampler.random(n=n_points)
    current_score = min_distance(current)
    best, best_score = current, current_score

    temperature = 1.0
    if n_points > 1:
        for _ in range(n_iter):
            candidate = current.copy()
            i, j = rng.integers(0, n_points, 2)
            k = rng.integers(0, dim)
            candidate[i, k], candidate[j, k] = candidate[j, k], candidate[i, k]
            score = min_distance(candidate)
            delta = score - current_score
            if delta > 0 or np.exp(delta / temperature) > rng.random():
                current, current_score = candidate, score
                if current_score > best_score:
                    best, best_score = current, current_score
            temperature *= COOLING_RATE

    logger.debug(f"Maximin LHS of {n_points} points in {dim}D, min distance {best_score:.4g}")
    if lower is None and upper is None:
        return best
    lower = np.zeros(dim) if lower is None else np.broadcast_to(np.asarray(lower, float), (dim,))
    upper = np.ones(dim) if upper is None else np.broadcast_to(np.asarray(upper, float), (dim,))
    if np.any(upper < lower):
        raise InvalidArgumentError("design box has upper < lower")
    return lower + best * (upper - lower)
