"""
Univariate truncated normal draws.

Inverse-CDF sampling for intervals with non-negligible mass, on the
survival side for right-hand intervals to keep precision; one-sided
exponential rejection once the interval lies more than 6 sd in a tail.
"""

import math

import numpy as np
from scipy.special import ndtr, ndtri

from src.errors import InvalidArgumentError

TAIL_THRESHOLD = 6.0


def _tail_draw(alpha: float, beta: float, rng: np.random.Generator) -> float:
    """Standard normal restricted to [alpha, beta] with alpha >= TAIL_THRESHOLD."""
    if (beta * beta - alpha * alpha) / 2.0 < 1.0:
        # Narrow interval: uniform proposals, density ratio bounded by 1 at alpha
        while True:
            x = rng.uniform(alpha, beta)
            if rng.random() <= math.exp(-(x * x - alpha * alpha) / 2.0):
                return x
    rate = (alpha + math.sqrt(alpha * alpha + 4.0)) / 2.0
    while True:
        x = alpha + rng.exponential(1.0 / rate)
        if x > beta:
            continue
        if rng.random() <= math.exp(-((x - rate) ** 2) / 2.0):
            return x


def standard_truncated(alpha: float, beta: float, rng: np.random.Generator) -> float:
    """One draw of Z ~ N(0, 1) conditioned on alpha <= Z <= beta (alpha < beta)."""
    if alpha >= TAIL_THRESHOLD:
        return _tail_draw(alpha, beta, rng)
    if beta <= -TAIL_THRESHOLD:
        return -_tail_draw(-beta, -alpha, rng)
    if alpha > 0:
        upper_mass, lower_mass = float(ndtr(-alpha)), float(ndtr(-beta))
        while True:
            x = -float(ndtri(lower_mass + rng.random() * (upper_mass - lower_mass)))
            if math.isfinite(x):
                break
    else:
        lower_mass, upper_mass = float(ndtr(alpha)), float(ndtr(beta))
        while True:
            x = float(ndtri(lower_mass + rng.random() * (upper_mass - lower_mass)))
            if math.isfinite(x):
                break
    return min(max(x, alpha), beta)


def sample_truncated_1d(
    mean: float, sd: float, a: float, b: float, rng: np.random.Generator
) -> float:
    """
    One draw from N(mean, sd^2) restricted to [a, b].

    Either bound may be infinite.

    Raises:
        InvalidArgumentError: if a >= b or sd <= 0
    """
    if not sd > 0:
        raise InvalidArgumentError(f"sd must be positive, got {sd}")
    if not a < b:
        raise InvalidArgumentError(f"empty interval [{a}, {b}]")
    alpha = (a - mean) / sd
    beta = (b - mean) / sd
    return mean + sd * standard_truncated(alpha, beta, rng)
