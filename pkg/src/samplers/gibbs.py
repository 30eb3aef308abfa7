"""
Systematic-scan Gibbs sampler in whitened coordinates.

Each full conditional of z ~ N(0, I) on {A z >= b} is a standard normal
truncated to the interval left open by the other coordinates. Slacks
A z - b are updated incrementally after every coordinate move.
"""

import logging

import numpy as np

from src.posterior import TruncatedGaussian
from src.samplers.base import (
    SampleChain,
    SamplerConfig,
    WhitenedTarget,
    degenerate_chain,
    finish_chain,
    record_chain,
)
from src.samplers.truncnorm import standard_truncated
from src.utils import make_rng

logger = logging.getLogger(__name__)

COLLAPSED_INTERVAL = 1e-14


def conditional_interval(
    column: np.ndarray, slack: np.ndarray, current: float
) -> tuple[float, float]:
    """
    Range of one coordinate keeping every slack nonnegative.

    Row i allows column[i] * (x - current) + slack[i] >= 0.
    """
    positive = column > 0
    negative = column < 0
    lo = current - np.min(slack[positive] / column[positive]) if positive.any() else -np.inf
    hi = current - np.max(slack[negative] / column[negative]) if negative.any() else np.inf
    return float(lo), float(hi)


def run_gibbs(
    target: TruncatedGaussian,
    start: np.ndarray | None,
    config: SamplerConfig,
    rng: np.random.Generator | None = None,
    stream: int = 0,
) -> SampleChain:
    """
    Gibbs chain started at `start` (eta coordinates, feasible).

    Gibbs never rejects; coordinates whose conditional interval has
    collapsed below 1e-14 keep their value and are counted in
    `warnings["skipped_coordinates"]`.
    """
    rng = rng or make_rng(config.seed, stream)
    whitened = WhitenedTarget(target)
    if whitened.rank == 0:
        return degenerate_chain(whitened, config, stream)

    z0 = whitened.start(start)
    matrix = whitened.matrix
    columns = [matrix[:, j] for j in range(whitened.rank)]
    slack = whitened.slack(z0) if whitened.n_walls else np.zeros(0)
    # Rounding can leave a start a hair outside a wall
    np.maximum(slack, 0.0, out=slack)
    counters = {"skipped_coordinates": 0}

    def scan(z: np.ndarray) -> np.ndarray:
        nonlocal slack
        z = z.copy()
        for j, column in enumerate(columns):
            lo, hi = conditional_interval(column, slack, z[j])
            if hi - lo < COLLAPSED_INTERVAL:
                counters["skipped_coordinates"] += 1
                continue
            new = standard_truncated(lo, hi, rng)
            if whitened.n_walls:
                slack = slack + column * (new - z[j])
                np.maximum(slack, 0.0, out=slack)
            z[j] = new
        return z

    states, seconds = record_chain(scan, z0, config)
    n_scans = config.burn_in + config.n_samples * config.thinning
    if counters["skipped_coordinates"]:
        logger.warning(
            f"Gibbs skipped {counters['skipped_coordinates']} coordinate updates "
            "with a collapsed conditional interval"
        )
    chain = finish_chain(
        whitened,
        states,
        seconds,
        whitened.to_eta(z0),
        config,
        accepted=n_scans,
        proposed=n_scans,
        stream=stream,
        warnings=counters,
    )
    logger.info(f"Gibbs finished: {chain.n_draws} draws in {seconds:.3g}s")
    return chain
