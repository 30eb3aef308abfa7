"""
Rejection sampling from the mode.

In whitened coordinates the target is N(0, I) on a polyhedron C. With z*
the point of C closest to the origin (the mode), proposals z* + e with
e ~ N(0, I) are accepted when feasible with probability exp(-z*^T e),
which yields exact iid draws.
"""

import logging
import time

import numpy as np

from src.errors import LowAcceptanceError
from src.map_solver import project_origin
from src.posterior import TruncatedGaussian
from src.samplers.base import (
    SampleChain,
    SamplerConfig,
    WhitenedTarget,
    degenerate_chain,
    finish_chain,
)
from src.utils import make_rng

logger = logging.getLogger(__name__)

MIN_BATCH = 1024
MAX_BATCH = 1 << 18


def run_rsm(
    target: TruncatedGaussian,
    mode: np.ndarray | None,
    config: SamplerConfig,
    rng: np.random.Generator | None = None,
    stream: int = 0,
) -> SampleChain:
    """
    iid draws from the truncated target.

    `mode` is the target's mode in eta coordinates (Lambda times the MAP
    knot vector); when None it is recomputed in whitened coordinates.

    Raises:
        LowAcceptanceError: when `config.cap` proposals did not yield
            `n_samples` acceptances; carries the partial chain
    """
    rng = rng or make_rng(config.seed, stream)
    whitened = WhitenedTarget(target)
    if whitened.rank == 0:
        return degenerate_chain(whitened, config, stream)

    if mode is None or whitened.n_walls == 0:
        mode_z = project_origin(whitened.matrix, whitened.offset).point
    else:
        mode_z = whitened.start(np.asarray(mode, dtype=float))
    start_eta = whitened.to_eta(mode_z)

    started = time.perf_counter()
    accepted: list[np.ndarray] = []
    n_accepted, proposed = 0, 0
    cap = config.cap
    while n_accepted < config.n_samples and proposed < cap:
        rate = n_accepted / proposed if n_accepted else 0.0
        wanted = config.n_samples - n_accepted
        batch = MIN_BATCH if rate == 0 else int(1.2 * wanted / rate) + 1
        batch = int(min(max(batch, MIN_BATCH), MAX_BATCH, cap - proposed))

        noise = rng.standard_normal((batch, whitened.rank))
        uniforms = rng.random(batch)
        proposals = mode_z + noise
        feasible = np.ones(batch, dtype=bool)
        if whitened.n_walls:
            feasible = np.all(proposals @ whitened.matrix.T >= whitened.offset, axis=1)
        # Clipped at 1 so a slightly inexact mode cannot inflate acceptance
        ratio = np.exp(np.minimum(-(noise @ mode_z), 0.0))
        keep = np.flatnonzero(feasible & (uniforms <= ratio))

        if keep.size >= wanted:
            last = keep[wanted - 1]
            accepted.append(proposals[keep[:wanted]])
            n_accepted += wanted
            proposed += int(last) + 1
        else:
            accepted.append(proposals[keep])
            n_accepted += keep.size
            proposed += batch

    states = np.vstack(accepted) if accepted else np.zeros((0, whitened.rank))
    seconds = time.perf_counter() - started
    chain = finish_chain(
        whitened, states, seconds, start_eta, config, n_accepted, proposed, stream
    )
    if n_accepted < config.n_samples:
        raise LowAcceptanceError(
            f"RSM accepted {n_accepted} of {config.n_samples} draws in {proposed} proposals",
            partial_chain=chain,
        )
    logger.info(
        f"RSM finished: {n_accepted} draws, acceptance rate {chain.acceptance_rate:.3g}"
    )
    return chain
