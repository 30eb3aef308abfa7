"""Random-walk Metropolis-Hastings on the whitened target."""

import logging
import math

import numpy as np

from src.errors import StuckChainError
from src.posterior import TruncatedGaussian
from src.samplers.base import (
    SampleChain,
    SamplerConfig,
    WhitenedTarget,
    degenerate_chain,
    finish_chain,
    record_chain,
)
from src.utils import make_rng

logger = logging.getLogger(__name__)


def run_mh(
    target: TruncatedGaussian,
    start: np.ndarray | None,
    config: SamplerConfig,
    rng: np.random.Generator | None = None,
    stream: int = 0,
) -> SampleChain:
    """
    Metropolis chain with proposals N(z, step_scale * I) in whitened
    coordinates, i.e. N(eta, step_scale * Cov) on the target.

    Proposals outside the bounds have density zero and are rejected.

    Raises:
        StuckChainError: after `config.cap` consecutive rejections
    """
    rng = rng or make_rng(config.seed, stream)
    whitened = WhitenedTarget(target)
    if whitened.rank == 0:
        return degenerate_chain(whitened, config, stream)

    z0 = whitened.start(start)
    step_sd = math.sqrt(config.step_scale)
    cap = config.cap
    stats = {"accepted": 0, "proposed": 0, "streak": 0}

    def step(z: np.ndarray) -> np.ndarray:
        proposal = z + step_sd * rng.standard_normal(z.size)
        log_u = math.log(rng.random() or np.finfo(float).tiny)
        stats["proposed"] += 1
        log_ratio = 0.5 * (z @ z - proposal @ proposal)
        if log_u <= log_ratio and whitened.is_feasible(proposal):
            stats["accepted"] += 1
            stats["streak"] = 0
            return proposal
        stats["streak"] += 1
        if stats["streak"] >= cap:
            raise StuckChainError(
                f"MH rejected {cap} consecutive proposals "
                f"(step_scale {config.step_scale})"
            )
        return z

    try:
        states, seconds = record_chain(step, z0, config)
    except StuckChainError as exc:
        exc.partial_chain = finish_chain(
            whitened,
            exc.partial_chain,
            0.0,
            whitened.to_eta(z0),
            config,
            accepted=stats["accepted"],
            proposed=stats["proposed"],
            stream=stream,
        )
        raise
    chain = finish_chain(
        whitened,
        states,
        seconds,
        whitened.to_eta(z0),
        config,
        accepted=stats["accepted"],
        proposed=stats["proposed"],
        stream=stream,
    )
    logger.info(
        f"MH finished: {chain.n_draws} draws, acceptance rate {chain.acceptance_rate:.3g}"
    )
    return chain
