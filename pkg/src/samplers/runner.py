import logging

import numpy as np

from src.errors import InvalidArgumentError
from src.posterior import TruncatedGaussian
from src.samplers.base import SampleChain, SamplerConfig, SamplerKind
from src.samplers.gibbs import run_gibbs
from src.samplers.hmc import run_hmc
from src.samplers.mh import run_mh
from src.samplers.rsm import run_rsm
from src.utils import make_rng

logger = logging.getLogger(__name__)

RUNNERS = {
    SamplerKind.RSM: run_rsm,
    SamplerKind.GIBBS: run_gibbs,
    SamplerKind.MH: run_mh,
    SamplerKind.HMC: run_hmc,
}


def run_sampler(
    target: TruncatedGaussian,
    start: np.ndarray | None,
    config: SamplerConfig,
    stream: int = 0,
) -> SampleChain:
    """Dispatch on `config.kind`; `start` is the mode for RSM."""
    runner = RUNNERS[config.kind]
    return runner(target, start, config, make_rng(config.seed, stream), stream)


def run_chains(
    target: TruncatedGaussian,
    start: np.ndarray | None,
    config: SamplerConfig,
    n_chains: int = 1,
) -> list[SampleChain]:
    """Independent chains on RNG streams 0..n_chains-1 of the same seed."""
    if n_chains < 1:
        raise InvalidArgumentError(f"n_chains must be positive, got {n_chains}")
    chains = []
    for stream in range(n_chains):
        logger.info(f"Running {config.kind.value} chain {stream + 1}/{n_chains}")
        chains.append(run_sampler(target, start, config, stream))
    return chains
