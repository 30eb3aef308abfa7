"""
Samplers for truncated multivariate normal targets
"""

from .base import SampleChain, SamplerConfig, SamplerKind, WhitenedTarget
from .truncnorm import sample_truncated_1d
from .rsm import run_rsm
from .gibbs import run_gibbs
from .mh import run_mh
from .hmc import harmonic_flow, reflect_velocity, run_hmc
from .runner import run_chains, run_sampler

__all__ = [
    'SampleChain',
    'SamplerConfig',
    'SamplerKind',
    'WhitenedTarget',
    'sample_truncated_1d',
    'run_rsm',
    'run_gibbs',
    'run_mh',
    'run_hmc',
    'harmonic_flow',
    'reflect_velocity',
    'run_chains',
    'run_sampler',
]
