"""
Exact Hamiltonian Monte Carlo for truncated Gaussians.

For z ~ N(0, I) the Hamiltonian flow is harmonic and solvable in closed form:

    z(t) = v sin t + z cos t,    v(t) = v cos t - z sin t

Each trajectory follows this flow for `travel_time`, reflecting the
velocity specularly whenever it hits a wall a_k^T z >= b_k. The wall-hit
times are the roots of U cos(t - phi) = b_k with U = |(a_k^T v, a_k^T z)|.
There is no Metropolis step: every end point is an exact draw of the chain.
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
from src.utils import make_rng

logger = logging.getLogger(__name__)

# Hits closer than this are the wall just bounced off
MIN_HIT_TIME = 1e-10


def harmonic_flow(z: np.ndarray, v: np.ndarray, t: float) -> tuple[np.ndarray, np.ndarray]:
    """Position and velocity after time t of the unit harmonic oscillator."""
    cos_t, sin_t = np.cos(t), np.sin(t)
    return v * sin_t + z * cos_t, v * cos_t - z * sin_t


def reflect_velocity(v: np.ndarray, normal: np.ndarray) -> np.ndarray:
    """Specular reflection: reverse the component of v along `normal`."""
    return v - 2.0 * (normal @ v) / (normal @ normal) * normal


def first_wall_hit(
    matrix: np.ndarray, offset: np.ndarray, z: np.ndarray, v: np.ndarray
) -> tuple[float, int]:
    """
    Earliest time a wall a_k^T z(t) >= b_k is crossed outwards.

    Returns (inf, -1) when the trajectory stays inside forever.
    """
    along_v = matrix @ v
    along_z = matrix @ z
    amplitude = np.hypot(along_v, along_z)
    reachable = amplitude > np.abs(offset)
    if not reachable.any():
        return np.inf, -1
    phase = np.arctan2(along_v[reachable], along_z[reachable])
    times = np.mod(phase + np.arccos(offset[reachable] / amplitude[reachable]), 2 * np.pi)
    times[times < MIN_HIT_TIME] = np.inf
    best = int(np.argmin(times))
    if not np.isfinite(times[best]):
        return np.inf, -1
    return float(times[best]), int(np.flatnonzero(reachable)[best])


def run_hmc(
    target: TruncatedGaussian,
    start: np.ndarray | None,
    config: SamplerConfig,
    rng: np.random.Generator | None = None,
    stream: int = 0,
) -> SampleChain:
    """
    Exact HMC chain started at `start` (eta coordinates).

    A start on a wall (the usual case for a MAP start) is moved slightly
    inwards. Trajectories exceeding `max_bounces` stop at their last wall
    and are counted in `warnings["truncated_trajectories"]`.
    """
    rng = rng or make_rng(config.seed, stream)
    whitened = WhitenedTarget(target)
    if whitened.rank == 0:
        return degenerate_chain(whitened, config, stream)

    z0 = whitened.start(start, interior=True)
    matrix, offset = whitened.matrix, whitened.offset
    has_walls = whitened.n_walls > 0
    counters = {"truncated_trajectories": 0, "bounces": 0}

    def trajectory(z: np.ndarray) -> np.ndarray:
        v = rng.standard_normal(z.size)
        remaining = config.travel_time
        bounces = 0
        while True:
            hit, wall = (
                first_wall_hit(matrix, offset, z, v) if has_walls else (np.inf, -1)
            )
            if hit >= remaining:
                z, v = harmonic_flow(z, v, remaining)
                break
            z, v = harmonic_flow(z, v, hit)
            v = reflect_velocity(v, matrix[wall])
            remaining -= hit
            bounces += 1
            if bounces >= config.max_bounces:
                counters["truncated_trajectories"] += 1
                break
        counters["bounces"] += bounces
        return z

    states, seconds = record_chain(trajectory, z0, config)
    if counters["truncated_trajectories"]:
        logger.warning(
            f"{counters['truncated_trajectories']} HMC trajectories hit the "
            f"{config.max_bounces}-bounce limit"
        )
    n_trajectories = config.burn_in + config.n_samples * config.thinning
    chain = finish_chain(
        whitened,
        states,
        seconds,
        whitened.to_eta(z0),
        config,
        accepted=n_trajectories,
        proposed=n_trajectories,
        stream=stream,
        warnings=counters,
    )
    logger.info(f"HMC finished: {chain.n_draws} draws in {seconds:.3g}s")
    return chain
