"""
Shared sampler configuration, chain container and the whitened view of a
truncated Gaussian target.

All samplers work on z with eta = center + loadings @ z and z ~ N(0, I)
restricted to the polyhedron {A z >= b} built from the finite bounds.
"""

import logging
import time
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Callable

import numpy as np
import pandas as pd

from src.constraints import LinearConstraintSystem
from src.errors import InvalidArgumentError, LowAcceptanceError
from src.map_solver import max_margin_point
from src.posterior import TruncatedGaussian, back_solve

logger = logging.getLogger(__name__)

DEFAULT_BURN_IN = 1000
DEFAULT_TRAVEL_TIME = np.pi / 2
DEFAULT_MAX_BOUNCES = 10_000
DEFAULT_RSM_CAP = 2_000_000
DEFAULT_MH_CAP = 100_000
FEASIBILITY_TOL = 1e-9
# Fraction of the way towards the max-margin point used to leave a wall
INTERIOR_NUDGE = 1e-4


class SamplerKind(str, Enum):
    RSM = "RSM"
    GIBBS = "Gibbs"
    MH = "MH"
    HMC = "HMC"


@dataclass(frozen=True)
class SamplerConfig:
    """
    Settings shared by the four samplers.

    `rejection_cap` bounds the total number of RSM proposals and the number
    of consecutive MH rejections; None picks the per-sampler default.
    """

    kind: SamplerKind = SamplerKind.HMC
    n_samples: int = 1000
    seed: int = 0
    burn_in: int = DEFAULT_BURN_IN
    thinning: int = 1
    step_scale: float = 1.0
    travel_time: float = DEFAULT_TRAVEL_TIME
    max_bounces: int = DEFAULT_MAX_BOUNCES
    rejection_cap: int | None = None

    def __post_init__(self):
        object.__setattr__(self, "kind", SamplerKind(self.kind))
        if self.n_samples < 1:
            raise InvalidArgumentError(f"n_samples must be at least 1, got {self.n_samples}")
        if self.thinning < 1:
            raise InvalidArgumentError(f"thinning must be at least 1, got {self.thinning}")
        if self.burn_in < 0:
            raise InvalidArgumentError(f"burn_in must be nonnegative, got {self.burn_in}")
        if not self.step_scale > 0:
            raise InvalidArgumentError(f"step_scale must be positive, got {self.step_scale}")
        if not self.travel_time > 0:
            raise InvalidArgumentError(f"travel_time must be positive, got {self.travel_time}")
        if self.max_bounces < 1:
            raise InvalidArgumentError(f"max_bounces must be positive, got {self.max_bounces}")
        if self.rejection_cap is not None and self.rejection_cap < 1:
            raise InvalidArgumentError(f"rejection_cap must be positive, got {self.rejection_cap}")

    @property
    def cap(self) -> int:
        if self.rejection_cap is not None:
            return self.rejection_cap
        return DEFAULT_RSM_CAP if self.kind is SamplerKind.RSM else DEFAULT_MH_CAP

    def with_kind(self, kind: SamplerKind | str) -> "SamplerConfig":
        return replace(self, kind=SamplerKind(kind))

    def to_dict(self) -> dict:
        return {
            "kind": self.kind.value,
            "n_samples": self.n_samples,
            "seed": self.seed,
            "burn_in": self.burn_in,
            "thinning": self.thinning,
            "step_scale": self.step_scale,
            "travel_time": self.travel_time,
            "max_bounces": self.max_bounces,
            "rejection_cap": self.cap,
        }


@dataclass(frozen=True, eq=False)
class SampleChain:
    """Draws of eta (one row per stored state) with acceptance and timing data"""

    draws: np.ndarray
    accepted: int
    proposed: int
    wall_seconds: float
    start_state: np.ndarray
    config: SamplerConfig
    stream: int = 0
    warnings: dict = field(default_factory=dict)
    xi: np.ndarray | None = None

    @property
    def n_draws(self) -> int:
        return self.draws.shape[0]

    @property
    def acceptance_rate(self) -> float:
        return self.accepted / self.proposed if self.proposed else 0.0

    def with_xi(self, system: LinearConstraintSystem) -> "SampleChain":
        """Attach the knot vectors solving Lambda xi = eta for every draw."""
        if self.n_draws == 0:
            return replace(self, xi=np.zeros((0, system.size)))
        return replace(self, xi=back_solve(system, self.draws))

    def to_frame(self, coefficients: bool = True) -> pd.DataFrame:
        """One row per draw; columns xi_1..xi_M (or eta_1..eta_q)."""
        if coefficients:
            if self.xi is None:
                raise InvalidArgumentError("chain has no back-solved xi draws")
            values, prefix = self.xi, "xi"
        else:
            values, prefix = self.draws, "eta"
        columns = [f"{prefix}_{j + 1}" for j in range(values.shape[1])]
        return pd.DataFrame(values, columns=columns)

    def metadata(self) -> dict:
        return {
            "sampler": self.config.kind.value,
            "config": self.config.to_dict(),
            "stream": self.stream,
            "n_draws": self.n_draws,
            "accepted": self.accepted,
            "proposed": self.proposed,
            "acceptance_rate": self.acceptance_rate,
            "warnings": dict(self.warnings),
            "start_state": self.start_state.tolist(),
        }


class WhitenedTarget:
    """z-space view of a TruncatedGaussian"""

    def __init__(self, target: TruncatedGaussian):
        self.target = target
        factor = target.factor()
        walls = target.whitened()
        self.center = factor.center
        self.loadings = factor.loadings
        self.eigenvalues = factor.eigenvalues
        self.matrix = walls.matrix
        self.offset = walls.offset
        self.rank = factor.rank

    @property
    def n_walls(self) -> int:
        return self.matrix.shape[0]

    def slack(self, z: np.ndarray) -> np.ndarray:
        return self.matrix @ z - self.offset

    def is_feasible(self, z: np.ndarray, tol: float = 0.0) -> bool:
        return self.n_walls == 0 or bool(np.all(self.slack(z) >= -tol))

    def to_eta(self, z: np.ndarray) -> np.ndarray:
        return self.center + np.asarray(z) @ self.loadings.T

    def to_z(self, eta: np.ndarray) -> np.ndarray:
        """Reduced coordinates of eta; loadings have orthogonal columns."""
        eta = np.asarray(eta, dtype=float)
        if eta.shape != self.center.shape:
            raise InvalidArgumentError(
                f"state has shape {eta.shape}, target dimension is {self.center.size}"
            )
        return (self.loadings.T @ (eta - self.center)) / self.eigenvalues

    def start(self, eta: np.ndarray | None, interior: bool = False) -> np.ndarray:
        """
        Map a start state to z, checking feasibility.

        With `interior` the point is moved a short way towards the
        max-margin point so that no wall is active.
        """
        if eta is None:
            if self.n_walls == 0:
                return np.zeros(self.rank)
            z, _ = max_margin_point(self.matrix, self.offset)
            return z
        if not self.target.contains(eta, tol=1e-7):
            raise InvalidArgumentError("start state violates the target bounds")
        z = self.to_z(eta)
        if not self.is_feasible(z, tol=1e-7):
            raise InvalidArgumentError("start state violates the target bounds")
        if not interior or self.n_walls == 0:
            return z
        slack = self.slack(z)
        if slack.min() > 1e-10:
            return z
        center, margin = max_margin_point(self.matrix, self.offset)
        if margin <= 0:
            raise InvalidArgumentError("feasible set has an empty interior")
        logger.debug(f"Start state on a wall (slack {slack.min():.3g}); nudging inwards")
        return z + INTERIOR_NUDGE * (center - z)


def record_chain(
    step: Callable[[np.ndarray], np.ndarray],
    z0: np.ndarray,
    config: SamplerConfig,
) -> tuple[np.ndarray, float]:
    """
    Run burn-in then keep every `thinning`-th state; returns (states, seconds).

    A LowAcceptanceError raised by `step` is re-raised with the states
    recorded so far as its `partial_chain`.
    """
    started = time.perf_counter()
    z = z0
    states = np.empty((config.n_samples, z0.size))
    recorded = 0
    try:
        for _ in range(config.burn_in):
            z = step(z)
        for i in range(config.n_samples):
            for _ in range(config.thinning):
                z = step(z)
            states[i] = z
            recorded = i + 1
    except LowAcceptanceError as exc:
        exc.partial_chain = states[:recorded]
        raise
    return states, time.perf_counter() - started


def finish_chain(
    whitened: WhitenedTarget,
    states: np.ndarray,
    seconds: float,
    start_eta: np.ndarray,
    config: SamplerConfig,
    accepted: int,
    proposed: int,
    stream: int,
    warnings: dict | None = None,
) -> SampleChain:
    """Map z states to eta and check every draw against the bounds."""
    warnings = dict(warnings or {})
    draws = whitened.to_eta(states)
    target = whitened.target
    scale = np.maximum(1.0, np.abs(draws))
    outside = np.any(
        (draws < target.lower - FEASIBILITY_TOL * scale)
        | (draws > target.upper + FEASIBILITY_TOL * scale),
        axis=1,
    )
    if np.any(outside):
        warnings["infeasible_draws"] = int(outside.sum())
        logger.warning(f"{int(outside.sum())} draws exceed the bounds beyond tolerance")
    return SampleChain(
        draws=draws,
        accepted=accepted,
        proposed=proposed,
        wall_seconds=seconds,
        start_state=np.asarray(start_eta, dtype=float),
        config=config,
        stream=stream,
        warnings=warnings,
    )


def degenerate_chain(
    whitened: WhitenedTarget, config: SamplerConfig, stream: int
) -> SampleChain:
    """Chain of a target whose law is a single point."""
    draws = np.tile(whitened.center, (config.n_samples, 1))
    return SampleChain(
        draws=draws,
        accepted=config.n_samples,
        proposed=config.n_samples,
        wall_seconds=0.0,
        start_state=whitened.center.copy(),
        config=config,
        stream=stream,
    )
