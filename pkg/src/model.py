"""
The constrained GP model: kernel, knot grid, constraint system and training
data, with the derived quantities cached on first use.
"""

import logging
from dataclasses import dataclass
from functools import cached_property
from typing import Sequence

import numpy as np
import pandas as pd

from src.basis import InputScaler, KnotGrid, evaluate, interp_matrix
from src.constraints import LinearConstraintSystem
from src.errors import InvalidArgumentError, MalformedInputError
from src.kernels import GramMatrix, KernelParams, gram
from src.map_solver import MapOptions, MapResult, solve_map
from src.posterior import ConditionalGaussian, TruncatedGaussian, condition_on_data, truncated_target
from src.samplers import SampleChain, SamplerConfig, run_chains

logger = logging.getLogger(__name__)

ARTIFACT_VERSION = 1
LOWER_QUANTILE = 0.05
UPPER_QUANTILE = 0.95


@dataclass(frozen=True, eq=False)
class Prediction:
    """Pointwise summaries of the sampled curves (or surfaces)"""

    points: np.ndarray
    mean: np.ndarray
    q05: np.ndarray
    q95: np.ndarray
    variance: np.ndarray
    map: np.ndarray

    def to_frame(self) -> pd.DataFrame:
        frame = pd.DataFrame(
            self.points, columns=[f"x{i + 1}" for i in range(self.points.shape[1])]
        )
        frame["mean"] = self.mean
        frame["q05"] = self.q05
        frame["q95"] = self.q95
        frame["map"] = self.map
        return frame


class ConstrainedGPModel:
    """
    Finite-dimensional GP Y(x) = sum_j xi_j phi_j(x) conditioned on
    Y(x_i) = y_i and l <= Lambda xi <= u.

    Training inputs are given on the original scale; `scaler` maps them to
    the unit box the knots live on.
    """

    def __init__(
        self,
        params: KernelParams,
        grid: KnotGrid,
        system: LinearConstraintSystem,
        design: np.ndarray,
        y: np.ndarray,
        scaler: InputScaler | None = None,
        map_options: MapOptions | None = None,
    ):
        if params.dim != grid.dim:
            raise InvalidArgumentError(
                f"kernel has {params.dim} lengthscales for a {grid.dim}D grid"
            )
        if system.size != grid.size:
            raise InvalidArgumentError(
                f"constraint system acts on {system.size} values, grid has {grid.size} knots"
            )
        self.params = params
        self.grid = grid
        self.system = system.require_full_rank()
        self.scaler = scaler or InputScaler.unit(grid.dim)
        self.design = np.asarray(design, dtype=float).reshape(-1, grid.dim)
        self.y = np.asarray(y, dtype=float).reshape(-1)
        if self.design.shape[0] != self.y.size:
            raise InvalidArgumentError(
                f"{self.design.shape[0]} design points for {self.y.size} observations"
            )
        self.map_options = map_options or MapOptions()
        logger.info(
            f"Model: {params.family.value} kernel, {grid.size} knots, "
            f"{system.n_rows} constraint rows, {self.y.size} observations"
        )

    @property
    def n_obs(self) -> int:
        return self.y.size

    def with_params(self, params: KernelParams) -> "ConstrainedGPModel":
        return ConstrainedGPModel(
            params, self.grid, self.system, self.design, self.y, self.scaler, self.map_options
        )

    @cached_property
    def unit_design(self) -> np.ndarray:
        return self.scaler.to_unit(self.design)

    @cached_property
    def gram(self) -> GramMatrix:
        return gram(self.params, self.grid.points())

    @cached_property
    def phi(self) -> np.ndarray:
        return interp_matrix(self.grid, self.unit_design)

    @cached_property
    def conditional(self) -> ConditionalGaussian:
        return condition_on_data(self.gram, self.phi, self.y)

    @cached_property
    def target(self) -> TruncatedGaussian:
        return truncated_target(self.conditional, self.system)

    @cached_property
    def map_estimate(self) -> MapResult:
        return solve_map(self.gram, self.phi, self.y, self.system, self.map_options)

    def solve_map(self) -> MapResult:
        return self.map_estimate

    def sample(
        self,
        config: SamplerConfig,
        n_chains: int = 1,
        start: np.ndarray | None = None,
    ) -> list[SampleChain]:
        """
        Posterior chains started at the MAP eta (the mode, for RSM), with
        back-solved knot vectors attached.
        """
        if start is None:
            start = self.map_estimate.nu
        chains = run_chains(self.target, start, config, n_chains=n_chains)
        return [chain.with_xi(self.system) for chain in chains]

    def _points(self, points) -> np.ndarray:
        points = np.asarray(points, dtype=float)
        if points.ndim == 2 and points.shape[1] != self.grid.dim:
            raise InvalidArgumentError(
                f"points have {points.shape[1]} inputs, the model has {self.grid.dim}"
            )
        return points.reshape(-1, self.grid.dim)

    def _unit_points(self, points) -> np.ndarray:
        return self.scaler.to_unit(self._points(points))

    def curves(self, xi: np.ndarray, points) -> np.ndarray:
        """Y at `points` (original scale) for one or many knot vectors."""
        return evaluate(self.grid, xi, self._unit_points(points))

    def predict(
        self, points, chains: SampleChain | Sequence[SampleChain] | np.ndarray
    ) -> Prediction:
        """
        Pointwise mean, 5% and 95% quantiles and variance of the sampled
        paths, with the MAP path, at `points` (original scale).

        `chains` may also be a plain (S, M) array of knot vectors.
        """
        if isinstance(chains, np.ndarray):
            chains = np.atleast_2d(chains)
            if chains.size and chains.shape[1] != self.grid.size:
                raise InvalidArgumentError(
                    f"knot vectors have {chains.shape[1]} entries, the grid has {self.grid.size} knots"
                )
            blocks = [chains] if chains.size else []
        else:
            if isinstance(chains, SampleChain):
                chains = [chains]
            blocks = [chain.xi for chain in chains if chain.xi is not None and chain.n_draws]
        if not blocks:
            raise InvalidArgumentError("prediction needs a non-empty chain of knot vectors")
        xi = np.vstack(blocks)
        points = self._points(points)
        paths = self.curves(xi, points)
        variance = paths.var(axis=0, ddof=1) if paths.shape[0] > 1 else np.zeros(paths.shape[1])
        return Prediction(
            points=points,
            mean=paths.mean(axis=0),
            q05=np.quantile(paths, LOWER_QUANTILE, axis=0),
            q95=np.quantile(paths, UPPER_QUANTILE, axis=0),
            variance=variance,
            map=self.curves(self.map_estimate.xi, points),
        )

    def to_artifact(self) -> dict:
        """JSON-ready description; timing is kept out so reruns are byte-identical."""
        return {
            "version": ARTIFACT_VERSION,
            "kernel": self.params.to_dict(),
            "grid": self.grid.to_dict(),
            "scaler": self.scaler.to_dict(),
            "system": self.system.to_dict(),
            "design": self.design.tolist(),
            "y": self.y.tolist(),
            "map_options": {
                "max_iter": self.map_options.max_iter,
                "kkt_tol": self.map_options.kkt_tol,
            },
            "conditional_mean": self.conditional.mean.tolist(),
            "map": self.map_estimate.to_dict(),
        }

    @classmethod
    def from_artifact(cls, data: dict) -> "ConstrainedGPModel":
        try:
            if data.get("version") != ARTIFACT_VERSION:
                raise MalformedInputError(f"unsupported model artifact version {data.get('version')}")
            kernel = data["kernel"]
            params = KernelParams(kernel["family"], kernel["variance"], tuple(kernel["lengthscales"]))
            grid = KnotGrid.from_dict(data["grid"])
            model = cls(
                params,
                grid,
                LinearConstraintSystem.from_dict(data["system"]),
                np.asarray(data["design"], dtype=float).reshape(-1, grid.dim),
                np.asarray(data["y"], dtype=float),
                InputScaler.from_dict(data["scaler"]),
                MapOptions(**data.get("map_options", {})),
            )
        except (KeyError, TypeError) as exc:
            raise MalformedInputError(f"model artifact is missing or has a bad field: {exc}") from exc
        return model
