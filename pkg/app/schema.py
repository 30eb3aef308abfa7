from typing import List, Literal, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from src.basis import InputScaler, KnotGrid
from src.constraints import (
    IntervalPiece,
    LinearConstraintSystem,
    bounds_constraint,
    convexity_constraint,
    custom_constraint,
    interval_constraints,
    monotonicity_2d,
    monotonicity_constraint,
    reduced_bounded_monotone,
    stack,
    vacuous_constraint,
)
from src.experiments import StudyConfig
from src.kernels import KernelFamily, KernelParams
from src.likelihood import DEFAULT_MAX_EVALUATIONS, DEFAULT_STARTS, EstimationMethod, ParamDomain
from src.map_solver import DEFAULT_KKT_TOL, DEFAULT_MAX_ITER, MapOptions
from src.orthant import DEFAULT_N_DRAWS, OrthantConfig
from src.samplers import SamplerConfig, SamplerKind
from src.samplers.base import DEFAULT_BURN_IN, DEFAULT_MAX_BOUNCES, DEFAULT_TRAVEL_TIME


class StrictModel(BaseModel):
    model_config = ConfigDict(extra="forbid")


def _bound(value: Optional[float], default: float) -> float:
    return default if value is None else float(value)


class DataSpec(StrictModel):
    train: Optional[str] = Field(None, description="CSV with columns x1[,x2],y")
    predict: Optional[str] = Field(None, description="CSV with columns x1[,x2]")
    test: Optional[str] = Field(None, description="CSV with columns x1[,x2],y for evaluation")
    model: Optional[str] = Field(None, description="Model artifact written by `fit`")
    chain: Optional[str] = Field(None, description="Chain CSV written by `sample`")


class KernelSpec(StrictModel):
    family: KernelFamily = KernelFamily.SE
    variance: float = Field(1.0, gt=0)
    lengthscales: List[float] = Field(default_factory=lambda: [0.2], min_length=1, max_length=2)

    def to_params(self) -> KernelParams:
        return KernelParams(self.family, self.variance, tuple(self.lengthscales))


class KnotSpec(StrictModel):
    counts: Optional[List[int]] = Field(None, description="m, or [m1, m2]")
    knots: Optional[List[List[float]]] = Field(None, description="Explicit knots per axis")

    @model_validator(mode="after")
    def one_source(self):
        if (self.counts is None) == (self.knots is None):
            raise ValueError("give exactly one of `counts` or `knots`")
        return self

    def to_grid(self) -> KnotGrid:
        if self.knots is not None:
            return KnotGrid(tuple(np.asarray(k, dtype=float) for k in self.knots))
        return KnotGrid.regular(self.counts)


class IntervalSpec(StrictModel):
    start: float
    end: float
    kinds: List[Literal["bounds", "monotone", "convex"]]
    lower: Optional[float] = None
    upper: Optional[float] = None

    def to_piece(self) -> IntervalPiece:
        return IntervalPiece(
            self.start,
            self.end,
            tuple(self.kinds),
            _bound(self.lower, -np.inf),
            _bound(self.upper, np.inf),
        )


class ConstraintSpec(StrictModel):
    """One builder; the listed builders are stacked in order."""

    kind: Literal[
        "bounds", "monotone", "convex", "bounded_monotone", "monotone_2d", "intervals", "custom"
    ]
    lower: Optional[float] = None
    upper: Optional[float] = None
    axes: List[int] = Field(default_factory=lambda: [0, 1])
    intervals: Optional[List[IntervalSpec]] = None
    matrix: Optional[List[List[float]]] = None
    lower_rows: Optional[List[Optional[float]]] = None
    upper_rows: Optional[List[Optional[float]]] = None

    @model_validator(mode="after")
    def needs_payload(self):
        if self.kind == "intervals" and not self.intervals:
            raise ValueError("`intervals` constraints need at least one interval")
        if self.kind == "custom" and not self.matrix:
            raise ValueError("`custom` constraints need a `matrix`")
        return self

    def build(self, grid: KnotGrid) -> LinearConstraintSystem:
        size = grid.size
        lower, upper = _bound(self.lower, -np.inf), _bound(self.upper, np.inf)
        match self.kind:
            case "bounds":
                return bounds_constraint(size, lower, upper)
            case "monotone":
                return monotonicity_constraint(size)
            case "convex":
                return convexity_constraint(size, grid.knots[0] if grid.dim == 1 else None)
            case "bounded_monotone":
                return reduced_bounded_monotone(size, lower, upper)
            case "monotone_2d":
                return monotonicity_2d(grid, self.axes)
            case "intervals":
                return interval_constraints(grid, [i.to_piece() for i in self.intervals])
            case "custom":
                rows = len(self.matrix)
                row_lower = self.lower_rows or [self.lower] * rows
                row_upper = self.upper_rows or [self.upper] * rows
                return custom_constraint(
                    self.matrix,
                    [_bound(v, -np.inf) for v in row_lower],
                    [_bound(v, np.inf) for v in row_upper],
                )


class InputBox(StrictModel):
    lower: List[float]
    upper: List[float]

    def to_scaler(self) -> InputScaler:
        return InputScaler(np.asarray(self.lower), np.asarray(self.upper))


class SamplerSpec(StrictModel):
    kind: SamplerKind = SamplerKind.HMC
    n_samples: int = Field(1000, ge=1)
    burn_in: int = Field(DEFAULT_BURN_IN, ge=0)
    thinning: int = Field(1, ge=1)
    step_scale: float = Field(1.0, gt=0)
    travel_time: float = Field(DEFAULT_TRAVEL_TIME, gt=0)
    max_bounces: int = Field(DEFAULT_MAX_BOUNCES, ge=1)
    rejection_cap: Optional[int] = Field(None, ge=1)
    n_chains: int = Field(1, ge=1)

    def to_config(self, seed: int) -> SamplerConfig:
        return SamplerConfig(
            kind=self.kind,
            n_samples=self.n_samples,
            seed=seed,
            burn_in=self.burn_in,
            thinning=self.thinning,
            step_scale=self.step_scale,
            travel_time=self.travel_time,
            max_bounces=self.max_bounces,
            rejection_cap=self.rejection_cap,
        )


class EstimationSpec(StrictModel):
    method: EstimationMethod = EstimationMethod.MLE
    family: Optional[KernelFamily] = None
    variance: List[float] = Field(default_factory=lambda: [1e-3, 2.0], min_length=2, max_length=2)
    lengthscales: List[List[float]] = Field(default_factory=lambda: [[0.04, 0.4]])
    n_starts: int = Field(DEFAULT_STARTS, ge=1)
    max_evaluations: int = Field(DEFAULT_MAX_EVALUATIONS, ge=1)
    orthant_draws: int = Field(DEFAULT_N_DRAWS, ge=2)

    def to_domain(self, family: KernelFamily) -> ParamDomain:
        return ParamDomain(
            self.family or family,
            tuple(self.variance),
            tuple(tuple(interval) for interval in self.lengthscales),
            n_starts=self.n_starts,
            max_evaluations=self.max_evaluations,
        )

    def to_orthant(self, seed: int) -> OrthantConfig:
        return OrthantConfig(n_draws=self.orthant_draws, seed=seed)


class PredictionSpec(StrictModel):
    counts: List[int] = Field(default_factory=lambda: [101], description="Regular grid per axis")


class MapSpec(StrictModel):
    max_iter: int = Field(DEFAULT_MAX_ITER, ge=1)
    kkt_tol: float = Field(DEFAULT_KKT_TOL, gt=0)

    def to_options(self) -> MapOptions:
        return MapOptions(max_iter=self.max_iter, kkt_tol=self.kkt_tol)


class BenchmarkSpec(StrictModel):
    targets: List[Literal["bounded", "monotone", "bounded_monotone", "square", "step_response"]] = (
        Field(default_factory=lambda: ["bounded", "monotone", "bounded_monotone"])
    )
    samplers: List[SamplerSpec] = Field(
        default_factory=lambda: [SamplerSpec(kind=kind) for kind in SamplerKind]
    )
    n_knots: int = Field(30, ge=2)


class StudySpec(StrictModel):
    n_replications: int = Field(20, ge=1)
    n_train: int = Field(10, ge=2)
    n_test: int = Field(50, ge=2)
    n_knots: int = Field(50, ge=2)
    truth_knots: int = Field(100, ge=2)
    bound: float = Field(1.0, gt=0)
    variance: float = Field(1.0, gt=0)
    lengthscale: float = Field(0.2, gt=0)
    methods: List[EstimationMethod] = Field(
        default_factory=lambda: [EstimationMethod.MLE, EstimationMethod.CMLE]
    )
    estimation: EstimationSpec = Field(
        default_factory=lambda: EstimationSpec(family=KernelFamily.MATERN52, orthant_draws=2000)
    )
    n_samples: int = Field(500, ge=1)
    burn_in: int = Field(100, ge=0)

    def to_config(self, seed: int) -> StudyConfig:
        return StudyConfig(
            n_replications=self.n_replications,
            n_train=self.n_train,
            n_test=self.n_test,
            n_knots=self.n_knots,
            truth_knots=self.truth_knots,
            lower=-self.bound,
            upper=self.bound,
            truth=KernelParams(KernelFamily.MATERN52, self.variance, (self.lengthscale,)),
            domain=self.estimation.to_domain(KernelFamily.MATERN52),
            methods=tuple(self.methods),
            orthant=self.estimation.to_orthant(seed),
            sampler=SamplerConfig(
                kind=SamplerKind.HMC, n_samples=self.n_samples, seed=seed, burn_in=self.burn_in
            ),
            seed=seed,
        )


class RunConfig(StrictModel):
    """Complete run configuration; every section has defaults."""

    data: DataSpec = Field(default_factory=DataSpec)
    kernel: KernelSpec = Field(default_factory=KernelSpec)
    knots: KnotSpec = Field(default_factory=lambda: KnotSpec(counts=[100]))
    constraints: List[ConstraintSpec] = Field(default_factory=list)
    input_box: Optional[InputBox] = None
    sampler: SamplerSpec = Field(default_factory=SamplerSpec)
    estimation: EstimationSpec = Field(default_factory=EstimationSpec)
    prediction: PredictionSpec = Field(default_factory=PredictionSpec)
    map: MapSpec = Field(default_factory=MapSpec)
    benchmark: BenchmarkSpec = Field(default_factory=BenchmarkSpec)
    study: StudySpec = Field(default_factory=StudySpec)
    seed: Optional[int] = None
    output_dir: Optional[str] = None

    def build_system(self, grid: KnotGrid) -> LinearConstraintSystem:
        if not self.constraints:
            return vacuous_constraint(grid.size)
        return stack([item.build(grid) for item in self.constraints])

    def scaler(self, dim: int) -> InputScaler:
        return self.input_box.to_scaler() if self.input_box else InputScaler.unit(dim)
