"""
Ready-made problems: the 1D toy profiles, the two synthetic 2D surfaces,
sampler benchmark targets and the bounded Matern simulation study.
"""

import logging
import time
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np
import pandas as pd
from scipy.special import ndtr
from tqdm import tqdm

from src.basis import KnotGrid, evaluate, interp_matrix
from src.constraints import (
    ConstraintKind,
    IntervalPiece,
    LinearConstraintSystem,
    bounds_constraint,
    convexity_constraint,
    interval_constraints,
    monotonicity_2d,
    monotonicity_constraint,
    stack,
)
from src.design import maximin_lhs
from src.diagnostics import ess_report, informative_points, pva, q2
from src.errors import ConstrainedGPError, EstimationFailedError, InvalidArgumentError
from src.kernels import KernelFamily, KernelParams, gram
from src.likelihood import EstimationMethod, ParamDomain, maximize, microergodic_ratio
from src.model import ConstrainedGPModel
from src.orthant import OrthantConfig
from src.posterior import TruncatedGaussian
from src.samplers import SamplerConfig, SamplerKind, run_sampler

logger = logging.getLogger(__name__)

TOY_KERNEL = KernelParams(KernelFamily.SE, 1.0, (0.2,))
TOY_KERNEL_2D = KernelParams(KernelFamily.SE, 1.0, (0.2, 0.2))
PEAK_LOCATION = 0.4
PEAK_VALUE = 0.9


def normal_cdf_profile(x):
    """Phi((x - 0.5) / 0.2): bounded in [0, 1] and non-decreasing."""
    return ndtr((np.asarray(x, dtype=float) - 0.5) / 0.2)


def square(x):
    return np.asarray(x, dtype=float) ** 2


def step_response(x):
    """Rises monotonically to 0.9 at x = 0.4, then rings inside [0.7, 0.9]."""
    x = np.asarray(x, dtype=float)
    rising = PEAK_VALUE * (1.0 - (1.0 - x / PEAK_LOCATION) ** 2)
    ringing = PEAK_VALUE - 0.1 + 0.1 * np.cos(6.0 * np.pi * (x - PEAK_LOCATION))
    return np.where(x <= PEAK_LOCATION, rising, ringing)


def oscillating_surface(x):
    """-1/2 [sin(9 x1) - cos(9 x2)], bounded in [-1, 1]."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    return -0.5 * (np.sin(9.0 * x[:, 0]) - np.cos(9.0 * x[:, 1]))


def arctan_surface(x):
    """arctan(5 x1) + arctan(x2), non-decreasing along both inputs."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    return np.arctan(5.0 * x[:, 0]) + np.arctan(x[:, 1])


@dataclass(frozen=True)
class ToyProblem:
    function: Callable
    design: tuple[float, ...]
    constraints: Callable[[KnotGrid], LinearConstraintSystem]
    params: KernelParams = TOY_KERNEL


def _cdf_system(kinds: Sequence[str]) -> Callable[[KnotGrid], LinearConstraintSystem]:
    def build(grid: KnotGrid) -> LinearConstraintSystem:
        systems = []
        if "bounds" in kinds:
            systems.append(bounds_constraint(grid.size, 0.0, 1.0))
        if "monotone" in kinds:
            systems.append(monotonicity_constraint(grid.size))
        if "convex" in kinds:
            systems.append(convexity_constraint(grid.size, grid.knots[0]))
        return stack(systems)

    return build


def _step_response_system(grid: KnotGrid) -> LinearConstraintSystem:
    return interval_constraints(
        grid,
        [
            IntervalPiece(
                0.0, PEAK_LOCATION, (ConstraintKind.BOUNDS, ConstraintKind.MONOTONE), 0.0, 1.0
            ),
            IntervalPiece(PEAK_LOCATION, 1.0, (ConstraintKind.BOUNDS,), 0.0, 1.0),
        ],
    )


CDF_DESIGN = (0.1, 0.25, 0.4, 0.5, 0.6, 0.75, 0.9)
SQUARE_DESIGN = (0.0, 0.3, 0.6, 0.9)
STEP_DESIGN = (0.0, 0.1, 0.2, 0.4, 0.55, 0.7, 0.85, 1.0)

TOY_PROBLEMS: dict[str, ToyProblem] = {
    "bounded": ToyProblem(normal_cdf_profile, CDF_DESIGN, _cdf_system(["bounds"])),
    "monotone": ToyProblem(normal_cdf_profile, CDF_DESIGN, _cdf_system(["monotone"])),
    "bounded_monotone": ToyProblem(
        normal_cdf_profile, CDF_DESIGN, _cdf_system(["bounds", "monotone"])
    ),
    "square": ToyProblem(square, SQUARE_DESIGN, _cdf_system(["bounds", "monotone", "convex"])),
    "step_response": ToyProblem(step_response, STEP_DESIGN, _step_response_system),
}


def toy_model(name: str, n_knots: int = 100) -> ConstrainedGPModel:
    """1D toy problem interpolated on `n_knots` regular knots."""
    if name not in TOY_PROBLEMS:
        raise InvalidArgumentError(f"unknown toy problem {name!r}; choose from {sorted(TOY_PROBLEMS)}")
    problem = TOY_PROBLEMS[name]
    grid = KnotGrid.regular(n_knots)
    design = np.asarray(problem.design).reshape(-1, 1)
    return ConstrainedGPModel(
        problem.params, grid, problem.constraints(grid), design, problem.function(design[:, 0])
    )


def surface_model(
    name: str, n_train: int = 20, knots: tuple[int, int] = (15, 15), seed: int = 0
) -> ConstrainedGPModel:
    """2D toy surface on a maximin Latin hypercube design: `bounded` or `monotone`."""
    grid = KnotGrid.regular(knots)
    design = maximin_lhs(n_train, 2, seed=seed)
    if name == "bounded":
        system = bounds_constraint(grid.size, -1.0, 1.0)
        y = oscillating_surface(design)
    elif name == "monotone":
        system = monotonicity_2d(grid)
        y = arctan_surface(design)
    else:
        raise InvalidArgumentError(f"unknown surface {name!r}; choose 'bounded' or 'monotone'")
    return ConstrainedGPModel(TOY_KERNEL_2D, grid, system, design, y)


def benchmark(
    targets: Sequence[str],
    samplers: Sequence[SamplerConfig],
    n_knots: int = 30,
    progress: bool = True,
) -> pd.DataFrame:
    """
    One row per (target, sampler): the sampler settings, CPU time, ESS
    quantiles, mvESS and TN-ESS.

    Cells whose sampler fails (rejection cap, stuck chain) are reported with
    empty statistics and the error in `status`.
    """
    rows = []
    cells = [(target, config) for target in targets for config in samplers]
    for target, config in tqdm(cells, desc="benchmark", disable=not progress):
        model = toy_model(target, n_knots=n_knots)
        row = {
            "target": target,
            "sampler": config.kind.value,
            "n_samples": config.n_samples,
            "burn_in": config.burn_in,
            "thinning": config.thinning,
            "step_scale": config.step_scale,
            "travel_time": config.travel_time,
            "max_bounces": config.max_bounces,
            "rejection_cap": config.cap,
        }
        model.solve_map()
        started = time.process_time()
        try:
            chain = model.sample(config)[0]
            report = ess_report(chain)
        except ConstrainedGPError as exc:
            logger.warning(f"{config.kind.value} on {target}: {exc}")
            row.update(cpu_seconds=None, q10=None, q50=None, q90=None, mv_ess=None, tn_ess=None)
            row["status"] = type(exc).__name__
        else:
            cpu = time.process_time() - started
            row.update(
                cpu_seconds=cpu,
                q10=report.q10,
                q50=report.q50,
                q90=report.q90,
                mv_ess=report.mv_ess,
                tn_ess=report.q10 / cpu if cpu > 0 else None,
                status="ok",
            )
        rows.append(row)
    return pd.DataFrame(rows)


@dataclass(frozen=True)
class StudyConfig:
    """Bounded Matern simulation study settings"""

    n_replications: int = 20
    n_train: int = 10
    n_test: int = 50
    n_knots: int = 50
    truth_knots: int = 100
    lower: float = -1.0
    upper: float = 1.0
    truth: KernelParams = KernelParams(KernelFamily.MATERN52, 1.0, (0.2,))
    domain: ParamDomain = field(
        default_factory=lambda: ParamDomain(KernelFamily.MATERN52, (1e-3, 2.0), ((0.04, 0.4),))
    )
    methods: tuple[EstimationMethod, ...] = (EstimationMethod.MLE, EstimationMethod.CMLE)
    orthant: OrthantConfig = OrthantConfig(n_draws=2000)
    sampler: SamplerConfig = SamplerConfig(kind=SamplerKind.HMC, n_samples=500, burn_in=100)
    seed: int = 0


def bounded_prior_paths(
    params: KernelParams,
    grid: KnotGrid,
    n_paths: int,
    lower: float,
    upper: float,
    seed: int = 0,
    thinning: int = 20,
) -> np.ndarray:
    """(n_paths, M) knot vectors of the prior restricted to [lower, upper], by HMC."""
    if not lower < 0 < upper:
        raise InvalidArgumentError("prior paths start at zero, so the bounds must contain it")
    target = TruncatedGaussian(
        mean=np.zeros(grid.size),
        cov=gram(params, grid.points()).values,
        lower=np.full(grid.size, lower),
        upper=np.full(grid.size, upper),
    )
    config = SamplerConfig(
        kind=SamplerKind.HMC, n_samples=n_paths, seed=seed, burn_in=100, thinning=thinning
    )
    return run_sampler(target, np.zeros(grid.size), config).draws


def run_study(study: StudyConfig, progress: bool = True) -> pd.DataFrame:
    """
    Simulate bounded paths from the true kernel, estimate its parameters on
    regular training points, predict at regular test points by HMC and score
    the predictions. One row per (replication, method); `truth` rows use the
    true parameters.
    """
    truth_grid = KnotGrid.regular(study.truth_knots)
    grid = KnotGrid.regular(study.n_knots)
    system = bounds_constraint(grid.size, study.lower, study.upper)
    paths = bounded_prior_paths(
        study.truth, truth_grid, study.n_replications, study.lower, study.upper, study.seed
    )
    x_train = np.linspace(0.0, 1.0, study.n_train).reshape(-1, 1)
    x_test = np.linspace(0.0, 1.0, study.n_test).reshape(-1, 1)
    phi = interp_matrix(grid, x_train)

    rows = []
    for replication in tqdm(range(study.n_replications), desc="study", disable=not progress):
        y_train = evaluate(truth_grid, paths[replication], x_train)
        z_test = evaluate(truth_grid, paths[replication], x_test)
        seed = study.seed + replication
        candidates = [("truth", study.truth, None)]
        for method in study.methods:
            try:
                result = maximize(
                    method,
                    study.domain,
                    grid,
                    phi,
                    y_train,
                    system=system,
                    orthant=replace(study.orthant, seed=seed),
                    seed=seed,
                    progress=False,
                )
                candidates.append((method.value, result.params, result.objective))
            except EstimationFailedError as exc:
                logger.warning(f"Replication {replication}: {exc}")
                rows.append({"replication": replication, "method": method.value, "status": "failed"})

        for label, params, objective in candidates:
            row = {
                "replication": replication,
                "method": label,
                "variance": params.variance,
                "lengthscale": params.lengthscales[0],
                "log_ratio": float(np.log(microergodic_ratio(params))),
                "objective": objective,
            }
            try:
                model = ConstrainedGPModel(params, grid, system, x_train, y_train)
                chains = model.sample(replace(study.sampler, seed=seed))
                prediction = model.predict(x_test, chains)
                row["q2"] = q2(z_test, prediction.mean)
                spread = informative_points(prediction.variance)
                row["pva"] = pva(z_test[spread], prediction.mean[spread], prediction.variance[spread])
                row["status"] = "ok"
            except ConstrainedGPError as exc:
                logger.warning(f"Replication {replication}, {label}: {exc}")
                row["status"] = type(exc).__name__
            rows.append(row)
    return pd.DataFrame(rows)
