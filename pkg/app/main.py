"""
lineq-gp command line: fit, sample, predict, estimate, benchmark, evaluate, study.

Every command reads a JSON run configuration (see app/schema.py) and writes
its outputs to the output directory. Wall-clock times go to timing.json so the
other outputs are byte-identical across reruns with the same seed.
"""

import argparse
import logging
import os
import sys
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, List, Optional

import numpy as np
import pandas as pd
from dotenv import load_dotenv

from app.artifacts import (
    load_config,
    read_chain,
    read_json,
    read_observations,
    read_points,
    write_frame,
    write_json,
)
from app.schema import RunConfig
from src.basis import KnotGrid, interp_matrix
from src.diagnostics import ess_report, informative_points, prediction_report
from src.errors import (
    ConstrainedGPError,
    InfeasibleProblemError,
    InvalidArgumentError,
    MalformedInputError,
    UndefinedStatisticError,
)
from src.experiments import benchmark, run_study
from src.likelihood import EstimationMethod, maximize
from src.model import ConstrainedGPModel
from src.utils import configure_logging

logger = logging.getLogger(__name__)

MODEL_FILE = "model.json"
CHAIN_FILE = "chain.csv"
TIMING_FILE = "timing.json"


@dataclass(frozen=True)
class RunSettings:
    """Values resolved from flag > config file > environment > default"""

    config: RunConfig
    seed: int
    out_dir: Path
    progress: bool

    def output(self, name: str) -> Path:
        return self.out_dir / name

    def model_path(self) -> Path:
        return Path(self.config.data.model) if self.config.data.model else self.output(MODEL_FILE)

    def chain_path(self) -> Path:
        return Path(self.config.data.chain) if self.config.data.chain else self.output(CHAIN_FILE)


def resolve_settings(args: argparse.Namespace, config: RunConfig) -> RunSettings:
    if args.seed is not None:
        seed = args.seed
    elif config.seed is not None:
        seed = config.seed
    else:
        seed = int(os.getenv("LINEQGP_SEED", "0"))
    out_dir = args.out or config.output_dir or os.getenv("LINEQGP_OUT_DIR", "out")
    return RunSettings(config, seed, Path(out_dir), progress=not args.quiet)


def record_timing(settings: RunSettings, command: str, timing: dict) -> None:
    """Merge this command's timings into timing.json."""
    path = settings.output(TIMING_FILE)
    previous = {}
    if path.is_file():
        try:
            previous = read_json(path)
        except MalformedInputError:
            logger.warning(f"Overwriting unreadable {path}")
    previous[command] = timing
    write_json(previous, path)


def _training_data(config: RunConfig, dim: int) -> tuple[np.ndarray, np.ndarray]:
    if config.data.train is None:
        logger.info("No training data given, building a prior-only model")
        return np.zeros((0, dim)), np.zeros(0)
    design, y = read_observations(config.data.train)
    if design.shape[1] != dim:
        raise InvalidArgumentError(
            f"training data has {design.shape[1]} inputs for a {dim}D knot grid"
        )
    return design, y


def _load_model(settings: RunSettings) -> ConstrainedGPModel:
    return ConstrainedGPModel.from_artifact(read_json(settings.model_path()))


def _prediction_points(settings: RunSettings, model: ConstrainedGPModel) -> np.ndarray:
    config = settings.config
    if config.data.predict is not None:
        return read_points(config.data.predict)
    counts = config.prediction.counts
    if len(counts) == 1:
        counts = counts * model.grid.dim
    if len(counts) != model.grid.dim:
        raise InvalidArgumentError(
            f"prediction grid has {len(counts)} axes for a {model.grid.dim}D model"
        )
    return model.scaler.from_unit(KnotGrid.regular(counts).points())


def cmd_fit(settings: RunSettings) -> None:
    config = settings.config
    started = time.perf_counter()
    grid = config.knots.to_grid()
    design, y = _training_data(config, grid.dim)
    model = ConstrainedGPModel(
        config.kernel.to_params(),
        grid,
        config.build_system(grid),
        design,
        y,
        scaler=config.scaler(grid.dim),
        map_options=config.map.to_options(),
    )
    artifact = model.to_artifact()
    summary = model.map_estimate
    logger.info(
        f"MAP solved in {summary.iterations} iterations, "
        f"KKT residual {summary.kkt_residual:.3g}, {len(summary.active_rows)} active rows"
    )
    write_json(artifact, settings.model_path())
    record_timing(settings, "fit", {"seconds": time.perf_counter() - started})


def cmd_sample(settings: RunSettings) -> None:
    config = settings.config
    model = _load_model(settings)
    sampler = config.sampler.to_config(settings.seed)
    chains = model.sample(sampler, n_chains=config.sampler.n_chains)

    frames, reports = [], []
    for chain in chains:
        frame = chain.to_frame()
        if len(chains) > 1:
            frame.insert(0, "chain", chain.stream)
        frames.append(frame)
        report = chain.metadata()
        try:
            ess = ess_report(chain).to_dict()
            ess.pop("tn_ess")
        except UndefinedStatisticError as exc:
            logger.warning(f"Chain {chain.stream}: ESS not reported: {exc}")
            ess = None
        report["ess"] = ess
        reports.append(report)

    write_frame(pd.concat(frames, ignore_index=True), settings.chain_path())
    write_json({"chains": reports}, settings.output("diagnostics.json"))
    record_timing(
        settings,
        "sample",
        {
            "chains": [
                {"stream": chain.stream, "wall_seconds": chain.wall_seconds} for chain in chains
            ]
        },
    )


def cmd_predict(settings: RunSettings) -> None:
    started = time.perf_counter()
    model = _load_model(settings)
    xi = read_chain(settings.chain_path())
    points = _prediction_points(settings, model)
    prediction = model.predict(points, xi)
    write_frame(prediction.to_frame(), settings.output("predictions.csv"))
    record_timing(settings, "predict", {"seconds": time.perf_counter() - started})


def cmd_estimate(settings: RunSettings) -> None:
    config = settings.config
    if config.data.train is None:
        raise InvalidArgumentError("estimate needs training data (data.train)")
    started = time.perf_counter()
    grid = config.knots.to_grid()
    design, y = _training_data(config, grid.dim)
    phi = interp_matrix(grid, config.scaler(grid.dim).to_unit(design))
    method = config.estimation.method
    result = maximize(
        method,
        config.estimation.to_domain(config.kernel.family),
        grid,
        phi,
        y,
        system=config.build_system(grid),
        orthant=config.estimation.to_orthant(settings.seed)
        if method is EstimationMethod.CMLE
        else None,
        seed=settings.seed,
        progress=settings.progress,
    )
    write_json(result.to_dict(), settings.output("estimate.json"))
    record_timing(settings, "estimate", {"seconds": time.perf_counter() - started})


def cmd_benchmark(settings: RunSettings) -> None:
    bench = settings.config.benchmark
    frame = benchmark(
        bench.targets,
        [sampler.to_config(settings.seed) for sampler in bench.samplers],
        n_knots=bench.n_knots,
        progress=settings.progress,
    )
    write_frame(frame, settings.output("benchmark.csv"))


def cmd_evaluate(settings: RunSettings) -> None:
    config = settings.config
    if config.data.test is None:
        raise InvalidArgumentError("evaluate needs test data (data.test)")
    model = _load_model(settings)
    xi = read_chain(settings.chain_path())
    design, z_test = read_observations(config.data.test)
    prediction = model.predict(design, xi)
    spread = informative_points(prediction.variance)
    if spread.sum() < 2:
        raise UndefinedStatisticError("fewer than 2 test points have a positive predictive variance")
    report = prediction_report(z_test[spread], prediction.mean[spread], prediction.variance[spread])
    result = report.to_dict()
    result["n_test"] = int(z_test.size)
    result["excluded_points"] = np.flatnonzero(~spread).tolist()
    write_json(result, settings.output("evaluation.json"))


def cmd_study(settings: RunSettings) -> None:
    started = time.perf_counter()
    study = settings.config.study.to_config(settings.seed)
    frame = run_study(study, progress=settings.progress)
    write_frame(frame, settings.output("study.csv"))
    record_timing(settings, "study", {"seconds": time.perf_counter() - started})


COMMANDS: dict[str, tuple[Callable[[RunSettings], None], str]] = {
    "fit": (cmd_fit, "build the model and solve for the MAP knot vector"),
    "sample": (cmd_sample, "draw posterior chains from a fitted model"),
    "predict": (cmd_predict, "pointwise mean, 90% band and MAP curve from a chain"),
    "estimate": (cmd_estimate, "MLE or constrained MLE of the kernel parameters"),
    "benchmark": (cmd_benchmark, "compare the samplers on the toy targets"),
    "evaluate": (cmd_evaluate, "Q2 and PVA of a chain against test data"),
    "study": (cmd_study, "bounded Matern simulation study"),
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="lineq-gp", description="Gaussian process regression under linear inequality constraints"
    )
    subparsers = parser.add_subparsers(dest="command", required=True)
    for name, (_, help_text) in COMMANDS.items():
        sub = subparsers.add_parser(name, help=help_text)
        sub.add_argument("--config", help="JSON run configuration")
        sub.add_argument("--seed", type=int, help="overrides the configured seed")
        sub.add_argument("--out", help="output directory")
        sub.add_argument("--quiet", action="store_true", help="warnings only, no progress bars")
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    load_dotenv()
    args = build_parser().parse_args(argv)
    configure_logging(logging.WARNING if args.quiet else None)
    handler, _ = COMMANDS[args.command]
    try:
        settings = resolve_settings(args, load_config(args.config))
        handler(settings)
    except InfeasibleProblemError as exc:
        logger.error(f"{args.command}: {exc}")
        logger.error(f"Infeasibility certificate: {exc.certificate}")
        return exc.exit_code
    except ConstrainedGPError as exc:
        logger.error(f"{args.command}: {exc}")
        return exc.exit_code
    return 0


if __name__ == "__main__":
    sys.exit(main())
