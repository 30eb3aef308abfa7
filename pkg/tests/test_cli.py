import json

import numpy as np
import pandas as pd
import pytest

from app.main import build_parser, main, resolve_settings
from app.schema import RunConfig
from src.experiments import CDF_DESIGN, normal_cdf_profile


def write_observations(path, x, y):
    pd.DataFrame({"x1": x, "y": y}).to_csv(path, index=False)
    return str(path)


@pytest.fixture
def workspace(tmp_path):
    x = np.asarray(CDF_DESIGN)
    train = write_observations(tmp_path / "train.csv", x, normal_cdf_profile(x))
    x_test = np.array([0.05, 0.3, 0.7, 0.95])
    test = write_observations(tmp_path / "test.csv", x_test, normal_cdf_profile(x_test))
    config = {
        "data": {"train": train, "test": test},
        "knots": {"counts": [15]},
        "constraints": [{"kind": "bounds", "lower": 0, "upper": 1}, {"kind": "monotone"}],
        "sampler": {"n_samples": 60, "burn_in": 10},
        "prediction": {"counts": [11]},
    }
    return tmp_path, config


def run(tmp_path, config, command, *extra):
    config_path = tmp_path / f"{command}.json"
    config_path.write_text(json.dumps(config))
    return main([command, "--config", str(config_path), "--out", str(tmp_path / "out"), "--quiet", *extra])


def test_fit_sample_predict(workspace):
    tmp_path, config = workspace
    assert run(tmp_path, config, "fit") == 0
    assert run(tmp_path, config, "sample", "--seed", "3") == 0
    assert run(tmp_path, config, "predict") == 0
    out = tmp_path / "out"

    model = json.loads((out / "model.json").read_text())
    assert model["version"] == 1
    chain = pd.read_csv(out / "chain.csv")
    assert chain.shape == (60, 15)
    predictions = pd.read_csv(out / "predictions.csv")
    assert list(predictions.columns) == ["x1", "mean", "q05", "q95", "map"]
    assert len(predictions) == 11
    assert predictions["q05"].min() >= -1e-6 and predictions["q95"].max() <= 1 + 1e-6

    diagnostics = json.loads((out / "diagnostics.json").read_text())
    report = diagnostics["chains"][0]
    assert report["sampler"] == "HMC"
    assert report["config"]["seed"] == 3
    assert "tn_ess" not in report["ess"]
    timing = json.loads((out / "timing.json").read_text())
    assert {"fit", "sample", "predict"} <= set(timing)


def test_sampling_is_reproducible(workspace):
    tmp_path, config = workspace
    assert run(tmp_path, config, "fit") == 0
    assert run(tmp_path, config, "sample", "--seed", "11") == 0
    first = (tmp_path / "out" / "chain.csv").read_bytes()
    assert run(tmp_path, config, "sample", "--seed", "11") == 0
    assert (tmp_path / "out" / "chain.csv").read_bytes() == first
    assert run(tmp_path, config, "sample", "--seed", "12") == 0
    assert (tmp_path / "out" / "chain.csv").read_bytes() != first


def test_multiple_chains(workspace):
    tmp_path, config = workspace
    config["sampler"]["n_chains"] = 2
    assert run(tmp_path, config, "fit") == 0
    assert run(tmp_path, config, "sample") == 0
    chain = pd.read_csv(tmp_path / "out" / "chain.csv")
    assert chain["chain"].tolist() == [0] * 60 + [1] * 60
    assert run(tmp_path, config, "predict") == 0


def test_single_draw_has_no_ess(workspace):
    tmp_path, config = workspace
    config["sampler"] = {"n_samples": 1, "burn_in": 0}
    assert run(tmp_path, config, "fit") == 0
    assert run(tmp_path, config, "sample") == 0
    diagnostics = json.loads((tmp_path / "out" / "diagnostics.json").read_text())
    assert diagnostics["chains"][0]["ess"] is None


def test_malformed_csv(workspace, caplog):
    tmp_path, config = workspace
    (tmp_path / "train.csv").write_text("x1,y\n0.1,0.2\n0.5,abc\n")
    assert run(tmp_path, config, "fit") == 1
    assert "train.csv:3" in caplog.text


def test_unknown_config_key(workspace):
    tmp_path, config = workspace
    config["kernal"] = {"variance": 2.0}
    assert run(tmp_path, config, "fit") == 1


def test_infeasible_bounds(workspace, caplog):
    tmp_path, config = workspace
    config["constraints"] = [{"kind": "bounds", "lower": 0, "upper": 0.5}]
    assert run(tmp_path, config, "fit") == 2
    assert "certificate" in caplog.text


def test_missing_model(workspace):
    tmp_path, config = workspace
    assert run(tmp_path, config, "sample") == 1


def test_fixed_domain_estimate(workspace):
    tmp_path, config = workspace
    config["estimation"] = {"variance": [1.0, 1.0], "lengthscales": [[0.2, 0.2]]}
    assert run(tmp_path, config, "estimate") == 0
    estimate = json.loads((tmp_path / "out" / "estimate.json").read_text())
    assert estimate["method"] == "MLE"
    assert estimate["params"] == {"family": "SE", "variance": 1.0, "lengthscales": [0.2]}


def test_estimate_needs_training_data(workspace):
    tmp_path, config = workspace
    del config["data"]["train"]
    assert run(tmp_path, config, "estimate") == 1


def test_evaluate(workspace):
    tmp_path, config = workspace
    assert run(tmp_path, config, "fit") == 0
    assert run(tmp_path, config, "sample") == 0
    assert run(tmp_path, config, "evaluate") == 0
    evaluation = json.loads((tmp_path / "out" / "evaluation.json").read_text())
    assert evaluation["n_test"] == 4
    assert evaluation["q2"] > 0.5
    assert len(evaluation["residuals"]) == 4 - len(evaluation["excluded_points"])


def test_benchmark(workspace):
    tmp_path, config = workspace
    config["benchmark"] = {
        "targets": ["bounded"],
        "samplers": [{"kind": "HMC", "n_samples": 40, "burn_in": 10}],
        "n_knots": 12,
    }
    assert run(tmp_path, config, "benchmark") == 0
    frame = pd.read_csv(tmp_path / "out" / "benchmark.csv")
    assert len(frame) == 1
    assert frame["status"].tolist() == ["ok"]


def test_study(workspace):
    tmp_path, config = workspace
    config["study"] = {
        "n_replications": 1,
        "n_train": 4,
        "n_test": 6,
        "n_knots": 8,
        "truth_knots": 12,
        "methods": ["MLE"],
        "estimation": {
            "family": "Matern52",
            "variance": [0.1, 2.0],
            "lengthscales": [[0.1, 0.4]],
            "n_starts": 1,
            "max_evaluations": 15,
            "orthant_draws": 50,
        },
        "n_samples": 30,
        "burn_in": 10,
    }
    assert run(tmp_path, config, "study") == 0
    frame = pd.read_csv(tmp_path / "out" / "study.csv")
    assert sorted(frame["method"]) == ["MLE", "truth"]


def test_two_dimensional_prior(tmp_path):
    config = {
        "kernel": {"lengthscales": [0.3, 0.3]},
        "knots": {"counts": [5, 5]},
        "constraints": [{"kind": "bounds", "lower": -1, "upper": 1}],
        "sampler": {"n_samples": 20, "burn_in": 5},
        "prediction": {"counts": [5]},
    }
    assert run(tmp_path, config, "fit") == 0
    assert run(tmp_path, config, "sample") == 0
    assert run(tmp_path, config, "predict") == 0
    predictions = pd.read_csv(tmp_path / "out" / "predictions.csv")
    assert len(predictions) == 25
    assert list(predictions.columns[:2]) == ["x1", "x2"]


def test_seed_precedence(monkeypatch):
    monkeypatch.setenv("LINEQGP_SEED", "7")
    monkeypatch.setenv("LINEQGP_OUT_DIR", "results")
    parser = build_parser()
    settings = resolve_settings(parser.parse_args(["sample"]), RunConfig())
    assert settings.seed == 7
    assert str(settings.out_dir) == "results"
    settings = resolve_settings(parser.parse_args(["sample"]), RunConfig(seed=5))
    assert settings.seed == 5
    settings = resolve_settings(parser.parse_args(["sample", "--seed", "3"]), RunConfig(seed=5))
    assert settings.seed == 3
    assert settings.model_path().name == "model.json"
