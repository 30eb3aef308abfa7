import numpy as np
import pytest
from numpy.testing import assert_allclose

from app.artifacts import read_json, write_json
from src.basis import KnotGrid
from src.constraints import bounds_constraint, is_feasible
from src.errors import InvalidArgumentError, MalformedInputError
from src.experiments import surface_model
from src.kernels import KernelFamily, KernelParams
from src.model import ConstrainedGPModel
from src.samplers import SamplerConfig, SamplerKind

HMC = SamplerConfig(kind=SamplerKind.HMC, n_samples=200, seed=1, burn_in=50)


def test_map_interpolates_and_is_feasible(bounded_monotone_model):
    model = bounded_monotone_model
    xi = model.solve_map().xi
    assert_allclose(model.phi @ xi, model.y, atol=1e-6)
    assert is_feasible(model.system, xi, tol=1e-7)


def test_prior_only_model(se_params, grid):
    model = ConstrainedGPModel(
        se_params, grid, bounds_constraint(grid.size, -1.0, 1.0), np.zeros((0, 1)), np.zeros(0)
    )
    assert model.n_obs == 0
    assert_allclose(model.solve_map().xi, 0.0, atol=1e-8)


def test_prediction_at_training_points(bounded_monotone_model):
    model = bounded_monotone_model
    chains = model.sample(HMC)
    prediction = model.predict(model.design, chains)
    assert_allclose(prediction.mean, model.y, atol=1e-4)
    assert np.all(prediction.q95 - prediction.q05 <= 1e-4)
    assert_allclose(prediction.map, model.y, atol=1e-6)


def test_prediction_band_respects_bounds(bounded_monotone_model):
    model = bounded_monotone_model
    chains = model.sample(HMC)
    points = np.linspace(0.0, 1.0, 57)
    prediction = model.predict(points, chains)
    assert np.all(prediction.q05 >= -1e-6)
    assert np.all(prediction.q95 <= 1.0 + 1e-6)
    assert np.all(prediction.q05 <= prediction.mean + 1e-12)
    assert np.all(prediction.mean <= prediction.q95 + 1e-12)
    frame = prediction.to_frame()
    assert list(frame.columns) == ["x1", "mean", "q05", "q95", "map"]
    assert len(frame) == 57


def test_predict_accepts_knot_vectors(bounded_monotone_model):
    model = bounded_monotone_model
    xi = np.tile(model.solve_map().xi, (3, 1))
    prediction = model.predict([0.2, 0.7], xi)
    assert_allclose(prediction.mean, prediction.map)
    assert_allclose(prediction.variance, 0.0, atol=1e-20)


def test_predict_rejects_bad_input(bounded_monotone_model):
    model = bounded_monotone_model
    with pytest.raises(InvalidArgumentError):
        model.predict([0.5], np.zeros((0, model.grid.size)))
    with pytest.raises(InvalidArgumentError):
        model.predict([0.5], np.zeros((2, model.grid.size + 1)))
    with pytest.raises(InvalidArgumentError):
        model.predict(np.zeros((3, 2)), np.zeros((2, model.grid.size)))


def test_dimension_mismatch(grid):
    params = KernelParams(KernelFamily.SE, 1.0, (0.2, 0.2))
    with pytest.raises(InvalidArgumentError):
        ConstrainedGPModel(params, grid, bounds_constraint(grid.size, 0, 1), np.zeros((0, 1)), [])
    with pytest.raises(InvalidArgumentError):
        ConstrainedGPModel(
            KernelParams(KernelFamily.SE, 1.0, (0.2,)),
            grid,
            bounds_constraint(grid.size + 1, 0, 1),
            np.zeros((0, 1)),
            [],
        )


def test_design_and_values_must_agree(se_params, grid):
    with pytest.raises(InvalidArgumentError):
        ConstrainedGPModel(se_params, grid, bounds_constraint(grid.size, 0, 1), [[0.1], [0.2]], [0.5])


def test_artifact_round_trip(bounded_monotone_model, tmp_path):
    model = bounded_monotone_model
    path = write_json(model.to_artifact(), tmp_path / "model.json")
    restored = ConstrainedGPModel.from_artifact(read_json(path))
    assert restored.params == model.params
    assert restored.system.digest() == model.system.digest()
    assert_allclose(restored.solve_map().xi, model.solve_map().xi, atol=1e-10)
    assert_allclose(restored.y, model.y)


def test_artifact_validation(bounded_monotone_model):
    artifact = bounded_monotone_model.to_artifact()
    with pytest.raises(MalformedInputError):
        ConstrainedGPModel.from_artifact({**artifact, "version": 99})
    broken = dict(artifact)
    del broken["grid"]
    with pytest.raises(MalformedInputError):
        ConstrainedGPModel.from_artifact(broken)


def test_monotone_surface():
    model = surface_model("monotone", n_train=10, knots=(10, 10))
    xi = model.solve_map().xi.reshape(10, 10)
    assert np.all(np.diff(xi, axis=0) >= -1e-7)
    assert np.all(np.diff(xi, axis=1) >= -1e-7)
    assert_allclose(model.phi @ model.solve_map().xi, model.y, atol=1e-6)
