import numpy as np
import pytest
from scipy.stats import norm

from src.errors import InvalidArgumentError
from src.orthant import OrthantConfig, log_interval_mass, log_orthant_prob


def test_univariate_half_line():
    estimate = log_orthant_prob([0.0], [[1.0]], [0.0], [np.inf])
    assert estimate.log_prob == pytest.approx(np.log(0.5))
    assert estimate.probability == pytest.approx(0.5)


def test_unbounded_coordinates_are_dropped():
    estimate = log_orthant_prob(np.zeros(3), np.eye(3), -np.inf, np.inf)
    assert estimate.log_prob == 0.0
    assert estimate.std_error == 0.0
    partial = log_orthant_prob([0.0, 0.0], np.eye(2), [-np.inf, 0.0], [np.inf, np.inf])
    assert partial.log_prob == pytest.approx(np.log(0.5))


def test_bivariate_orthant():
    rho = 0.5
    cov = [[1.0, rho], [rho, 1.0]]
    estimate = log_orthant_prob([0.0, 0.0], cov, [0.0, 0.0], [np.inf, np.inf])
    assert estimate.probability == pytest.approx(1 / 3, abs=0.01)
    assert 0 < estimate.std_error < 0.05


def test_trivariate_orthant():
    rho = 0.3
    cov = np.full((3, 3), rho) + (1 - rho) * np.eye(3)
    expected = 1 / 8 + 3 * np.arcsin(rho) / (4 * np.pi)
    estimate = log_orthant_prob(np.zeros(3), cov, np.zeros(3), np.full(3, np.inf))
    assert estimate.probability == pytest.approx(expected, abs=0.01)


def test_box_against_independent_product():
    lower, upper = np.array([-1.0, 0.5]), np.array([2.0, 1.5])
    expected = np.prod(norm.cdf(upper) - norm.cdf(lower))
    estimate = log_orthant_prob(np.zeros(2), np.eye(2), lower, upper, n_draws=2000)
    assert estimate.probability == pytest.approx(expected, rel=1e-6)


def test_common_random_numbers():
    cov = [[1.0, 0.8], [0.8, 1.0]]
    first = log_orthant_prob([0.1, 0.0], cov, [0.0, 0.0], [np.inf, 1.0], seed=4)
    second = log_orthant_prob([0.1, 0.0], cov, [0.0, 0.0], [np.inf, 1.0], seed=4)
    other = log_orthant_prob([0.1, 0.0], cov, [0.0, 0.0], [np.inf, 1.0], seed=5)
    assert first.log_prob == second.log_prob
    assert first.log_prob != other.log_prob


def test_singular_covariance():
    estimate = log_orthant_prob([0.0, 0.0], np.ones((2, 2)), [0.0, 0.0], [np.inf, np.inf])
    assert estimate.probability == pytest.approx(0.5)


def test_invalid_arguments():
    with pytest.raises(InvalidArgumentError):
        log_orthant_prob([0.0], [[1.0]], [1.0], [0.0])
    with pytest.raises(InvalidArgumentError):
        log_orthant_prob([0.0, 0.0], [[1.0]], 0.0, 1.0)
    with pytest.raises(InvalidArgumentError):
        OrthantConfig(n_draws=1)


def test_interval_mass_tails():
    assert log_interval_mass(10.0, np.inf) == pytest.approx(norm.logsf(10.0))
    assert log_interval_mass(-np.inf, -12.0) == pytest.approx(norm.logcdf(-12.0))
    assert log_interval_mass(-1.0, 1.0) == pytest.approx(np.log(norm.cdf(1) - norm.cdf(-1)))
    assert log_interval_mass(1.0, 1.0) == -np.inf
