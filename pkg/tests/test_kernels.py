import numpy as np
import pytest
from numpy.testing import assert_allclose

from src.errors import InvalidArgumentError
from src.kernels import KernelFamily, KernelParams, cross_covariance, gram, kernel_eval


def test_se_values(se_params):
    assert kernel_eval(se_params, 0.3, 0.3) == pytest.approx(1.0)
    assert kernel_eval(se_params, 0.0, 0.2) == pytest.approx(np.exp(-0.5))


def test_matern52_at_one_lengthscale():
    params = KernelParams(KernelFamily.MATERN52, 2.0, (0.5,))
    expected = 2.0 * (1.0 + np.sqrt(5.0) + 5.0 / 3.0) * np.exp(-np.sqrt(5.0))
    assert kernel_eval(params, 0.1, 0.6) == pytest.approx(expected)


def test_2d_kernel_is_a_product():
    params = KernelParams(KernelFamily.SE, 1.5, (0.2, 0.4))
    first = KernelParams(KernelFamily.SE, 1.0, (0.2,))
    second = KernelParams(KernelFamily.SE, 1.0, (0.4,))
    x, y = np.array([0.1, 0.7]), np.array([0.3, 0.2])
    expected = 1.5 * kernel_eval(first, x[0], y[0]) * kernel_eval(second, x[1], y[1])
    assert kernel_eval(params, x, y) == pytest.approx(expected)


def test_gram_is_symmetric_with_jitter(se_params):
    points = np.linspace(0, 1, 15)
    matrix = gram(se_params, points)
    assert_allclose(matrix.values, matrix.values.T)
    assert_allclose(np.diag(matrix.values), 1.0 + 1e-10)
    assert matrix.jitter == pytest.approx(1e-10)


def test_cross_covariance_shape(se_params):
    assert cross_covariance(se_params, np.zeros(3), np.ones(5)).shape == (3, 5)


def test_gram_factorises(se_params):
    matrix = gram(se_params, np.linspace(0, 1, 10))
    factor = matrix.cholesky()
    assert_allclose(factor @ factor.T, matrix.values, atol=1e-12)


@pytest.mark.parametrize(
    "variance, lengthscales",
    [(0.0, (0.2,)), (-1.0, (0.2,)), (1.0, (0.0,)), (1.0, (0.1, 0.1, 0.1))],
)
def test_invalid_params(variance, lengthscales):
    with pytest.raises(InvalidArgumentError):
        KernelParams(KernelFamily.SE, variance, lengthscales)


def test_params_vector_round_trip():
    params = KernelParams("Matern52", 1.2, (0.3, 0.4))
    assert params.family is KernelFamily.MATERN52
    again = KernelParams.from_vector(params.family, params.as_vector())
    assert again == params


def test_dimension_mismatch(se_params):
    with pytest.raises(InvalidArgumentError):
        kernel_eval(se_params, [0.1, 0.2], [0.1, 0.2])
    with pytest.raises(InvalidArgumentError):
        gram(se_params, np.zeros(0))
