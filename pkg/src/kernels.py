"""
Stationary covariance families and Gram matrix assembly.

Squared exponential and Matern 5/2 kernels in 1D, and their anisotropic
tensor-product versions in 2D:

    k(x, x') = sigma^2 * prod_i r(|x_i - x'_i| / theta_i)

with r(s) = exp(-s^2 / 2) (SE) or (1 + sqrt(5) s + 5 s^2 / 3) exp(-sqrt(5) s).
"""

import logging
from dataclasses import dataclass
from enum import Enum
from typing import Sequence

import numpy as np

from src.errors import InvalidArgumentError
from src.utils import DEFAULT_RELATIVE_JITTER, robust_cholesky

logger = logging.getLogger(__name__)

SQRT5 = np.sqrt(5.0)


class KernelFamily(str, Enum):
    SE = "SE"
    MATERN52 = "Matern52"


@dataclass(frozen=True)
class KernelParams:
    """Kernel family, variance sigma^2 and one lengthscale per input dimension"""

    family: KernelFamily
    variance: float
    lengthscales: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "family", KernelFamily(self.family))
        object.__setattr__(
            self, "lengthscales", tuple(float(t) for t in np.atleast_1d(self.lengthscales))
        )
        object.__setattr__(self, "variance", float(self.variance))
        if not self.variance > 0:
            raise InvalidArgumentError(f"variance must be positive, got {self.variance}")
        if len(self.lengthscales) not in (1, 2):
            raise InvalidArgumentError(
                f"expected 1 or 2 lengthscales, got {len(self.lengthscales)}"
            )
        if any(not t > 0 for t in self.lengthscales):
            raise InvalidArgumentError(f"lengthscales must be positive: {self.lengthscales}")

    @property
    def dim(self) -> int:
        return len(self.lengthscales)

    def as_vector(self) -> np.ndarray:
        return np.array([self.variance, *self.lengthscales])

    @classmethod
    def from_vector(cls, family: KernelFamily, vector: Sequence[float]) -> "KernelParams":
        return cls(family, float(vector[0]), tuple(float(v) for v in vector[1:]))

    def to_dict(self) -> dict:
        return {
            "family": self.family.value,
            "variance": self.variance,
            "lengthscales": list(self.lengthscales),
        }


@dataclass(frozen=True, eq=False)
class GramMatrix:
    values: np.ndarray
    jitter: float = 0.0

    @property
    def size(self) -> int:
        return self.values.shape[0]

    def cholesky(self) -> np.ndarray:
        """Lower factor; escalates jitter only if the stored matrix is not factorable."""
        factor, _ = robust_cholesky(self.values, jitter=0.0)
        return factor


def _correlation_1d(family: KernelFamily, scaled: np.ndarray) -> np.ndarray:
    s = np.abs(scaled)
    if family is KernelFamily.SE:
        return np.exp(-0.5 * s**2)
    return (1.0 + SQRT5 * s + (5.0 / 3.0) * s**2) * np.exp(-SQRT5 * s)


def _as_points(points, dim: int) -> np.ndarray:
    array = np.asarray(points, dtype=float)
    if array.ndim == 0:
        array = array.reshape(1, 1)
    elif array.ndim == 1:
        array = array.reshape(-1, 1) if dim == 1 else array.reshape(1, -1)
    if array.shape[1] != dim:
        raise InvalidArgumentError(
            f"points have dimension {array.shape[1]}, kernel expects {dim}"
        )
    return array


def cross_covariance(params: KernelParams, points_a, points_b) -> np.ndarray:
    """Matrix of k(a_i, b_j) for two point sets of the kernel's dimension."""
    a = _as_points(points_a, params.dim)
    b = _as_points(points_b, params.dim)
    result = np.full((a.shape[0], b.shape[0]), params.variance)
    for axis, theta in enumerate(params.lengthscales):
        scaled = (a[:, axis][:, None] - b[:, axis][None, :]) / theta
        result *= _correlation_1d(params.family, scaled)
    return result


def kernel_eval(params: KernelParams, x, x_prime) -> float:
    """k_theta(x - x') for two single points."""
    a = np.atleast_1d(np.asarray(x, dtype=float))
    b = np.atleast_1d(np.asarray(x_prime, dtype=float))
    if a.shape != (params.dim,) or b.shape != (params.dim,):
        raise InvalidArgumentError(
            f"points {a.shape} and {b.shape} do not match kernel dimension {params.dim}"
        )
    return float(cross_covariance(params, a.reshape(1, -1), b.reshape(1, -1))[0, 0])


def gram(params: KernelParams, points, jitter: float | None = None) -> GramMatrix:
    """
    Gram matrix Gamma = (k(t_i, t_j)) with `jitter` added to the diagonal.

    The default jitter is 1e-10 * sigma^2; Gamma on a fine knot grid is
    numerically singular for smooth kernels.
    """
    array = _as_points(points, params.dim)
    if array.shape[0] == 0:
        raise InvalidArgumentError("gram needs at least one point")
    if jitter is None:
        jitter = DEFAULT_RELATIVE_JITTER * params.variance
    if jitter < 0:
        raise InvalidArgumentError(f"jitter must be nonnegative, got {jitter}")
    values = cross_covariance(params, array, array)
    values = 0.5 * (values + values.T)
    if jitter:
        values[np.diag_indices_from(values)] += jitter
    return GramMatrix(values=values, jitter=float(jitter))
