"""
Chain quality (effective sample sizes) and prediction quality (Q2, PVA).

The univariate ESS penalises negative as well as positive correlation:

    ESS = n / (1 + 2 |sum_k rho_k|)

with the autocorrelation sum truncated at the first lag whose sample
autocorrelation is not significant at the 5% level (|rho_k| < 1.96 / sqrt(n)).
Summing to the last lag, as the formula is usually written, makes the
statistic useless: the full sample-autocorrelation sum is always -1/2.
"""

import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.fft
from scipy.special import gammaln
from scipy.stats import chi2, norm

from src.errors import InvalidArgumentError, UndefinedStatisticError
from src.samplers.base import SampleChain

logger = logging.getLogger(__name__)

SIGNIFICANCE = 0.05
# Relative to the largest coordinate variance
CONSTANT_VARIANCE_TOLERANCE = 1e-20
MV_EIGEN_TOLERANCE = 1e-10
# Relative to the largest predictive variance; points below it sit on training data
VARIANCE_FLOOR = 1e-12


def autocorrelation(path: np.ndarray) -> np.ndarray:
    """Sample autocorrelations rho_0..rho_{n-1} by FFT (biased normalisation)."""
    n = path.size
    centred = path - path.mean()
    size = scipy.fft.next_fast_len(2 * n)
    spectrum = scipy.fft.rfft(centred, n=size)
    covariance = scipy.fft.irfft(spectrum * np.conj(spectrum), n=size)[:n] / n
    return covariance / covariance[0]


def _check_path(path) -> np.ndarray:
    path = np.asarray(path, dtype=float).reshape(-1)
    if path.size < 2:
        raise InvalidArgumentError(f"ESS needs at least 2 values, got {path.size}")
    if not np.all(np.isfinite(path)):
        raise InvalidArgumentError("ESS path has non-finite values")
    if np.ptp(path) == 0:
        raise UndefinedStatisticError("ESS is undefined for a constant path")
    return path


def autocorrelation_sum(path, alpha: float = SIGNIFICANCE) -> float:
    """sum_{k >= 1} rho_k up to the first non-significant lag (excluded)."""
    path = _check_path(path)
    rho = autocorrelation(path)
    threshold = norm.ppf(1 - alpha / 2) / np.sqrt(path.size)
    insignificant = np.flatnonzero(np.abs(rho[1:]) < threshold)
    stop = insignificant[0] + 1 if insignificant.size else path.size
    return float(rho[1:stop].sum())


def ess(path, modified: bool = True) -> float:
    """
    Effective sample size of a scalar chain.

    With `modified=False` the classic n / (1 + 2 sum rho_k) is returned
    (infinite when the denominator is not positive).

    Raises:
        UndefinedStatisticError: for a constant path
    """
    path = _check_path(path)
    total = autocorrelation_sum(path)
    n = path.size
    if modified:
        return n / (1.0 + 2.0 * abs(total))
    denominator = 1.0 + 2.0 * total
    return n / denominator if denominator > 0 else np.inf


def _batch_covariance(draws: np.ndarray) -> np.ndarray:
    n = draws.shape[0]
    size = int(np.floor(np.sqrt(n)))
    n_batches = n // size
    means = draws[: n_batches * size].reshape(n_batches, size, -1).mean(axis=1)
    return size * np.atleast_2d(np.cov(means, rowvar=False))


def mv_ess(draws) -> float:
    """
    Multivariate ESS, n (det S / det T)^(1/p), with S the sample covariance
    and T the batch-means estimate of the long-run covariance.

    Constant coordinates are dropped; if S is still singular the statistic is
    computed on its principal subspace and a warning is logged. Values above
    n are legal (negative correlation).

    Raises:
        UndefinedStatisticError: if too few draws remain for the batch estimate
    """
    draws = np.asarray(draws, dtype=float)
    if draws.ndim == 1:
        draws = draws[:, None]
    n = draws.shape[0]
    variances = draws.var(axis=0)
    top = float(variances.max()) if variances.size else 0.0
    if top <= 0:
        raise UndefinedStatisticError("mvESS is undefined for a constant chain")
    draws = draws[:, variances > CONSTANT_VARIANCE_TOLERANCE * top]

    sample = np.atleast_2d(np.cov(draws, rowvar=False))
    eigenvalues, vectors = np.linalg.eigh(sample)
    keep = eigenvalues > MV_EIGEN_TOLERANCE * eigenvalues[-1]
    if not np.all(keep):
        logger.warning(
            f"mvESS: sample covariance is singular, using {int(keep.sum())} "
            f"of {keep.size} principal directions"
        )
        draws = draws @ vectors[:, keep]
        sample = np.atleast_2d(np.cov(draws, rowvar=False))
    p = draws.shape[1]
    n_batches = n // int(np.floor(np.sqrt(n)))
    if n_batches <= p:
        raise UndefinedStatisticError(
            f"mvESS needs more than {p} batches, {n} draws give {n_batches}"
        )

    sign_sample, logdet_sample = np.linalg.slogdet(sample)
    sign_long, logdet_long = np.linalg.slogdet(_batch_covariance(draws))
    if sign_sample <= 0 or sign_long <= 0:
        raise UndefinedStatisticError("mvESS covariance estimates are not positive definite")
    return float(n * np.exp((logdet_sample - logdet_long) / p))


def min_ess(p: int, alpha: float = 0.05, eps: float = 0.05) -> int:
    """
    Smallest mvESS giving a (1 - alpha) confidence region of relative volume
    eps for a p-dimensional mean; 8563 for p = 30 at the default levels.

    Documented for planning; no sampler stops on it.
    """
    if p < 1:
        raise InvalidArgumentError(f"p must be positive, got {p}")
    log_constant = np.log(np.pi) + (2.0 / p) * (np.log(2.0) - np.log(p) - gammaln(p / 2.0))
    value = np.exp(log_constant + np.log(chi2.ppf(1 - alpha, p)) - 2.0 * np.log(eps))
    return int(np.floor(value))


@dataclass(frozen=True)
class EssReport:
    per_coordinate: tuple[float, ...]
    q10: float
    q50: float
    q90: float
    mv_ess: float | None
    tn_ess: float
    n_draws: int
    excluded: tuple[int, ...] = field(default=())

    def to_dict(self) -> dict:
        return {
            "n_draws": self.n_draws,
            "ess": list(self.per_coordinate),
            "q10": self.q10,
            "q50": self.q50,
            "q90": self.q90,
            "mv_ess": self.mv_ess,
            "tn_ess": self.tn_ess if np.isfinite(self.tn_ess) else None,
            "excluded_coordinates": list(self.excluded),
        }


def ess_report(chain: SampleChain) -> EssReport:
    """
    ESS of every non-constant coordinate of the chain (xi when back-solved,
    eta otherwise), its 10/50/90% quantiles, mvESS and q10 / wall seconds.
    """
    draws = chain.xi if chain.xi is not None else chain.draws
    if draws.shape[0] == 0:
        raise InvalidArgumentError("cannot report on an empty chain")
    variances = draws.var(axis=0)
    top = float(variances.max())
    if top <= 0:
        raise UndefinedStatisticError("every chain coordinate is constant")
    live = variances > CONSTANT_VARIANCE_TOLERANCE * top
    values = np.array([ess(draws[:, j]) for j in np.flatnonzero(live)])
    q10, q50, q90 = np.quantile(values, [0.1, 0.5, 0.9])

    try:
        multivariate = mv_ess(draws[:, live])
    except UndefinedStatisticError as exc:
        logger.warning(f"mvESS not reported: {exc}")
        multivariate = None
    tn_ess = q10 / chain.wall_seconds if chain.wall_seconds > 0 else np.inf
    return EssReport(
        per_coordinate=tuple(float(v) for v in values),
        q10=float(q10),
        q50=float(q50),
        q90=float(q90),
        mv_ess=multivariate,
        tn_ess=float(tn_ess),
        n_draws=int(draws.shape[0]),
        excluded=tuple(int(j) for j in np.flatnonzero(~live)),
    )


def _paired(z_test, z_pred) -> tuple[np.ndarray, np.ndarray]:
    z_test = np.asarray(z_test, dtype=float).reshape(-1)
    z_pred = np.asarray(z_pred, dtype=float).reshape(-1)
    if z_test.shape != z_pred.shape:
        raise InvalidArgumentError(
            f"{z_test.size} test values for {z_pred.size} predictions"
        )
    return z_test, z_pred


def q2(z_test, z_pred) -> float:
    """1 - sum (z_hat - z)^2 / sum (z_bar - z)^2 with z_bar the test mean."""
    z_test, z_pred = _paired(z_test, z_pred)
    if z_test.size < 2:
        raise InvalidArgumentError("Q2 needs at least 2 test points")
    denominator = np.sum((z_test - z_test.mean()) ** 2)
    if denominator == 0:
        raise UndefinedStatisticError("Q2 is undefined for constant test values")
    return float(1.0 - np.sum((z_pred - z_test) ** 2) / denominator)


def pva(z_test, z_pred, var_pred) -> float:
    """
    |log mean((z - z_hat)^2 / sigma^2)|; infinite when every residual is zero.
    """
    z_test, z_pred = _paired(z_test, z_pred)
    var_pred = np.asarray(var_pred, dtype=float).reshape(-1)
    if var_pred.shape != z_test.shape:
        raise InvalidArgumentError(f"{var_pred.size} variances for {z_test.size} points")
    if np.any(var_pred <= 0):
        raise InvalidArgumentError("predictive variances must be positive")
    ratio = np.mean((z_test - z_pred) ** 2 / var_pred)
    if ratio == 0:
        return np.inf
    return float(abs(np.log(ratio)))


@dataclass(frozen=True, eq=False)
class PredictionReport:
    q2: float
    pva: float
    residuals: np.ndarray
    variances: np.ndarray

    def to_dict(self) -> dict:
        return {
            "q2": self.q2,
            "pva": self.pva if np.isfinite(self.pva) else None,
            "residuals": self.residuals.tolist(),
            "variances": self.variances.tolist(),
        }


def informative_points(var_pred) -> np.ndarray:
    """Mask of points whose predictive variance is usable in PVA."""
    var_pred = np.asarray(var_pred, dtype=float).reshape(-1)
    top = float(var_pred.max()) if var_pred.size else 0.0
    return var_pred > VARIANCE_FLOOR * max(top, 1e-300)


def prediction_report(z_test, z_pred, var_pred) -> PredictionReport:
    z_test, z_pred = _paired(z_test, z_pred)
    var_pred = np.asarray(var_pred, dtype=float).reshape(-1)
    return PredictionReport(
        q2=q2(z_test, z_pred),
        pva=pva(z_test, z_pred, var_pred),
        residuals=z_test - z_pred,
        variances=var_pred,
    )
