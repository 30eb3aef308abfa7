import logging
import os

import numpy as np
import scipy.linalg
from tenacity import (
    Retrying,
    before_sleep_log,
    retry_if_exception_type,
    stop_after_attempt,
)

from src.errors import IllConditionedError

logger = logging.getLogger(__name__)

LOG_FORMAT = "%(asctime)s - %(name)s - %(levelname)s - %(message)s"

# Relative to the mean diagonal of the matrix being factorised
DEFAULT_RELATIVE_JITTER = 1e-10
MAX_JITTER_ATTEMPTS = 8


def configure_logging(level: str | int | None = None) -> None:
    """Configure root logging once, for CLI and harness entry points."""
    if level is None:
        level = os.getenv("LINEQGP_LOG_LEVEL", "INFO")
    if isinstance(level, str):
        level = getattr(logging, level.upper(), logging.INFO)
    logging.basicConfig(level=level, format=LOG_FORMAT)
    logging.getLogger().setLevel(level)


def make_rng(seed: int, stream: int = 0) -> np.random.Generator:
    """
    Counter-based generator for one chain.

    Distinct streams of the same seed are statistically independent, so
    parallel chains take stream = chain index.
    """
    sequence = np.random.SeedSequence(int(seed) % 2**64, spawn_key=(int(stream),))
    return np.random.Generator(np.random.Philox(sequence))


def symmetrize(matrix: np.ndarray) -> np.ndarray:
    return 0.5 * (matrix + matrix.T)


def default_jitter(matrix: np.ndarray) -> float:
    if matrix.size == 0:
        return 0.0
    scale = float(np.mean(np.abs(np.diag(matrix))))
    return DEFAULT_RELATIVE_JITTER * (scale if scale > 0 else 1.0)


def robust_cholesky(
    matrix: np.ndarray,
    jitter: float | None = None,
    max_attempts: int = MAX_JITTER_ATTEMPTS,
) -> tuple[np.ndarray, float]:
    """
    Lower Cholesky factor of `matrix + jitter * I`, doubling the jitter on failure.

    Args:
        matrix: symmetric matrix to factorise
        jitter: initial diagonal jitter; defaults to 1e-10 times the mean diagonal
        max_attempts: number of factorisation attempts before giving up

    Returns:
        (L, jitter actually used)

    Raises:
        IllConditionedError: if every attempt fails
    """
    matrix = np.asarray(matrix, dtype=float)
    n = matrix.shape[0]
    if n == 0:
        return np.zeros((0, 0)), 0.0
    if jitter is None:
        jitter = default_jitter(matrix)
    floor = max(jitter, default_jitter(matrix))
    identity = np.eye(n)
    used = jitter

    try:
        for attempt in Retrying(
            stop=stop_after_attempt(max_attempts),
            retry=retry_if_exception_type(np.linalg.LinAlgError),
            before_sleep=before_sleep_log(logger, logging.DEBUG),
            reraise=True,
        ):
            with attempt:
                number = attempt.retry_state.attempt_number
                used = jitter if number == 1 else floor * 2.0 ** (number - 1)
                factor = scipy.linalg.cholesky(matrix + used * identity, lower=True)
    except np.linalg.LinAlgError as exc:
        raise IllConditionedError(
            f"Cholesky failed for a {n}x{n} matrix after {max_attempts} "
            f"attempts (last jitter {used:.3g})"
        ) from exc

    if used != jitter:
        logger.debug(f"Cholesky needed jitter escalation: {jitter:.3g} -> {used:.3g}")
    return factor, used
