"""
Exception hierarchy for constrained GP workflows.

Every error carries the exit code the CLI reports for it.
"""

from typing import Any, Dict, List, Optional


class ConstrainedGPError(Exception):
    """Base class for all library errors"""

    exit_code = 1


class InvalidArgumentError(ConstrainedGPError, ValueError):
    """Bad shapes, out-of-range values or inconsistent arguments"""


class InvalidSystemError(InvalidArgumentError):
    """Linear constraint system violating its rank or bound invariants"""


class MalformedInputError(ConstrainedGPError):
    """Unparseable CSV or configuration file"""

    def __init__(self, message: str, path: Optional[str] = None, line: Optional[int] = None):
        location = ""
        if path is not None:
            location = f"{path}"
            if line is not None:
                location += f":{line}"
            location += ": "
        super().__init__(location + message)
        self.path = path
        self.line = line


class InfeasibleProblemError(ConstrainedGPError):
    """The constraint set (with the interpolation conditions) is empty"""

    exit_code = 2

    def __init__(self, message: str, certificate: Optional[Dict[str, Any]] = None):
        super().__init__(message)
        self.certificate = certificate or {}


class IllConditionedError(ConstrainedGPError):
    """Cholesky factorisation failed even after jitter escalation"""

    exit_code = 3


class NonConvergenceError(ConstrainedGPError):
    exit_code = 4

    def __init__(self, message: str, best_iterate: Any = None):
        super().__init__(message)
        self.best_iterate = best_iterate


class InconsistentEtaError(ConstrainedGPError):
    """eta is not in the image of Lambda (a sampler produced garbage)"""

    exit_code = 4

    def __init__(self, message: str, residual: float):
        super().__init__(message)
        self.residual = residual


class LowAcceptanceError(ConstrainedGPError):
    """Rejection cap reached before enough draws were accepted"""

    exit_code = 5

    def __init__(self, message: str, partial_chain: Any = None):
        super().__init__(message)
        self.partial_chain = partial_chain


class StuckChainError(LowAcceptanceError):
    """A Metropolis chain rejected every proposal for too long"""


class UndefinedStatisticError(ConstrainedGPError, ValueError):
    """A diagnostic is undefined for the given input (zero variance, ...)"""


class EstimationFailedError(ConstrainedGPError):
    exit_code = 4

    def __init__(self, message: str, trace: Optional[List[Any]] = None):
        super().__init__(message)
        self.trace = trace or []
