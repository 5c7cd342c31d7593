"""Shared toolkit exceptions and the CLI exit-code contract."""

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_GUARD = 2
EXIT_PARTIAL = 3


class MetastabError(Exception):
    """Base class for toolkit failures."""

    exit_code = EXIT_FAILURE


class ArgumentError(MetastabError, ValueError):
    """Raised when an operation receives arguments it cannot accept."""

    exit_code = EXIT_GUARD


class DomainError(MetastabError, ValueError):
    """Raised when an input lies outside the mathematical domain of an operation."""

    exit_code = EXIT_GUARD


class GuardViolation(MetastabError):
    """Raised when the parameters violate the regime an experiment requires."""

    exit_code = EXIT_GUARD


class UnsupportedRateError(MetastabError):
    """Raised when an operation needs the piecewise-linear rate but got another one."""

    exit_code = EXIT_GUARD


class ConstructionError(MetastabError):
    """Raised when a derived object fails its validity checks."""


class NoEquilibriumError(MetastabError):
    """Raised when no sign change of h*p_a - a was found."""

    def __init__(self, message: str, profile: list[tuple[float, float]] | None = None):
        super().__init__(message)
        self.profile = profile or []


class ConvergenceError(MetastabError):
    """Raised when an iterative scheme stops without meeting its tolerance."""

    def __init__(self, message: str, history: list[float] | None = None):
        super().__init__(message)
        self.history = history or []


class CalibrationError(MetastabError):
    """Raised when an empirical survival curve never enters the calibration bracket."""


class ConsistencyError(MetastabError):
    """Raised when two independent evaluations of the same quantity disagree."""


class NonExactQuadratureWarning(UserWarning):
    """Emitted when a closed form is unavailable and quadrature is used instead."""


class ArtifactError(MetastabError):
    """Raised when an output file or directory cannot be written."""

    def __init__(self, message: str, path=None):
        super().__init__(message)
        self.path = path
