"""Exception hierarchy shared by all umlr modules.

Every error raised by the library derives from :class:`UmlrError`, so callers
(and the CLI) can catch one base class and map subclasses to stable error
codes.
"""


class UmlrError(Exception):
    """Base class for all umlr errors."""

    code = "umlr_error"


class InvalidInputError(UmlrError, ValueError):
    """Inputs violate a documented precondition (shape, domain, finiteness)."""

    code = "invalid_input"


class DegeneratePartitionError(UmlrError):
    """Outcome partition collapsed (above-mean group empty); anchoring undefined."""

    code = "degenerate_partition"


class SingularSystemError(UmlrError):
    """A linear system required by a fit has no unique solution."""

    code = "singular_system"


class RecalibrationSingularError(SingularSystemError):
    """Anchoring 2x2 system singular: base predictions have equal group means."""

    code = "recalibration_singular"


class ConvergenceError(UmlrError):
    """Iterative solver failed to reach its tolerance within the iteration cap."""

    code = "non_convergence"


class UndefinedSlopeError(UmlrError):
    """Calibration slope undefined because the reference outcome is constant."""

    code = "undefined_slope"


class OracleUnavailableError(UmlrError):
    """A computation needs simulation-only oracle quantities that are missing."""

    code = "oracle_unavailable"


class DivisionGuardError(UmlrError):
    """Inverse-probability weight would divide by a propensity of 0 or 1."""

    code = "division_guard"


class NoMatchesError(UmlrError):
    """Propensity matching produced zero pairs under the caliper."""

    code = "no_matches"


class ResamplingError(UmlrError):
    """A resampling scheme (cross-fitting fold, arm split) lost a treatment arm."""

    code = "resampling"


class UnstableBootstrapError(UmlrError):
    """Too many bootstrap resamples failed for the interval to be trusted."""

    code = "unstable_bootstrap"

    def __init__(self, failure_rate: float, message: str | None = None):
        self.failure_rate = failure_rate
        super().__init__(
            message or f"estimator failed on {failure_rate:.1%} of bootstrap resamples"
        )


class CsvParseError(InvalidInputError):
    """A CSV cell or column could not be parsed; carries row/column context."""

    code = "csv_parse"
