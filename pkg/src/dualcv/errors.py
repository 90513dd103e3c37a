"""Exception hierarchy shared across the package."""


class DualCVError(Exception):
    """Base class for all package errors."""


class DomainError(DualCVError, ValueError):
    """Argument outside the mathematical domain of a function."""


class SchemaError(DualCVError):
    """Schema configuration is incomplete or inconsistent with the data."""


class DataParseError(DualCVError):
    """A CSV cell could not be parsed; carries row and column."""

    def __init__(self, message, row=None, column=None):
        self.row = row
        self.column = column
        loc = []
        if row is not None:
            loc.append(f"row {row}")
        if column is not None:
            loc.append(f"column {column!r}")
        super().__init__(f"{message} ({', '.join(loc)})" if loc else message)


class DataValidationError(DataParseError):
    """A parsed value violates its domain (e.g. a non-binary response)."""


class SpecError(DualCVError):
    """Model specification is malformed or does not match the data."""


class EstimationError(DualCVError):
    """Base class for estimation failures."""


class SeparationError(EstimationError):
    """A regressor (nearly) perfectly predicts the outcome."""


class RankDeficientError(EstimationError):
    """Regressor matrix does not have full column rank."""


class ConvergenceError(EstimationError):
    """Optimizer failed to converge; ``result`` holds the last iterate."""

    def __init__(self, message, result=None):
        super().__init__(message)
        self.result = result


class WelfareSignError(DualCVError, ValueError):
    """Bid coefficient is non-negative, so the compensating surplus is undefined."""
