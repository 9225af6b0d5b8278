"""Exception types raised across the package."""


class WildSizeError(Exception):
    """Base class for all package errors."""


class SingularDesignError(WildSizeError):
    """X'X is numerically singular or rank(X) < k."""


class RestrictionError(WildSizeError):
    """The restriction (R, r) is malformed or R(X'X)^-1 R' is singular."""


class EnumerationCapError(WildSizeError):
    """Exact enumeration of the multiplier support would be too large."""


class AssumptionViolation(WildSizeError):
    """The rank assumption required by a heteroskedasticity-robust statistic fails.

    ``assumption`` is 1 (unrestricted residuals) or 2 (restricted residuals).
    """

    def __init__(self, assumption: int, message: str | None = None):
        self.assumption = assumption
        super().__init__(message or f"Assumption {assumption} is violated for this design")


class ScenarioInfeasible(WildSizeError):
    """No admissible design matrix was produced during a search."""


class CodeParseError(WildSizeError, ValueError):
    """A procedure code string could not be parsed."""

    def __init__(self, field: str, value: str, message: str):
        self.field = field
        self.value = value
        super().__init__(f"{field}: {message} (got {value!r})")
