"""Error codes and exceptions raised by the simulation services."""
from enum import Enum
from typing import List


class ErrorCode(str, Enum):
    # Config validation
    SCHEMA = "SCHEMA"
    B1_RANGE = "B1_RANGE"
    NONPOSITIVE = "NONPOSITIVE"
    SEED_MISSING = "SEED_MISSING"
    SEED_RANGE = "SEED_RANGE"
    SHAPE_MISMATCH = "SHAPE_MISMATCH"

    # Engine and estimators
    NON_FINITE = "NON_FINITE"
    NEGATIVE_START = "NEGATIVE_START"
    NONPOSITIVE_EPS = "NONPOSITIVE_EPS"
    HORIZON_EXCEEDS_PATH = "HORIZON_EXCEEDS_PATH"
    EMPTY_ENSEMBLE = "EMPTY_ENSEMBLE"
    DEGENERATE_WEIGHTS = "DEGENERATE_WEIGHTS"
    CONSTRAINT_VIOLATION = "CONSTRAINT_VIOLATION"

    # Oracles and statistics
    DIMENSION_TOO_LARGE = "DIMENSION_TOO_LARGE"
    BUDGET_EXCEEDED = "BUDGET_EXCEEDED"
    ALPHA_RANGE = "ALPHA_RANGE"
    EMPTY_SAMPLE = "EMPTY_SAMPLE"

    # CLI
    UNKNOWN_SUITE = "UNKNOWN_SUITE"


class SkewSimError(ValueError):
    """
    Base error for every failure a service reports to its caller.
    """

    def __init__(self, code: ErrorCode, message: str):
        super().__init__(f"{code.value}: {message}")
        self.code = code
        self.message = message


class ConfigValidationError(SkewSimError):
    """
    Raised by validate_config with the full list of issues found.
    """

    def __init__(self, issues: List["ConfigIssue"]):  # noqa: F821
        self.issues = list(issues)
        codes = ", ".join(sorted({issue.code.value for issue in self.issues}))
        super().__init__(self.issues[0].code, f"{len(self.issues)} config issue(s): {codes}")
