"""Exception types shared across the package.

Every failure mode surfaces as a subclass of :class:`TrimdrError` so the CLI
can map errors to stable exit codes (2 = configuration, 3 = input schema,
4 = numerical failure).
"""

from __future__ import annotations


class TrimdrError(Exception):
    """Base class for all package errors."""

    exit_code = 4


class ConfigError(TrimdrError):
    """Invalid run configuration (bad flag values, impossible settings)."""

    exit_code = 2


class SchemaError(TrimdrError):
    """Malformed input data (missing columns, non-binary indicators, ...)."""

    exit_code = 3


class NonFinite(TrimdrError):
    """NaN or Inf encountered where a finite value is required."""


class IllConditioned(TrimdrError):
    """A linear system's condition estimate exceeded the solver limit."""

    def __init__(self, message: str, cond: float = float("inf")):
        super().__init__(message)
        self.cond = cond


class DegenerateTrim(TrimdrError):
    """Every observation fell below the trimming threshold."""


class Separation(TrimdrError):
    """Logistic fit diverged: one outcome class is perfectly predicted."""


class NoConvergence(TrimdrError):
    """Iterative fit did not reach tolerance within the iteration budget."""


class RankDeficient(TrimdrError):
    """Regression design matrix does not have full column rank."""


class WeakInstrument(TrimdrError):
    """First-stage denominator too close to zero for a ratio estimand."""


class DomainError(TrimdrError):
    """Estimand combination map is undefined at the supplied moments."""
