"""Exception hierarchy shared across the package.

Validation errors cover bad inputs, broken preconditions, and ingestion
problems (CLI exit code 1). Numerical errors cover non-finite values and
singular systems (CLI exit code 2).
"""

from __future__ import annotations


class RoadflowError(Exception):
    """Base class for all errors raised by this package."""


class ValidationError(RoadflowError):
    """Invalid input data, configuration, or violated precondition."""


class NumericalError(RoadflowError):
    """Non-finite value produced or a linear system could not be solved."""


class UndefinedMetricError(RoadflowError):
    """A metric is mathematically undefined for the given series."""
