"""Shared exception types used across the engine."""

from __future__ import annotations


class DataError(ValueError):
    """Malformed or unusable input data."""


class InsufficientHistory(ValueError):
    """Not enough observations for the requested operation."""


class DegenerateWindow(ValueError):
    """Regression design is rank deficient (constant or collinear series)."""


class EstimationError(RuntimeError):
    """Every candidate estimation failed and no fallback applies."""


class ConfigError(ValueError):
    """Invalid run configuration; carries one message per offending field."""

    def __init__(self, problems: object):
        if isinstance(problems, (list, tuple)):
            self.problems = tuple(str(p) for p in problems)
        else:
            self.problems = (str(problems),)
        super().__init__("; ".join(self.problems))
