"""Exception types shared across the package.

Each maps to one machine-readable error category on the command line, so
callers can tell a bad config from degenerate data without parsing prose.
"""

from __future__ import annotations


class GraspolabError(Exception):
    """Base class for package errors."""

    category = "internal"


class ConfigError(GraspolabError):
    """Invalid or unknown configuration value."""

    category = "config"


class DataError(GraspolabError):
    """Malformed or unreadable input data."""

    category = "data"


class RankDeficiencyError(GraspolabError):
    """A matrix that needs a pseudoinverse does not have full rank."""

    category = "rank_deficiency"

    def __init__(self, message, rank=None):
        super().__init__(message)
        self.rank = rank


class SingularMatrixError(GraspolabError):
    """A square matrix that must be inverted is singular."""

    category = "singular_matrix"


class DegenerateAxisError(GraspolabError):
    """Per-axis regression has a zero denominator on the named axis."""

    category = "degenerate_axis"

    def __init__(self, axis, message=None):
        super().__init__(message or f"axis {axis}: all image coordinates identical, slope undefined")
        self.axis = axis


class CheckpointError(GraspolabError):
    """Weight stream is truncated, mislabeled, or does not match the network."""

    category = "checkpoint"


class EnvironmentError_(GraspolabError):
    """Simulated grasp cycle failed; message carries the episode index."""

    category = "environment"
