"""
Error taxonomy (domain)

Defines typed exceptions raised and propagated across layers. Every error
carries the process exit status the CLI reports for it:

- 1 (usage): UsageError, ConfigError, ParamValidationError
- 2 (data/format): ShapeError, SpecError, DatasetValidationError,
  ManifestParseError, TableFormatError, ConsistencyError, CheckpointFormatError,
  ExhaustedSamplerError, RejectedBatchError, LabelRangeError
- 3 (numerical): NumericalError, ConvergenceError, DegenerateInputError,
  InsufficientSamplesError
"""

from __future__ import annotations

from typing import Optional


EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_NUMERICAL = 3


class RepNetError(Exception):
    """Root of all errors raised by this package."""

    exit_code: int = EXIT_DATA


# -----------------------------------------------------------------------------
# Usage
# -----------------------------------------------------------------------------

class UsageError(RepNetError):
    """Bad command line (unknown flag, missing subcommand, missing input)."""

    exit_code = EXIT_USAGE


class ConfigError(RepNetError, ValueError):
    """Configuration loading/validation error."""

    exit_code = EXIT_USAGE


class ParamValidationError(RepNetError, ValueError):
    """User parameter out of its documented range (k < 1, unknown feature name, ...)."""

    exit_code = EXIT_USAGE


# -----------------------------------------------------------------------------
# Data / format
# -----------------------------------------------------------------------------

class ShapeError(RepNetError, ValueError):
    """Array dimensions disagree."""

    exit_code = EXIT_DATA


class SpecError(RepNetError, ValueError):
    """Synthetic data spec cannot be realised."""

    exit_code = EXIT_DATA


class DatasetValidationError(RepNetError, ValueError):
    """Labels violate the dataset invariants (range, ID -> attributes)."""

    exit_code = EXIT_DATA


class ManifestParseError(RepNetError, ValueError):
    """Malformed manifest row."""

    exit_code = EXIT_DATA

    def __init__(self, message: str, *, line: int):
        super().__init__(f"line {line}: {message}")
        self.line = line


class TableFormatError(RepNetError, ValueError):
    """Gallery, ranking or query file cannot be parsed or lacks a column."""

    exit_code = EXIT_DATA


class ConsistencyError(RepNetError, ValueError):
    """Two files that must describe the same samples disagree."""

    exit_code = EXIT_DATA


class CheckpointFormatError(RepNetError, ValueError):
    """Binary file (checkpoint or feature file) is corrupt or truncated."""

    exit_code = EXIT_DATA

    def __init__(self, message: str, *, offset: int):
        super().__init__(f"at byte {offset}: {message}")
        self.offset = offset


class ExhaustedSamplerError(RepNetError):
    """No triplet satisfying the hardest-triplet rule exists."""

    exit_code = EXIT_DATA


class RejectedBatchError(RepNetError, ValueError):
    """A triplet batch violates the sampling rule."""

    exit_code = EXIT_DATA


class LabelRangeError(RepNetError, IndexError):
    """Class label outside [0, C)."""

    exit_code = EXIT_DATA


# -----------------------------------------------------------------------------
# Numerical
# -----------------------------------------------------------------------------

class NumericalError(RepNetError, ArithmeticError):
    """Numerically unusable input (singular matrix, non-finite values)."""

    exit_code = EXIT_NUMERICAL


class ConvergenceError(NumericalError):
    """Iterative solver hit its iteration cap."""

    def __init__(self, message: str, *, residual: Optional[float] = None):
        if residual is not None:
            message = f"{message} (residual={residual:.3e})"
        super().__init__(message)
        self.residual = residual


class DegenerateInputError(NumericalError):
    """Input has zero variance where a statistic needs spread."""


class InsufficientSamplesError(NumericalError):
    """Too few samples for the requested statistic."""


__all__ = [
    "EXIT_USAGE",
    "EXIT_DATA",
    "EXIT_NUMERICAL",
    "RepNetError",
    "UsageError",
    "ConfigError",
    "ParamValidationError",
    "ShapeError",
    "SpecError",
    "DatasetValidationError",
    "ManifestParseError",
    "TableFormatError",
    "ConsistencyError",
    "CheckpointFormatError",
    "ExhaustedSamplerError",
    "RejectedBatchError",
    "LabelRangeError",
    "NumericalError",
    "ConvergenceError",
    "DegenerateInputError",
    "InsufficientSamplesError",
]
