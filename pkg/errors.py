"""
Error types shared by the library modules and the command-line stages.

Every error carries the exit code the CLI should terminate with.
"""


class PipelineError(Exception):
    """Base class for all pipeline failures."""

    exit_code = 2


class UsageError(PipelineError):
    """Bad command-line flags or configuration keys."""

    exit_code = 1


class DataError(PipelineError, ValueError):
    """Malformed manifests, CSV files, shapes or graph inputs."""

    exit_code = 2


class NumericalError(PipelineError, ArithmeticError):
    """NaN losses, singular systems and other numerical breakdowns."""

    exit_code = 3
