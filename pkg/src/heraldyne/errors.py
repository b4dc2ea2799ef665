"""Exception hierarchy shared across the toolkit.

Every failure the command-line surface can hit maps onto one of these, and
each class carries the process exit code the CLI reports for it.
"""

__all__ = [
    "HeraldyneError",
    "InputFormatError",
    "DegenerateDataError",
    "NoSignalError",
    "ReconstructionError",
]


class HeraldyneError(Exception):
    """Base class for all toolkit errors."""

    exit_code = 1


class InputFormatError(HeraldyneError):
    """Unreadable, malformed, or inconsistent input artifact."""

    exit_code = 2


class DegenerateDataError(InputFormatError):
    """Input parses but its content is unusable (e.g. zero variance)."""


class NoSignalError(HeraldyneError):
    """Variance trace shows no excess over the baseline anywhere."""

    exit_code = 3


class ReconstructionError(HeraldyneError):
    """Statistical reconstruction failed or did not converge."""

    exit_code = 4
