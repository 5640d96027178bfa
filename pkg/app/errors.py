"""Exception hierarchy shared by the library and the CLI.

Library code raises these; only the command handlers translate them into exit
codes (see ``exit_code_for``).
"""

from __future__ import annotations


class FastenerError(Exception):
    """Base class for every error raised by fastener."""


class InvalidParamsError(FastenerError, ValueError):
    """Parameters violate a documented precondition (e.g. K > d, M even)."""


class CapacityError(FastenerError):
    """An exact enumeration or evaluation would exceed its guard."""

    def __init__(self, what: str, needed: int | float, limit: int | float):
        self.what = what
        self.needed = needed
        self.limit = limit
        super().__init__(f"{what}: needs {needed:g} states, limit is {limit:g}")


class UnsupportedTemplateError(FastenerError):
    """A closed form is not available for this template class."""


class MissingCenteringError(FastenerError):
    """A component of a template has no known centering constant."""


class InsufficientSamplesError(FastenerError):
    """Too few rows to host one labeling per batch."""


class PartitionError(FastenerError, ValueError):
    """Partitions do not cover the same ground set exactly once."""


class MomentIdentityError(FastenerError):
    """An identity that must hold between computed moments failed."""


class ConfigError(FastenerError):
    """A config file is missing, unreadable, or fails schema validation."""


# Usage-type failures map to 2, verdict failures map to 1.
_USAGE_ERRORS = (
    InvalidParamsError,
    CapacityError,
    ConfigError,
    UnsupportedTemplateError,
    MissingCenteringError,
    InsufficientSamplesError,
    PartitionError,
)


def exit_code_for(exc: FastenerError) -> int:
    if isinstance(exc, _USAGE_ERRORS):
        return 2
    return 1


__all__ = [
    "FastenerError",
    "InvalidParamsError",
    "CapacityError",
    "UnsupportedTemplateError",
    "MissingCenteringError",
    "InsufficientSamplesError",
    "PartitionError",
    "MomentIdentityError",
    "ConfigError",
    "exit_code_for",
]
