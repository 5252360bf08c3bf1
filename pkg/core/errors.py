"""
Exception hierarchy for runtime failures.

Dataclass invariants are asserted in __post_init__ (AssertionError); these
exceptions cover operations on values that are individually well-formed
but do not fit together, plus file and numerical failures.
"""

from __future__ import annotations


class OrdinalGridError(Exception):
    """Base class for toolkit errors."""


class ShapeError(OrdinalGridError, ValueError):
    """Operands have incompatible shapes."""


class GraphReleasedError(OrdinalGridError, RuntimeError):
    """Backward requested through a graph whose buffers were released."""


class LabelRangeError(OrdinalGridError, ValueError):
    """Class index outside [0, C)."""


class MultiplicityOverflowError(OrdinalGridError, OverflowError):
    """Binomial count does not fit a signed 64-bit integer."""


class ConfigError(OrdinalGridError, ValueError):
    """Configuration document or override cannot be applied."""


class NumericalAbortError(OrdinalGridError, FloatingPointError):
    """Training produced a non-finite loss."""

    def __init__(self, step: int, detail: str = "") -> None:
        self.step = step
        msg = f"non-finite loss at step {step}"
        super().__init__(f"{msg}: {detail}" if detail else msg)


class PgmFormatError(OrdinalGridError, ValueError):
    """Binary PGM payload cannot be parsed."""


class PgmHeaderError(PgmFormatError):
    """Magic number, dimensions, or header layout is malformed."""


class PgmMaxvalError(PgmFormatError):
    """Maxval other than 255."""


class PgmTruncatedError(PgmFormatError):
    """Payload shorter than width * height bytes."""
