"""Exception hierarchy for HPDM.

Every error carries the CLI exit code it maps to:
0 success, 2 config error, 3 data error, 4 numeric abort.
"""

from typing import Optional, Sequence


class HPDMError(Exception):
    """Base class for all HPDM errors."""

    exit_code: int = 1


class ConfigError(HPDMError):
    """Run configuration failed to parse or validate."""

    exit_code = 2

    def __init__(self, message: str, errors: Optional[Sequence[str]] = None):
        self.errors = list(errors or [])
        if self.errors:
            message = message + "\n" + "\n".join(f"  - {e}" for e in self.errors)
        super().__init__(message)


class DataError(HPDMError):
    """A file or record on disk is malformed."""

    exit_code = 3


class BadMagicError(DataError):
    """File does not start with the expected magic bytes."""


class ChecksumError(DataError):
    """Stored CRC32 does not match the payload."""


class TruncatedError(DataError):
    """File ended before the declared payload."""


class CacheError(DataError):
    """Activation cache queried for an entry that was never stored."""


class NumericError(HPDMError):
    """Training or sampling produced an unusable number."""

    exit_code = 4


class NonFiniteError(NumericError):
    """NaN or Inf appeared in an op output, a loss or a gradient."""

    def __init__(self, op: str, detail: str = ""):
        self.op = op
        msg = f"non-finite values produced by op '{op}'"
        super().__init__(f"{msg}: {detail}" if detail else msg)


class ShapeError(HPDMError, ValueError):
    """Operand shapes are incompatible for an op."""

    exit_code = 4

    def __init__(self, op: str, *shapes: Sequence[int], detail: str = ""):
        self.op = op
        self.shapes = [tuple(s) for s in shapes]
        rendered = " vs ".join(str(list(s)) for s in self.shapes)
        msg = f"shape mismatch in '{op}': {rendered}"
        super().__init__(f"{msg} ({detail})" if detail else msg)


class GeometryError(HPDMError, ValueError):
    """Patch coordinates violate containment or alignment rules."""

    exit_code = 2


class GridRangeError(GeometryError):
    """A grid-sample query lies outside the unit cube."""

    def __init__(self, index: int, query: Sequence[float]):
        self.index = index
        self.query = tuple(float(q) for q in query)
        super().__init__(f"grid-sample query {index} out of range: {self.query}")


class NotOnTapeError(NumericError):
    """Backward was asked for a loss that no recorded op produced."""


class NondeterministicError(NumericError):
    """Two evaluations of the same function on the same input differed."""


class UnknownClassError(HPDMError, ValueError):
    """Class label outside the configured vocabulary."""

    exit_code = 2
