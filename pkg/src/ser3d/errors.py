"""Exception hierarchy shared by every stage of the pipeline.

Each class carries an ``exit_code`` so the CLI can map failures onto its
documented process exit status without a lookup table.
"""


class Ser3dError(Exception):
    exit_code = 3


class DimensionError(Ser3dError, ValueError):
    """Array shapes do not line up with what an operation expects."""


class NumericError(Ser3dError, ArithmeticError):
    """A NaN/Inf appeared, or a linear system could not be solved."""

    exit_code = 4


class ParameterError(Ser3dError, ValueError):
    pass


class DegenerateInputError(Ser3dError, ValueError):
    """Input carries no usable signal (silence, empty trace, ...)."""


class ConfigurationError(Ser3dError, ValueError):
    """Invalid experiment or architecture settings; reported as a usage error."""

    exit_code = 2


class DataError(Ser3dError, ValueError):
    """Malformed manifest rows, unreadable audio, bad trace files."""


class InsufficientDataError(Ser3dError, ValueError):
    pass


class CheckpointError(Ser3dError, ValueError):
    """Corrupted, truncated, or incompatible container files."""
