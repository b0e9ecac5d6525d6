"""Exception types shared across the package.

Every error raised on a bad input carries enough context to act on (file,
field, expected vs found). CLI code maps these onto exit codes: config and
data problems exit 2, numerical failures exit 3.
"""


class SelfspikeError(Exception):
    """Base class for all package errors."""


class ConfigError(SelfspikeError):
    """Invalid configuration value, key, or file."""


class DataFormatError(SelfspikeError):
    """Malformed or inconsistent data file (IDX, trace input, CSV)."""


class CheckpointError(SelfspikeError):
    """Malformed checkpoint, or checkpoint incompatible with the run."""


class NumericsError(SelfspikeError):
    """Non-finite value where a finite one is required (named parameter)."""
