"""Exception hierarchy shared across the toolkit.

Everything derives from MintError so callers can catch domain errors with a
single except clause; the CLI maps MintError to exit code 1.
"""


class MintError(Exception):
    """Base class for all toolkit errors."""


class InsufficientSamplesError(MintError, ValueError):
    """Too few rows for the requested operation."""


class DegenerateLabelsError(MintError, ValueError):
    """A label set that must contain both origin tags contains only one."""


class ShapeError(MintError, ValueError):
    """Mismatched array shapes between related arguments."""


class InvalidGroupingError(MintError, ValueError):
    """Group count incompatible with the filter count."""


class SamplingError(MintError, ValueError):
    """A class-stratified subsample cannot be drawn as requested."""


class TrainingFailureError(MintError, RuntimeError):
    """Loss became non-finite during optimization."""


class FormatError(MintError, ValueError):
    """A file does not follow the declared layout (bad magic, bad field)."""


class CorruptionError(MintError, ValueError):
    """A file follows the layout but its size accounting is inconsistent."""


class ConfigError(MintError, ValueError):
    """Unknown key or unparseable value in a configuration document."""
