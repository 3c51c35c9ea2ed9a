"""Exception hierarchy. CLI exit codes: config 2, resource 3, internal 4."""


class BlockwalkError(Exception):
    """Base class for all package errors."""


class ConfigurationError(BlockwalkError):
    """Invalid partition, environment, strategy, or experiment config."""

    def __init__(self, message: str, field: str | None = None):
        self.field = field
        if field is not None:
            message = f"{field}: {message}"
        super().__init__(message)


class UnsupportedError(ConfigurationError):
    """Requested a combination the module deliberately does not handle."""


class ResourceLimitError(BlockwalkError):
    """Work exceeds an enforced cutoff (enumeration horizon, step budget)."""


class CoordinateOverflowError(ResourceLimitError):
    """A coordinate left the signed 32-bit range; the walk never wraps silently."""


class InvariantError(BlockwalkError):
    """Internal bookkeeping violated an invariant; indicates a bug."""
