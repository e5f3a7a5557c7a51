"""Exception types shared across the toolkit."""


class MrdnError(Exception):
    """Base class for all toolkit errors."""


class ShapeMismatchError(MrdnError):
    """Operand shapes are incompatible for the requested operation."""


class DataError(MrdnError):
    """Bad image file, manifest, or dataset precondition."""


class CheckpointError(MrdnError):
    """Corrupt, mismatched, or unreadable checkpoint."""


class ConfigError(MrdnError):
    """Invalid run configuration or CLI usage."""
