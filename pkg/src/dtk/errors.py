"""Exception types shared across the toolkit."""


class ToolkitError(Exception):
    """Base class for every error the toolkit raises deliberately."""


class ShapeError(ToolkitError):
    """Operand shapes are incompatible with the requested operation."""


class NumericError(ToolkitError):
    """A computation produced or received non-finite values."""


class FormatError(ToolkitError):
    """A file or byte stream does not match its documented layout."""


class MappingError(ToolkitError):
    """Named tensors could not be matched onto graph parameters."""


class ConfigError(ToolkitError):
    """An architecture or run configuration is invalid."""


class StateError(ToolkitError):
    """Optimizer or activation-cache state is inconsistent with the request."""


class InputError(ToolkitError):
    """Caller-supplied data violates a documented precondition."""
