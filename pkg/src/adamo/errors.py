"""Exception hierarchy shared by every adamo module."""


class AdamoError(Exception):
    """Base class for all errors raised by adamo."""


class ConfigError(AdamoError, ValueError):
    pass


class ParseError(AdamoError, ValueError):
    pass


class ValidationError(AdamoError, ValueError):
    pass


class DomainError(AdamoError, ValueError):
    pass


class ShapeError(DomainError):
    pass


class StateError(AdamoError, RuntimeError):
    pass


class AssemblyError(AdamoError, ValueError):
    pass


class CheckpointError(AdamoError, ValueError):
    pass


class FormatError(CheckpointError):
    """Raised when a checkpoint file is truncated or carries the wrong tag."""
