"""Exception types shared across the package."""


class CorridorPilotError(Exception):
    """Base class for all package errors."""


class DimensionError(CorridorPilotError):
    """Array shapes do not compose."""


class NumericError(CorridorPilotError):
    """A computation produced NaN or Inf."""


class DomainError(CorridorPilotError):
    """An argument is outside its valid domain."""


class StateError(CorridorPilotError):
    """An operation was invoked in a state that forbids it."""


class FormatError(CorridorPilotError):
    """A serialized artifact is malformed or truncated."""
