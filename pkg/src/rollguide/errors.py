"""Exception types shared across the package."""


class RollguideError(Exception):
    """Base class for all package errors."""


class ParameterError(RollguideError, ValueError):
    """An argument violates a documented precondition."""


class ShapeError(RollguideError, ValueError):
    """Array shapes are inconsistent with the operation's contract."""


class NumericError(RollguideError, ArithmeticError):
    """A computation left the numerically valid regime (underflow, div by zero)."""


class StateError(RollguideError, RuntimeError):
    """An object was used before being initialized or trained."""


class CapabilityError(RollguideError, TypeError):
    """The requested operation needs a capability the object does not have,
    e.g. an analytic gradient of a non-differentiable loss."""


class TrainingError(RollguideError, RuntimeError):
    """Denoiser training failed (e.g. loss became NaN)."""

    def __init__(self, message, step=None):
        super().__init__(message)
        self.step = step


class FormatError(RollguideError, ValueError):
    """A binary file does not follow its documented layout."""


class MidiParseError(FormatError):
    """Malformed Standard MIDI File; carries the offending byte offset."""

    def __init__(self, message, offset):
        super().__init__(f"{message} (byte offset {offset})")
        self.offset = offset


class EfficiencyError(RollguideError, RuntimeError):
    """Rejection sampling acceptance rate is too low to be practical."""
