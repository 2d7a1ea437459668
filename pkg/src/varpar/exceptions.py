"""Exception hierarchy shared by every module."""


class VPError(Exception):
    """Base class for all errors raised by varpar."""


class InvalidArgumentError(VPError, ValueError):
    pass


class InvalidCalibrationError(InvalidArgumentError):
    pass


class InvalidContextError(InvalidArgumentError):
    pass


class MissingFixtureError(VPError, LookupError):
    pass


class FixtureFormatError(VPError, ValueError):
    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class ProtocolError(VPError):
    """Frame or message violates the wire protocol."""


class CorruptPayloadError(ProtocolError):
    """Payload is truncated or carries out-of-range fields."""


class NoResultError(VPError):
    """No prediction was available when the deadline window closed."""
