"""Exception hierarchy shared by all tobe modules."""


class TobeError(Exception):
    """Base class for all errors raised by this package."""


class ConfigurationError(TobeError):
    """A spec, band, port or config value is invalid before any work starts."""


class ContractError(TobeError):
    """A call violated a documented precondition (shape, length, state)."""


class FramingError(TobeError):
    """Bytes on the wire could not be decoded as a valid frame."""


class StreamClosedError(TobeError):
    """The peer went away; distinct from 'no data within the timeout'."""


class ReplayError(TobeError):
    """A recording file is malformed; carries the offending line number."""

    def __init__(self, message: str, line: int | None = None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line
