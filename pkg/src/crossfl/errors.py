"""Exception types shared across the package.

Grouped by the subsystem that raises them; everything derives from
CrossFLError so callers can catch broadly at process boundaries.
"""


class CrossFLError(Exception):
    """Base class for all errors raised by this package."""


# --- serialization / package format ---------------------------------------

class LengthMismatch(CrossFLError):
    """Byte count of an encoded tensor blob disagrees with its schema."""


class MissingVariant(CrossFLError):
    """A model package lacks a required platform variant."""


class SchemaMismatch(CrossFLError):
    """Parameter schema disagrees with an architecture, layout, or peer schema."""


class DigestMismatch(CrossFLError):
    """Decoded parameters do not hash to the digest recorded for them."""


class PackageFormatError(CrossFLError):
    """Package container is structurally unreadable (bad zip, bad manifest)."""


# --- parameter space --------------------------------------------------------

class UnknownName(CrossFLError):
    """An index-map layout carries a key the schema does not define."""


class MissingName(CrossFLError):
    """An index-map layout lacks a key the schema requires."""


class ShapeMismatch(CrossFLError):
    """A tensor's shape disagrees with the schema entry it must satisfy."""


class PathNotFound(CrossFLError):
    """A schema layer path does not resolve inside a layer tree."""


class EmptyUpdateList(CrossFLError):
    """Aggregation was asked to average zero updates."""


class NonFiniteValue(CrossFLError):
    """A parameter tensor contains NaN or infinity."""


# --- trainer ----------------------------------------------------------------

class DimensionMismatch(CrossFLError):
    """Input feature or target dimensions disagree with the model."""


class EmptyDataset(CrossFLError):
    """An operation that needs examples received none."""


class InvalidConfig(CrossFLError):
    """A config value violates its documented bounds."""


# --- wire protocol ----------------------------------------------------------

class ProtocolError(CrossFLError):
    """Base class for framing errors."""


class UnknownTag(ProtocolError):
    """Frame tag byte is not a known message type."""


class Truncated(ProtocolError):
    """Byte stream ended mid-frame."""


class FrameTooLarge(ProtocolError):
    """Declared frame length exceeds the hard cap."""


class HeaderParse(ProtocolError):
    """Frame header is not valid UTF-8 JSON with the required fields."""


# --- FL server --------------------------------------------------------------

class PortUnavailable(CrossFLError):
    """The session's configured TCP port could not be bound."""


class ClientSchemaMismatch(CrossFLError):
    """A joining client announced a schema digest the session does not serve."""


class RoundTimeout(CrossFLError):
    """A round's update or eval collection exceeded the timeout."""


class SessionFailed(CrossFLError):
    """The session aborted before completing all rounds."""

    def __init__(self, message, round_records=()):
        super().__init__(message)
        self.round_records = list(round_records)


# --- backend ----------------------------------------------------------------

class ValidationFailed(CrossFLError):
    """An uploaded package failed validation; wraps the package error."""


class DuplicateVersion(CrossFLError):
    """A (name, version) pair is already registered."""


class NoModelForDataType(CrossFLError):
    """No registered model matches the requested data type and platform."""


class NotFound(CrossFLError):
    """The requested model record does not exist."""


class PortRangeExhausted(CrossFLError):
    """No free port remains in the configured session port range."""


class MalformedRecord(CrossFLError):
    """A telemetry record failed field validation."""


# --- client runtime ---------------------------------------------------------

class BackendUnreachable(CrossFLError):
    """The backend did not answer within the retry budget."""


class SessionRejected(CrossFLError):
    """The FL server refused this client's join."""


class TransportError(CrossFLError):
    """The FL session connection broke mid-protocol."""
