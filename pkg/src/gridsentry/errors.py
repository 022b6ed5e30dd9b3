"""Exception taxonomy shared by all gridsentry modules."""


class ToolkitError(Exception):
    """Base class for every structured gridsentry failure."""


class UnsupportedFormatError(ToolkitError):
    """Input file is not a format this toolkit reads (e.g. bad pcap magic)."""


class TruncatedCaptureError(ToolkitError):
    """A pcap record ended mid-frame."""

    def __init__(self, message, frame_index):
        super().__init__(f"{message} (after frame {frame_index})")
        self.frame_index = frame_index


class OrderingViolationError(ToolkitError):
    """Frames handed to write_pcap were not timestamp-ordered."""


class ProtocolMismatchError(ToolkitError):
    """Frame ethertype does not match the requested decoder."""


class DecodeError(ToolkitError):
    """Malformed TLV structure; carries the byte offset of the failure."""

    def __init__(self, message, offset):
        super().__init__(f"{message} at offset {offset}")
        self.offset = offset


class MissingFieldError(ToolkitError):
    """A mandatory protocol field was absent."""

    def __init__(self, field):
        super().__init__(f"missing mandatory field {field!r}")
        self.field = field


class UnsupportedShapeError(ToolkitError):
    """Structurally valid input outside the supported protocol subset."""


class InvariantViolationError(ToolkitError):
    """A domain-type invariant does not hold."""


class WrongStreamError(ToolkitError):
    """Record fed to a stream state belonging to a different stream key."""


class InputOrderError(ToolkitError):
    """Record timestamps regressed within one stream."""


class SchemaError(ToolkitError):
    """A dataset file violates the JSONL/CSV schema."""

    def __init__(self, message, line=None, field=None):
        detail = message
        if line is not None:
            detail += f" (line {line}"
            detail += f", field {field!r})" if field else ")"
        super().__init__(detail)
        self.line = line
        self.field = field


class UnsupportedInjectionError(ToolkitError):
    """Requested anomaly class is undefined for this protocol."""


class InsufficientCarrierError(ToolkitError):
    """The carrier dataset is too short/dense to host the injection safely."""
