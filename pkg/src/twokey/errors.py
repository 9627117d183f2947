"""Exception hierarchy shared by every party in the protocol."""


class ProtocolError(Exception):
    """Base class for protocol-level refusals and violations."""

    code = "protocol-error"


class NotInGroupError(ProtocolError, ValueError):
    code = "not-in-group"


class CorruptionError(ProtocolError, ValueError):
    """A block or serialized value is structurally malformed."""

    code = "corruption"


class PaymentRequired(ProtocolError):
    code = "payment-required"


class Underpayment(ProtocolError):
    code = "underpayment"


class NotYetRekeyed(ProtocolError):
    """The record is still at its owner-supplied first epoch."""

    code = "not-yet-rekeyed"


class TemporarilyUnavailable(ProtocolError):
    """A rekey is in flight for the record; retry once it is acknowledged."""

    code = "temporarily-unavailable"


class EpochError(ProtocolError):
    """Out-of-order, replayed or gapped epoch."""

    code = "epoch-error"


class EpochMismatch(ProtocolError):
    code = "epoch-mismatch"


class DuplicateRecord(ProtocolError):
    code = "duplicate-record"


class UnknownRecord(ProtocolError):
    code = "unknown-record"


class NotBootstrapped(ProtocolError):
    code = "not-bootstrapped"


class AlreadyBootstrapped(ProtocolError):
    code = "already-bootstrapped"


class BootstrapAborted(ProtocolError):
    code = "bootstrap-aborted"


class ChannelError(ProtocolError):
    code = "channel-error"


class ReplayMismatch(ProtocolError):
    """Replaying a transcript diverged; ``seq`` names the first bad message."""

    code = "replay-mismatch"

    def __init__(self, seq, detail=""):
        self.seq = seq
        self.detail = detail
        super().__init__(f"replay diverged at seq {seq}: {detail}")


class ScenarioError(ProtocolError):
    code = "scenario-error"


_BY_CODE = {
    cls.code: cls
    for cls in (
        ProtocolError, NotInGroupError, CorruptionError, PaymentRequired,
        Underpayment, NotYetRekeyed, TemporarilyUnavailable, EpochError,
        EpochMismatch, DuplicateRecord, UnknownRecord, NotBootstrapped,
        AlreadyBootstrapped, BootstrapAborted, ChannelError, ScenarioError,
    )
}


def error_from_code(code: str, message: str = "") -> ProtocolError:
    """Rebuild a protocol exception from its wire code."""
    return _BY_CODE.get(code, ProtocolError)(message or code)
