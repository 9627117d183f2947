"""Protocol message taxonomy and its line-oriented wire/transcript encoding.

Integers and byte strings travel as lowercase hex. A message's payload must
carry exactly the fields registered for its type; ``ServeX``/``ServeY`` also
have a refusal shape ``{i, error}``.
"""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass, field
from typing import Any

from .errors import CorruptionError
from .modmath import element_bytes


class MsgType(str, enum.Enum):
    BOOTSTRAP_X = "BootstrapX"
    BOOTSTRAP_Y = "BootstrapY"
    PROVISION_X = "ProvisionX"
    PROVISION_Y = "ProvisionY"
    REKEY_INIT = "RekeyInit"
    REKEY_ACK = "RekeyAck"
    REKEY_REQUEST = "RekeyRequest"
    FETCH_REQUEST_X = "FetchRequestX"
    FETCH_REQUEST_Y = "FetchRequestY"
    SERVE_X = "ServeX"
    SERVE_Y = "ServeY"
    PAY = "Pay"


INT, BYTES, STR, INTS = "int", "bytes", "str", "ints"

SCHEMA: dict[MsgType, dict[str, str]] = {
    MsgType.BOOTSTRAP_X: {"master_key": BYTES},
    MsgType.BOOTSTRAP_Y: {"master_key": BYTES},
    MsgType.PROVISION_X: {"i": INT, "j": INT, "g": INT, "blocks": INTS, "original_length": INT},
    MsgType.PROVISION_Y: {"i": INT, "j": INT, "g": INT, "block_count": INT},
    MsgType.REKEY_INIT: {"i": INT, "j": INT, "ck_y": INTS},
    MsgType.REKEY_ACK: {"i": INT, "j": INT},
    MsgType.REKEY_REQUEST: {"i": INT, "j": INT, "consumer": STR},
    MsgType.FETCH_REQUEST_X: {"i": INT, "consumer": STR},
    MsgType.FETCH_REQUEST_Y: {"i": INT, "consumer": STR},
    MsgType.SERVE_X: {"i": INT, "j": INT, "g": INT, "blocks": INTS, "inv_x": INTS, "original_length": INT},
    MsgType.SERVE_Y: {"i": INT, "j": INT, "inv_y": INTS},
    MsgType.PAY: {"i": INT, "payer": STR, "amount": INT},
}

REFUSAL_SCHEMA = {"i": INT, "error": STR}
REFUSABLE = {MsgType.SERVE_X, MsgType.SERVE_Y}


def schema_for(msg_type: MsgType, payload: dict) -> dict[str, str]:
    if msg_type in REFUSABLE and "error" in payload:
        return REFUSAL_SCHEMA
    return SCHEMA[msg_type]


@dataclass
class ProtocolMessage:
    msg_type: MsgType
    sender: str
    receiver: str
    payload: dict[str, Any]
    seq: int = -1
    cause: int | None = None
    action: int | None = None
    dropped: bool = False
    wire: bytes | None = field(default=None, repr=False)

    def __post_init__(self):
        self.msg_type = MsgType(self.msg_type)
        expected = schema_for(self.msg_type, self.payload)
        if set(self.payload) != set(expected):
            raise ValueError(
                f"{self.msg_type.value} payload fields {sorted(self.payload)} != {sorted(expected)}"
            )

    @property
    def record_id(self) -> int | None:
        return self.payload.get("i")

    @property
    def refused(self) -> bool:
        return "error" in self.payload

    def encoded_payload(self) -> dict[str, Any]:
        return encode_payload(self.msg_type, self.payload)

    def payload_bytes(self) -> bytes:
        """Canonical serialization of the payload, as sent over a channel."""
        return json.dumps(self.encoded_payload(), sort_keys=True, separators=(",", ":")).encode()

    def content_blob(self) -> bytes:
        """Raw bytes of every payload value, used when scanning for leaks."""
        parts = []
        for name, kind in schema_for(self.msg_type, self.payload).items():
            value = self.payload[name]
            if kind == INT:
                parts.append(element_bytes(value))
            elif kind == INTS:
                parts.extend(element_bytes(v) for v in value)
            elif kind == BYTES:
                parts.append(value)
            else:
                parts.append(value.encode())
        return b"\x00".join(parts)

    def same_content(self, other: "ProtocolMessage") -> bool:
        return (self.msg_type == other.msg_type and self.sender == other.sender
                and self.receiver == other.receiver and self.payload == other.payload)

    def to_record(self) -> dict[str, Any]:
        rec = {
            "seq": self.seq,
            "msg_type": self.msg_type.value,
            "sender": self.sender,
            "receiver": self.receiver,
            "payload": self.encoded_payload(),
        }
        if self.cause is not None:
            rec["cause"] = self.cause
        if self.action is not None:
            rec["action"] = self.action
        if self.dropped:
            rec["dropped"] = True
        if self.wire is not None:
            rec["wire"] = self.wire.hex()
        return rec

    @classmethod
    def from_record(cls, rec: dict[str, Any]) -> "ProtocolMessage":
        try:
            msg_type = MsgType(rec["msg_type"])
            payload = decode_payload(msg_type, rec["payload"])
            return cls(
                msg_type, rec["sender"], rec["receiver"], payload,
                seq=rec.get("seq", -1), cause=rec.get("cause"), action=rec.get("action"), dropped=rec.get("dropped", False),
                wire=bytes.fromhex(rec["wire"]) if rec.get("wire") else None,
            )
        except (KeyError, ValueError, TypeError) as exc:
            raise CorruptionError(f"malformed message record: {exc}") from None

    def to_line(self) -> str:
        return json.dumps(self.to_record(), sort_keys=True)


def _hex_int(v: int) -> str:
    return format(v, "x")


def encode_payload(msg_type: MsgType, payload: dict) -> dict[str, Any]:
    out = {}
    for name, kind in schema_for(msg_type, payload).items():
        value = payload[name]
        if kind == INT:
            out[name] = _hex_int(value)
        elif kind == INTS:
            out[name] = [_hex_int(v) for v in value]
        elif kind == BYTES:
            out[name] = value.hex()
        else:
            out[name] = value
    return out


def decode_payload(msg_type: MsgType, raw: dict) -> dict[str, Any]:
    out = {}
    for name, kind in schema_for(msg_type, raw).items():
        value = raw[name]
        if kind == INT:
            out[name] = int(value, 16)
        elif kind == INTS:
            out[name] = [int(v, 16) for v in value]
        elif kind == BYTES:
            out[name] = bytes.fromhex(value)
        else:
            out[name] = str(value)
    return out
