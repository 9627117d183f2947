"""Security checks over a recorded transcript.

Checks, by letter:

a. Y never sends X an epoch-1 Y-key.
b. No message carries plaintext (any 16-byte window, or a whole plaintext
   block encoding).
c. Master keys appear only in the two bootstrap messages, each only to its
   own storage.
d. Every successful serve, by X and by Y, is covered by an earlier accepted
   payment from that consumer that the same side has not already used.
e. Epochs are strictly monotonic per record.
"""

from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass, field

from ..keyderive import MasterKey, Side, derive_content_key
from ..messages import INT, INTS, MsgType, ProtocolMessage, schema_for
from ..modmath import FieldParams, element_bytes, encode_record
from .scenario import price_of, resolve_params, resolve_records
from .transcript import Transcript

WINDOW = 16


@dataclass(frozen=True)
class Violation:
    check: str
    seq: int | None
    detail: str

    def __str__(self):
        where = "-" if self.seq is None else self.seq
        return f"({self.check}) seq {where}: {self.detail}"


@dataclass
class AuditReport:
    messages: int
    violations: list[Violation] = field(default_factory=list)
    notes: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations

    def by_check(self, check: str) -> list[Violation]:
        return [v for v in self.violations if v.check == check]

    def lines(self) -> list[str]:
        out = [f"audited {self.messages} messages: "
               + ("no violations" if self.ok else f"{len(self.violations)} violation(s)")]
        out += [str(v) for v in self.violations]
        out += [f"note: {n}" for n in self.notes]
        return out


def _ints(msg: ProtocolMessage, vectors_only: bool = False) -> list[int]:
    out = []
    for name, kind in schema_for(msg.msg_type, msg.payload).items():
        if kind == INT and not vectors_only:
            out.append(msg.payload[name])
        elif kind == INTS:
            out.extend(msg.payload[name])
    return out


def audit_transcript(t: Transcript, plaintexts: dict[int, bytes] | None = None,
                     params: FieldParams | None = None, base_dir=None) -> AuditReport:
    msgs = t.messages
    report = AuditReport(len(msgs))
    params = params or resolve_params(t.config.get("params"))
    if plaintexts is None:
        plaintexts = resolve_records(t.config, t.seed, base_dir)
    _check_master_keys(msgs, report)
    _check_epoch_one_keys(msgs, params, report)
    _check_plaintext(msgs, plaintexts, params, report)
    _check_payments(msgs, t.config, report)
    _check_epochs(msgs, report)
    return report


def _check_master_keys(msgs, report):
    keys = {}
    for m in msgs:
        if m.msg_type in (MsgType.BOOTSTRAP_X, MsgType.BOOTSTRAP_Y):
            want = "X" if m.msg_type is MsgType.BOOTSTRAP_X else "Y"
            if m.sender != "owner" or m.receiver != want:
                report.violations.append(Violation("c", m.seq, f"{m.msg_type.value} sent {m.sender}->{m.receiver}"))
            if want in keys and keys[want] != m.payload["master_key"]:
                report.violations.append(Violation("c", m.seq, f"second master key for {want}"))
            keys.setdefault(want, m.payload["master_key"])
    if "X" in keys and keys.get("X") == keys.get("Y"):
        report.violations.append(Violation("c", None, "X and Y received the same master key"))
    for m in msgs:
        if m.msg_type in (MsgType.BOOTSTRAP_X, MsgType.BOOTSTRAP_Y):
            other = keys.get("Y" if m.msg_type is MsgType.BOOTSTRAP_X else "X")
            if other is not None and other in m.payload["master_key"]:
                report.violations.append(Violation("c", m.seq, "bootstrap carries the other side's key"))
            continue
        blob = m.content_blob()
        for side, key in keys.items():
            if key in blob:
                report.violations.append(Violation("c", m.seq, f"mk_{side.lower()} inside {m.msg_type.value}"))


def _check_epoch_one_keys(msgs, params, report):
    mk_y = next((m.payload["master_key"] for m in msgs if m.msg_type is MsgType.BOOTSTRAP_Y), None)
    if mk_y is None:
        report.notes.append("no BootstrapY in transcript; epoch-1 key check limited to epoch tags")
    forbidden: dict[int, int] = {}  # key residue -> record
    if mk_y is not None:
        mk = MasterKey(mk_y, Side.Y)
        for m in msgs:
            if m.msg_type is MsgType.PROVISION_Y:
                i, g = m.payload["i"], m.payload["g"]
                for b in range(m.payload["block_count"]):
                    forbidden[derive_content_key(mk, g, i, 1, b, params).residue] = i
    for m in msgs:
        if m.sender != "Y" or m.receiver != "X":
            continue
        if m.msg_type is MsgType.REKEY_INIT and m.payload["j"] < 2:
            report.violations.append(Violation("a", m.seq, f"RekeyInit for epoch {m.payload['j']}"))
        blob = m.content_blob()
        for v in _ints(m):
            if v in forbidden:
                report.violations.append(Violation("a", m.seq, f"epoch-1 Y-key of record {forbidden[v]} sent to X"))
        for key, i in forbidden.items():
            if element_bytes(key) in blob and key not in _ints(m):
                report.violations.append(Violation("a", m.seq, f"epoch-1 Y-key bytes of record {i} sent to X"))


def _check_plaintext(msgs, plaintexts, params, report):
    windows: dict[bytes, int] = {}
    blocks: dict[int, int] = {}
    for i, data in plaintexts.items():
        for start in range(0, max(1, len(data) - WINDOW + 1)):
            chunk = data[start:start + WINDOW]
            if len(chunk) == WINDOW:
                windows.setdefault(chunk, i)
        try:
            for block in encode_record(data, params).blocks:
                blocks[block] = i
        except ValueError:
            pass  # field too small to encode records
    for m in msgs:
        blob = m.content_blob()
        hit = next((windows[blob[k:k + WINDOW]] for k in range(len(blob) - WINDOW + 1)
                    if blob[k:k + WINDOW] in windows), None)
        if hit is None:
            hit = next((blocks[v] for v in _ints(m, vectors_only=True) if v in blocks), None)
        if hit is not None:
            report.violations.append(Violation("b", m.seq, f"plaintext of record {hit} in {m.msg_type.value}"))


def _check_payments(msgs, config, report):
    paid: dict[tuple[int, str], int] = defaultdict(int)
    used = {"X": defaultdict(int), "Y": defaultdict(int)}
    for m in msgs:
        if m.msg_type is MsgType.PAY and not m.dropped:
            i = m.payload["i"]
            if m.payload["amount"] >= price_of(config, i) and m.payload["payer"] == m.sender:
                paid[(i, m.sender)] += 1
        elif m.msg_type in (MsgType.SERVE_X, MsgType.SERVE_Y) and not m.refused:
            side = "X" if m.msg_type is MsgType.SERVE_X else "Y"
            key = (m.payload["i"], m.receiver)
            used[side][key] += 1
            if used[side][key] > paid[key]:
                report.violations.append(Violation(
                    "d", m.seq, f"{side} served record {key[0]} to {key[1]} without an unused payment"))


def _check_epochs(msgs, report):
    provisioned: dict[tuple[str, int], int] = {}
    last_init: dict[int, int] = {}
    last_ack: dict[int, int] = {}
    last_serve: dict[tuple[str, int], int] = {}
    for m in msgs:
        t, pl = m.msg_type, m.payload
        if t in (MsgType.PROVISION_X, MsgType.PROVISION_Y):
            key = (t.value, pl["i"])
            if key in provisioned or pl["j"] != 1:
                report.violations.append(Violation("e", m.seq, f"{t.value} of record {pl['i']} at epoch {pl['j']}"))
            provisioned[key] = m.seq
        elif t is MsgType.REKEY_INIT:
            prev = last_init.get(pl["i"], 1)
            if pl["j"] != prev + 1:
                report.violations.append(Violation("e", m.seq, f"RekeyInit epoch {pl['j']} after {prev}"))
            last_init[pl["i"]] = max(prev, pl["j"])
        elif t is MsgType.REKEY_ACK:
            prev = last_ack.get(pl["i"], 1)
            if pl["j"] != prev + 1:
                report.violations.append(Violation("e", m.seq, f"RekeyAck epoch {pl['j']} after {prev}"))
            last_ack[pl["i"]] = max(prev, pl["j"])
        elif t in (MsgType.SERVE_X, MsgType.SERVE_Y) and not m.refused:
            key = (t.value, pl["i"])
            if pl["j"] < 2 or pl["j"] < last_serve.get(key, 0):
                report.violations.append(Violation("e", m.seq, f"{t.value} of record {pl['i']} at epoch {pl['j']}"))
            last_serve[key] = max(last_serve.get(key, 0), pl["j"])
