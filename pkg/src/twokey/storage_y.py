"""Storage Y: the owner-rented key store.

Y never sees ciphertext. It tracks ``(i, j, g_i)`` per record, drives every
rekey by sending fresh Y-keys to X, and releases the inverse of its own key
product to paying consumers. Epochs advance in two phases: ``initiate_rekey``
marks the next epoch pending, the acknowledgement from X commits it.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from . import _store
from .errors import (AlreadyBootstrapped, DuplicateRecord, EpochError, NotBootstrapped,
                     NotYetRekeyed, PaymentRequired, ProtocolError, TemporarilyUnavailable,
                     UnknownRecord)
from .keyderive import GeneratorPowers, HmacKeySource, KeySource, MasterKey, Side, fold_content_keys
from .messages import MsgType, ProtocolMessage
from .modmath import FieldParams, element_from_hex, element_to_hex, has_large_order, mod_inv

PARTY = "Y"


@dataclass
class YStateEntry:
    record_id: int
    epoch: int
    g: int
    acc: list[int]
    pending: int | None = None
    pending_keys: list[int] = field(default_factory=list, repr=False)
    rekey_wanted: bool = False
    # consumers X / Y have served at the current epoch
    x_served: set[str] = field(default_factory=set)
    y_served: set[str] = field(default_factory=set)

    @property
    def owed(self) -> set[str]:
        """Consumers holding X's half of the current epoch but not Y's."""
        return self.x_served - self.y_served

    @property
    def block_count(self) -> int:
        return len(self.acc)


@dataclass(frozen=True)
class RekeyInit:
    record_id: int
    epoch: int
    ck_y: tuple[int, ...]

    def payload(self) -> dict:
        return {"i": self.record_id, "j": self.epoch, "ck_y": list(self.ck_y)}


@dataclass(frozen=True)
class ServeYResult:
    record_id: int
    epoch: int
    inv_y: tuple[int, ...]

    def payload(self) -> dict:
        return {"i": self.record_id, "j": self.epoch, "inv_y": list(self.inv_y)}


class StorageY:
    party_id = PARTY

    def __init__(self, params: FieldParams, ledger=None, key_source: KeySource | None = None,
                 state_dir: str | Path | None = None):
        self.params = params
        self.ledger = ledger
        self.key_source = key_source
        self.entries: dict[int, YStateEntry] = {}
        self._powers: dict[int, GeneratorPowers] = {}
        self._locks = _store.RecordLocks()
        self.state_dir = Path(state_dir) if state_dir else None
        if self.state_dir:
            self._load()

    @property
    def bootstrapped(self) -> bool:
        return self.key_source is not None

    def install_master_key(self, mk: MasterKey) -> None:
        if self.bootstrapped:
            raise AlreadyBootstrapped("Y already holds a master key")
        if mk.side is not Side.Y:
            raise ValueError("storage Y only accepts mk_y")
        self.key_source = HmacKeySource(mk, self.params)
        if self.state_dir:
            _store.save_master_key(self.state_dir, mk)

    def _require_keys(self) -> KeySource:
        if self.key_source is None:
            raise NotBootstrapped("Y has no master key")
        return self.key_source

    def _entry(self, i: int) -> YStateEntry:
        try:
            return self.entries[i]
        except KeyError:
            raise UnknownRecord(f"Y has no state for record {i}") from None

    def epoch(self, i: int) -> int:
        return self._entry(i).epoch

    def ingest_state(self, i: int, j: int, g: int, block_count: int) -> YStateEntry:
        source = self._require_keys()
        if j != 1:
            raise EpochError(f"records enter Y at epoch 1, not {j}")
        if not has_large_order(g, self.params):
            raise ValueError("generator does not have large order")
        if block_count < 1:
            raise ValueError("block_count must be positive")
        with self._locks.hold(i):
            if i in self.entries:
                raise DuplicateRecord(f"Y already tracks record {i}")
            powers = GeneratorPowers(g, self.params, epoch=1)
            # epoch-1 keys stay local: they are folded in here and never sent anywhere
            acc = [source.content_key(g, i, 1, b, powers.current) for b in range(block_count)]
            entry = YStateEntry(i, 1, g, acc)
            self.entries[i] = entry
            self._powers[i] = powers
            self._save(i)
            return entry

    # -- rekey ----------------------------------------------------------------

    def initiate_rekey(self, i: int) -> RekeyInit:
        source = self._require_keys()
        with self._locks.hold(i):
            entry = self._entry(i)
            if entry.pending is not None:
                raise EpochError(f"record {i} already has epoch {entry.pending} awaiting ack")
            return self._start_rekey(entry, source)

    def _start_rekey(self, entry: YStateEntry, source: KeySource) -> RekeyInit:
        j_new = entry.epoch + 1
        inputs = self._powers[entry.record_id].peek()
        keys = [source.content_key(entry.g, entry.record_id, j_new, b, inputs)
                for b in range(entry.block_count)]
        entry.pending = j_new
        entry.pending_keys = keys
        entry.rekey_wanted = False
        self._save(entry.record_id)
        return RekeyInit(entry.record_id, j_new, tuple(keys))

    def resend_pending(self, i: int) -> RekeyInit:
        """The in-flight rekey message again, e.g. after a lost delivery."""
        entry = self._entry(i)
        if entry.pending is None:
            raise EpochError(f"record {i} has no pending rekey")
        return RekeyInit(i, entry.pending, tuple(entry.pending_keys))

    def receive_ack(self, i: int, j: int) -> None:
        p = self.params.p
        with self._locks.hold(i):
            entry = self._entry(i)
            if entry.pending is None or j != entry.pending:
                raise EpochError(f"unexpected ack for record {i} epoch {j} (pending {entry.pending})")
            entry.acc = [a * k % p for a, k in zip(entry.acc, entry.pending_keys)]
            entry.epoch = j
            entry.pending = None
            entry.pending_keys = []
            entry.x_served.clear()
            entry.y_served.clear()
            self._powers[i].advance()
            self._save(i)

    def request_rekey(self, i: int, served_epoch: int, consumer: str | None = None) -> RekeyInit | None:
        """X reports it served ``consumer`` at ``served_epoch``; schedule the next rekey.

        The rekey starts once every consumer X has served at this epoch has
        also collected Y's key for it, so nobody is left holding a stale epoch.
        """
        with self._locks.hold(i):
            entry = self._entry(i)
            if entry.pending is not None or entry.epoch != served_epoch:
                return None
            entry.rekey_wanted = True
            if consumer is not None:
                entry.x_served.add(consumer)
            self._save(i)
        return self.poll_rekey(i)

    def poll_rekey(self, i: int) -> RekeyInit | None:
        source = self._require_keys()
        with self._locks.hold(i):
            entry = self._entry(i)
            if not entry.rekey_wanted or entry.pending is not None:
                return None
            if entry.owed:
                return None
            if self.ledger is not None and self.ledger.outstanding(i, Side.X, Side.Y):
                return None
            return self._start_rekey(entry, source)

    # -- serving --------------------------------------------------------------

    def serve_key(self, i: int, consumer: str) -> ServeYResult:
        with self._locks.hold(i):
            entry = self._entry(i)
            if entry.pending is not None:
                raise TemporarilyUnavailable(f"record {i} is being re-encrypted; retry after ack")
            if entry.epoch < 2:
                raise NotYetRekeyed(f"record {i} has not been re-encrypted yet")
            if self.ledger is None or not self.ledger.verify_and_consume(i, consumer, Side.Y):
                raise PaymentRequired(f"no unconsumed payment by {consumer} for NFT {i}")
            entry.y_served.add(consumer)
            self._save(i)
            return ServeYResult(i, entry.epoch, tuple(mod_inv(a, self.params) for a in entry.acc))

    # -- introspection --------------------------------------------------------

    def audit(self) -> dict:
        source = self._require_keys()
        violations = []
        for i in sorted(self.entries):
            entry = self.entries[i]
            fresh = fold_content_keys(source, entry.g, i, entry.epoch, entry.block_count, self.params)
            if fresh != entry.acc:
                violations.append(f"record {i}: accumulator differs from recomputed product")
            if any(not 1 <= v < self.params.p for v in entry.acc):
                violations.append(f"record {i}: value outside F_p*")
        return {"party": PARTY, "records": len(self.entries), "violations": violations}

    def snapshot(self) -> dict:
        return {
            "bootstrapped": self.bootstrapped,
            "records": {
                str(i): {
                    "j": e.epoch,
                    "g": element_to_hex(e.g),
                    "acc": [element_to_hex(a) for a in e.acc],
                    "pending": e.pending,
                    "rekey_wanted": e.rekey_wanted,
                    "x_served": sorted(e.x_served),
                    "y_served": sorted(e.y_served),
                }
                for i, e in sorted(self.entries.items())
            },
        }

    # -- message adapter ------------------------------------------------------

    def handle(self, msg: ProtocolMessage) -> list[ProtocolMessage]:
        t, pl = msg.msg_type, msg.payload
        if t is MsgType.BOOTSTRAP_Y:
            self.install_master_key(MasterKey(pl["master_key"], Side.Y))
            return []
        if t is MsgType.PROVISION_Y:
            self.ingest_state(pl["i"], pl["j"], pl["g"], pl["block_count"])
            return []
        if t is MsgType.REKEY_ACK:
            self.receive_ack(pl["i"], pl["j"])
            return []
        if t is MsgType.REKEY_REQUEST:
            return self._rekey_messages(self.request_rekey(pl["i"], pl["j"], pl["consumer"]))
        if t is MsgType.FETCH_REQUEST_Y:
            i = pl["i"]
            try:
                result = self.serve_key(i, pl["consumer"])
            except (PaymentRequired, TemporarilyUnavailable, NotYetRekeyed, UnknownRecord) as exc:
                return [ProtocolMessage(MsgType.SERVE_Y, PARTY, msg.sender, {"i": i, "error": exc.code})]
            out = [ProtocolMessage(MsgType.SERVE_Y, PARTY, msg.sender, result.payload())]
            return out + self._rekey_messages(self.poll_rekey(i))
        raise ProtocolError(f"Y does not accept {t.value}")

    @staticmethod
    def _rekey_messages(init: RekeyInit | None) -> list[ProtocolMessage]:
        if init is None:
            return []
        return [ProtocolMessage(MsgType.REKEY_INIT, PARTY, "X", init.payload())]

    # -- persistence ----------------------------------------------------------

    def _save(self, i: int) -> None:
        if not self.state_dir:
            return
        e = self.entries[i]
        lines = [f"i={i}", f"j={e.epoch}", f"g={element_to_hex(e.g)}",
                 f"block_count={e.block_count}",
                 f"pending={'' if e.pending is None else e.pending}",
                 f"pending_keys={','.join(element_to_hex(k) for k in e.pending_keys)}",
                 f"rekey_wanted={int(e.rekey_wanted)}",
                 f"x_served={json.dumps(sorted(e.x_served))}",
                 f"y_served={json.dumps(sorted(e.y_served))}"]
        lines += [element_to_hex(a) for a in e.acc]
        _store.atomic_write(self.state_dir / "keystore" / f"{i}.key", "\n".join(lines) + "\n")

    def _load(self) -> None:
        mk = _store.load_master_key(self.state_dir, Side.Y)
        if mk is not None:
            self.key_source = HmacKeySource(mk, self.params)
        key_dir = self.state_dir / "keystore"
        if not key_dir.is_dir():
            return
        for path in sorted(key_dir.glob("*.key")):
            header, body = _store.parse_header(path.read_text().splitlines())
            i = int(header["i"])
            acc = [element_from_hex(a) for a in body]
            if len(acc) != int(header["block_count"]):
                raise ValueError(f"{path}: block count mismatch")
            pending = int(header["pending"]) if header.get("pending") else None
            keys = [element_from_hex(k) for k in header.get("pending_keys", "").split(",") if k]
            entry = YStateEntry(i, int(header["j"]), element_from_hex(header["g"]), acc,
                                pending, keys, header.get("rekey_wanted") == "1",
                                set(json.loads(header.get("x_served", "[]"))),
                                set(json.loads(header.get("y_served", "[]"))))
            self.entries[i] = entry
            self._powers[i] = GeneratorPowers(entry.g, self.params, epoch=entry.epoch)
