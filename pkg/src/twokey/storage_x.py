"""Storage X: the data store plus X's half of the key material.

X keeps, per record, the current ciphertext blocks and a running product of
its own content keys (one accumulator per block). Serving releases the
inverse of that product; it never needs to rederive past epochs.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Callable

from . import _store
from .errors import (AlreadyBootstrapped, DuplicateRecord, EpochError, NotBootstrapped,
                     NotYetRekeyed, PaymentRequired, ProtocolError, UnknownRecord)
from .keyderive import GeneratorPowers, HmacKeySource, KeySource, MasterKey, Side, fold_content_keys
from .messages import MsgType, ProtocolMessage
from .modmath import FieldParams, check_element, element_from_hex, element_to_hex, has_large_order, mod_inv

log = logging.getLogger(__name__)

PARTY = "X"


@dataclass
class DataStoreEntry:
    record_id: int
    epoch: int
    g: int
    blocks: list[int]
    original_length: int


@dataclass
class AccumulatorEntry:
    record_id: int
    acc: list[int]
    side: Side = Side.X


@dataclass(frozen=True)
class ServeXResult:
    record_id: int
    epoch: int
    g: int
    blocks: tuple[int, ...]
    inv_x: tuple[int, ...]
    original_length: int

    def payload(self) -> dict:
        return {"i": self.record_id, "j": self.epoch, "g": self.g, "blocks": list(self.blocks),
                "inv_x": list(self.inv_x), "original_length": self.original_length}


class StorageX:
    party_id = PARTY

    def __init__(self, params: FieldParams, ledger=None, key_source: KeySource | None = None,
                 state_dir: str | Path | None = None,
                 on_served: Callable[[int, int, str], None] | None = None):
        self.params = params
        self.ledger = ledger
        self.key_source = key_source
        self.on_served = on_served
        self.entries: dict[int, DataStoreEntry] = {}
        self.accumulators: dict[int, AccumulatorEntry] = {}
        self._powers: dict[int, GeneratorPowers] = {}
        self._locks = _store.RecordLocks()
        self.state_dir = Path(state_dir) if state_dir else None
        if self.state_dir:
            self._load()

    # -- bootstrap / provisioning -----------------------------------------

    @property
    def bootstrapped(self) -> bool:
        return self.key_source is not None

    def install_master_key(self, mk: MasterKey) -> None:
        if self.bootstrapped:
            raise AlreadyBootstrapped("X already holds a master key")
        if mk.side is not Side.X:
            raise ValueError("storage X only accepts mk_x")
        self.key_source = HmacKeySource(mk, self.params)
        if self.state_dir:
            _store.save_master_key(self.state_dir, mk)

    def _require_keys(self) -> KeySource:
        if self.key_source is None:
            raise NotBootstrapped("X has no master key")
        return self.key_source

    def ingest(self, i: int, j: int, g: int, blocks, original_length: int) -> DataStoreEntry:
        source = self._require_keys()
        if j != 1:
            raise EpochError(f"records enter the data store at epoch 1, not {j}")
        if not has_large_order(g, self.params):
            raise ValueError("generator does not have large order")
        blocks = [check_element(b, self.params) for b in blocks]
        if not blocks:
            raise ValueError("record has no blocks")
        with self._locks.hold(i):
            if i in self.entries:
                raise DuplicateRecord(f"record {i} is already in the data store")
            powers = GeneratorPowers(g, self.params, epoch=1)
            acc = [source.content_key(g, i, 1, b, powers.current) for b in range(len(blocks))]
            entry = DataStoreEntry(i, 1, g, blocks, original_length)
            self.entries[i] = entry
            self.accumulators[i] = AccumulatorEntry(i, acc)
            self._powers[i] = powers
            self._save(i)
            return entry

    # -- rekey ----------------------------------------------------------------

    def apply_rekey(self, i: int, j_new: int, ck_y) -> tuple[int, int]:
        """Fold Y's fresh keys and X's own fresh keys into the ciphertext.

        Returns the acknowledgement ``(i, j_new)``.
        """
        source = self._require_keys()
        p = self.params.p
        with self._locks.hold(i):
            entry = self._entry(i)
            if j_new != entry.epoch + 1:
                raise EpochError(f"record {i} is at epoch {entry.epoch}; refusing rekey to {j_new}")
            ck_y = [check_element(k, self.params) for k in ck_y]
            if len(ck_y) != len(entry.blocks):
                raise ValueError(f"expected {len(entry.blocks)} Y-keys, got {len(ck_y)}")
            inputs = self._powers[i].advance()
            acc = self.accumulators[i].acc
            for b, ky in enumerate(ck_y):
                kx = source.content_key(entry.g, i, j_new, b, inputs)
                entry.blocks[b] = kx * ky % p * entry.blocks[b] % p
                acc[b] = acc[b] * kx % p
            entry.epoch = j_new
            self._save(i)
            return i, j_new

    # -- serving --------------------------------------------------------------

    def serve(self, i: int, consumer: str, notify: bool = True) -> ServeXResult:
        with self._locks.hold(i):
            entry = self._entry(i)
            if entry.epoch < 2:
                raise NotYetRekeyed(f"record {i} has not been re-encrypted yet")
            if self.ledger is None or not self.ledger.verify_and_consume(i, consumer, Side.X):
                raise PaymentRequired(f"no unconsumed payment by {consumer} for NFT {i}")
            inv = tuple(mod_inv(a, self.params) for a in self.accumulators[i].acc)
            result = ServeXResult(i, entry.epoch, entry.g, tuple(entry.blocks), inv, entry.original_length)
        if notify and self.on_served is not None:
            self.on_served(i, result.epoch, consumer)
        return result

    # -- introspection --------------------------------------------------------

    def _entry(self, i: int) -> DataStoreEntry:
        try:
            return self.entries[i]
        except KeyError:
            raise UnknownRecord(f"record {i} is not in the data store") from None

    def epoch(self, i: int) -> int:
        return self._entry(i).epoch

    def audit(self) -> dict:
        """Recompute every accumulator from scratch and compare.

        Also checks every stored value lies in F_p*.
        """
        source = self._require_keys()
        violations = []
        for i in sorted(self.entries):
            entry = self.entries[i]
            acc = self.accumulators[i].acc
            fresh = fold_content_keys(source, entry.g, i, entry.epoch, len(entry.blocks), self.params)
            if fresh != acc:
                violations.append(f"record {i}: accumulator differs from recomputed product")
            if any(not 1 <= v < self.params.p for v in acc + entry.blocks):
                violations.append(f"record {i}: value outside F_p*")
        return {"party": PARTY, "records": len(self.entries), "violations": violations}

    def snapshot(self) -> dict:
        return {
            "bootstrapped": self.bootstrapped,
            "records": {
                str(i): {
                    "j": e.epoch,
                    "g": element_to_hex(e.g),
                    "original_length": e.original_length,
                    "blocks": [element_to_hex(b) for b in e.blocks],
                    "acc": [element_to_hex(a) for a in self.accumulators[i].acc],
                }
                for i, e in sorted(self.entries.items())
            },
        }

    # -- message adapter ------------------------------------------------------

    def handle(self, msg: ProtocolMessage) -> list[ProtocolMessage]:
        t, pl = msg.msg_type, msg.payload
        if t is MsgType.BOOTSTRAP_X:
            self.install_master_key(MasterKey(pl["master_key"], Side.X))
            return []
        if t is MsgType.PROVISION_X:
            self.ingest(pl["i"], pl["j"], pl["g"], pl["blocks"], pl["original_length"])
            return []
        if t is MsgType.REKEY_INIT:
            i, j = self.apply_rekey(pl["i"], pl["j"], pl["ck_y"])
            return [ProtocolMessage(MsgType.REKEY_ACK, PARTY, msg.sender, {"i": i, "j": j})]
        if t is MsgType.FETCH_REQUEST_X:
            i = pl["i"]
            try:
                result = self.serve(i, pl["consumer"], notify=False)
            except (PaymentRequired, NotYetRekeyed, UnknownRecord) as exc:
                return [ProtocolMessage(MsgType.SERVE_X, PARTY, msg.sender, {"i": i, "error": exc.code})]
            return [
                ProtocolMessage(MsgType.SERVE_X, PARTY, msg.sender, result.payload()),
                ProtocolMessage(MsgType.REKEY_REQUEST, PARTY, "Y", {"i": i, "j": result.epoch, "consumer": pl["consumer"]}),
            ]
        raise ProtocolError(f"X does not accept {t.value}")

    # -- persistence ----------------------------------------------------------

    def _save(self, i: int) -> None:
        if not self.state_dir:
            return
        e = self.entries[i]
        header = [f"i={i}", f"j={e.epoch}", f"g={element_to_hex(e.g)}",
                  f"original_length={e.original_length}", f"block_count={len(e.blocks)}"]
        _store.atomic_write(self.state_dir / "records" / f"{i}.rec",
                            "\n".join(header + [element_to_hex(b) for b in e.blocks]) + "\n")
        _store.atomic_write(self.state_dir / "records" / f"{i}.acc",
                            "\n".join(element_to_hex(a) for a in self.accumulators[i].acc) + "\n")

    def _load(self) -> None:
        mk = _store.load_master_key(self.state_dir, Side.X)
        if mk is not None:
            self.key_source = HmacKeySource(mk, self.params)
        rec_dir = self.state_dir / "records"
        if not rec_dir.is_dir():
            return
        for path in sorted(rec_dir.glob("*.rec")):
            header, body = _store.parse_header(path.read_text().splitlines())
            i = int(header["i"])
            blocks = [element_from_hex(b) for b in body]
            if len(blocks) != int(header["block_count"]):
                raise ValueError(f"{path}: block count mismatch")
            acc_lines = path.with_suffix(".acc").read_text().split()
            entry = DataStoreEntry(i, int(header["j"]), element_from_hex(header["g"]), blocks,
                                   int(header["original_length"]))
            self.entries[i] = entry
            self.accumulators[i] = AccumulatorEntry(i, [element_from_hex(a) for a in acc_lines])
            self._powers[i] = GeneratorPowers(entry.g, self.params, epoch=entry.epoch)
