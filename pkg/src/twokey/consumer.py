"""Data consumer: pays, collects both partial decryption keys, decrypts."""

from __future__ import annotations

import hashlib
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

from .errors import (CorruptionError, EpochMismatch, NotInGroupError, ProtocolError,
                     TemporarilyUnavailable)
from .messages import MsgType, ProtocolMessage
from .modmath import BlockVector, FieldParams, check_element, decode_record

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class RetrievalBundle:
    record_id: int
    epoch: int
    g: int
    blocks: tuple[int, ...]
    original_length: int
    inv_x: tuple[int, ...]
    inv_y: tuple[int, ...]
    epoch_y: int

    @classmethod
    def assemble(cls, served_x, served_y) -> "RetrievalBundle":
        return cls(served_x.record_id, served_x.epoch, served_x.g, tuple(served_x.blocks),
                   served_x.original_length, tuple(served_x.inv_x), tuple(served_y.inv_y),
                   served_y.epoch)

    @property
    def consistent(self) -> bool:
        return self.epoch == self.epoch_y


def recover_blocks(bundle: RetrievalBundle, params: FieldParams) -> list[int]:
    """Plaintext block integers: inv_x * inv_y * S mod p, block by block."""
    if not bundle.consistent:
        raise EpochMismatch(f"X served epoch {bundle.epoch}, Y served epoch {bundle.epoch_y}")
    if not len(bundle.blocks) == len(bundle.inv_x) == len(bundle.inv_y):
        raise CorruptionError("ciphertext and key vectors differ in length")
    p = params.p
    try:
        plain = [check_element(ix, params) * check_element(iy, params) % p * check_element(s, params) % p
                 for s, ix, iy in zip(bundle.blocks, bundle.inv_x, bundle.inv_y)]
    except NotInGroupError as exc:
        raise CorruptionError(str(exc)) from None
    return plain


def decrypt(bundle: RetrievalBundle, params: FieldParams) -> bytes:
    plain = recover_blocks(bundle, params)
    return decode_record(BlockVector(tuple(plain), bundle.original_length), params)


@dataclass
class PurchaseOutcome:
    record_id: int
    ok: bool
    epoch: int | None = None
    plaintext: bytes | None = field(default=None, repr=False)
    error: str | None = None

    def summary(self) -> dict:
        return {
            "i": self.record_id,
            "ok": self.ok,
            "epoch": self.epoch,
            "sha256": hashlib.sha256(self.plaintext).hexdigest() if self.plaintext is not None else None,
            "error": self.error,
        }


@dataclass
class _Purchase:
    record_id: int
    amount: int
    serve_x: ProtocolMessage | None = None
    serve_y: ProtocolMessage | None = None
    y_retries: int = 0
    mismatch_retries: int = 0


class _Served:
    """Adapter so ServeX/ServeY payloads look like the direct-call results."""

    def __init__(self, payload: dict):
        self.record_id = payload["i"]
        self.epoch = payload["j"]
        self.g = payload.get("g")
        self.blocks = payload.get("blocks", ())
        self.original_length = payload.get("original_length")
        self.inv_x = payload.get("inv_x", ())
        self.inv_y = payload.get("inv_y", ())


class Consumer:
    """A paying consumer.

    Retry policy, identical in direct and message-driven modes: if Y is busy
    with a rekey, ask Y once more; if the two epochs disagree, pay again and
    refetch both halves once.
    """

    def __init__(self, name: str, params: FieldParams, amount: int = 0, max_retries: int = 1):
        self.name = name
        self.party_id = name
        self.params = params
        self.amount = amount
        self.max_retries = max_retries
        self.outcomes: list[PurchaseOutcome] = []
        self._active: dict[int, _Purchase] = {}

    # -- direct mode ----------------------------------------------------------

    def purchase_and_fetch(self, i: int, ledger, x, y, amount: int | None = None) -> RetrievalBundle:
        """Pay NFT ``i`` then fetch from X and Y in parallel.

        ``x`` needs ``serve(i, consumer)``, ``y`` needs ``serve_key(i, consumer)``;
        local parties and the HTTP clients both qualify.
        """
        amount = self.amount if amount is None else amount
        mismatches = 0
        while True:
            ledger.pay(i, self.name, amount)
            with ThreadPoolExecutor(max_workers=2) as pool:
                fx = pool.submit(x.serve, i, self.name)
                fy = pool.submit(y.serve_key, i, self.name)
                errors = []
                served_x = served_y = None
                try:
                    served_x = fx.result()
                except ProtocolError as exc:
                    errors.append(exc)
                try:
                    served_y = fy.result()
                except ProtocolError as exc:
                    errors.append(exc)
            if served_y is None and served_x is not None and all(
                    isinstance(e, TemporarilyUnavailable) for e in errors):
                served_y = self._retry_y(i, y)
                errors = []
            if errors:
                raise errors[0]
            bundle = RetrievalBundle.assemble(served_x, served_y)
            if bundle.consistent:
                return bundle
            mismatches += 1
            if mismatches > self.max_retries:
                raise EpochMismatch(f"X epoch {bundle.epoch} vs Y epoch {bundle.epoch_y} after retry")
            log.info("epoch mismatch on record %d, paying again", i)

    def _retry_y(self, i, y):
        for _ in range(self.max_retries):
            try:
                return y.serve_key(i, self.name)
            except TemporarilyUnavailable:
                continue
        raise TemporarilyUnavailable(f"Y still re-encrypting record {i}")

    def buy(self, i: int, ledger, x, y, amount: int | None = None) -> bytes:
        bundle = self.purchase_and_fetch(i, ledger, x, y, amount)
        plaintext = decrypt(bundle, self.params)
        self.outcomes.append(PurchaseOutcome(i, True, bundle.epoch, plaintext))
        return plaintext

    # -- message mode ---------------------------------------------------------

    def start_purchase(self, i: int, amount: int | None = None, pay: bool = True) -> list[ProtocolMessage]:
        if i in self._active:
            raise ProtocolError(f"{self.name} already has a purchase of record {i} in flight")
        purchase = _Purchase(i, self.amount if amount is None else amount)
        self._active[i] = purchase
        return self._request_messages(purchase, pay=pay)

    def _request_messages(self, purchase: _Purchase, pay: bool = True) -> list[ProtocolMessage]:
        i = purchase.record_id
        msgs = []
        if pay:
            msgs.append(ProtocolMessage(MsgType.PAY, self.name, "ledger",
                                        {"i": i, "payer": self.name, "amount": purchase.amount}))
        msgs.append(ProtocolMessage(MsgType.FETCH_REQUEST_X, self.name, "X", {"i": i, "consumer": self.name}))
        msgs.append(ProtocolMessage(MsgType.FETCH_REQUEST_Y, self.name, "Y", {"i": i, "consumer": self.name}))
        return msgs

    def handle(self, msg: ProtocolMessage) -> list[ProtocolMessage]:
        purchase = self._active.get(msg.record_id)
        if purchase is None:
            raise ProtocolError(f"{self.name} got an unsolicited {msg.msg_type.value}")
        if msg.msg_type is MsgType.SERVE_X:
            purchase.serve_x = msg
        elif msg.msg_type is MsgType.SERVE_Y:
            purchase.serve_y = msg
        else:
            raise ProtocolError(f"consumer does not accept {msg.msg_type.value}")
        if purchase.serve_x is None or purchase.serve_y is None:
            return []
        return self._settle(purchase)

    def _settle(self, purchase: _Purchase) -> list[ProtocolMessage]:
        i = purchase.record_id
        sx, sy = purchase.serve_x, purchase.serve_y
        if not sx.refused and sy.refused and sy.payload["error"] == TemporarilyUnavailable.code \
                and purchase.y_retries < self.max_retries:
            purchase.y_retries += 1
            purchase.serve_y = None
            return [ProtocolMessage(MsgType.FETCH_REQUEST_Y, self.name, "Y", {"i": i, "consumer": self.name})]
        if sx.refused or sy.refused:
            codes = [m.payload["error"] for m in (sx, sy) if m.refused]
            return self._finish(PurchaseOutcome(i, False, error=",".join(codes)))
        bundle = RetrievalBundle.assemble(_Served(sx.payload), _Served(sy.payload))
        if not bundle.consistent:
            if purchase.mismatch_retries < self.max_retries:
                purchase.mismatch_retries += 1
                purchase.serve_x = purchase.serve_y = None
                return self._request_messages(purchase)
            return self._finish(PurchaseOutcome(i, False, error=EpochMismatch.code))
        try:
            plaintext = decrypt(bundle, self.params)
        except CorruptionError as exc:
            return self._finish(PurchaseOutcome(i, False, bundle.epoch, error=f"{exc.code}: {exc}"))
        return self._finish(PurchaseOutcome(i, True, bundle.epoch, plaintext))

    def _finish(self, outcome: PurchaseOutcome) -> list[ProtocolMessage]:
        del self._active[outcome.record_id]
        self.outcomes.append(outcome)
        return []

    @property
    def in_flight(self) -> list[int]:
        return sorted(self._active)

    def snapshot(self) -> dict:
        return {"outcomes": [o.summary() for o in self.outcomes], "in_flight": self.in_flight}
