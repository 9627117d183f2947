"""Direct-call wiring of the parties, without the message simulator.

Used by the HTTP service and by tests that want the protocol without a
transcript. Rekeys run synchronously: Y derives keys, X applies them, Y
commits on the returned acknowledgement.
"""

from __future__ import annotations

from pathlib import Path

from .ledger import MockLedger
from .modmath import FieldParams
from .owner import EncryptedRecord, RecordOwner
from .storage_x import StorageX
from .storage_y import RekeyInit, StorageY


class YCoordinator:
    """Storage Y plus a link to X for pushing rekeys.

    ``x_link`` needs ``apply_rekey(i, j, ck_y) -> (i, j)``.
    """

    def __init__(self, y: StorageY, x_link=None):
        self.y = y
        self.x_link = x_link

    def deliver(self, init: RekeyInit | None) -> int | None:
        if init is None:
            return None
        if self.x_link is None:
            raise RuntimeError("Y has no link to X configured")
        i, j = self.x_link.apply_rekey(init.record_id, init.epoch, list(init.ck_y))
        self.y.receive_ack(i, j)
        return j

    def rekey(self, i: int) -> int:
        return self.deliver(self.y.initiate_rekey(i))

    def on_rekey_request(self, i: int, j: int, consumer: str | None = None) -> int | None:
        return self.deliver(self.y.request_rekey(i, j, consumer))

    def serve_key(self, i: int, consumer: str):
        result = self.y.serve_key(i, consumer)
        self.deliver(self.y.poll_rekey(i))
        return result


class Deployment:
    """Ledger, X and Y in one process."""

    def __init__(self, params: FieldParams, price: int | dict = 0, state_dir: str | Path | None = None,
                 ledger: MockLedger | None = None, x: StorageX | None = None, y: StorageY | None = None):
        base = Path(state_dir) if state_dir else None
        self.params = params
        self.ledger = ledger or MockLedger(price, journal=base / "ledger.journal" if base else None)
        self.x = x or StorageX(params, self.ledger, state_dir=base / "x" if base else None)
        self.y = y or StorageY(params, self.ledger, state_dir=base / "y" if base else None)
        self.coordinator = YCoordinator(self.y, self.x)
        self.x.on_served = self.coordinator.on_rekey_request

    def bootstrap(self, owner: RecordOwner) -> None:
        def send(msgs):
            for msg in msgs:
                (self.x if msg.receiver == "X" else self.y).handle(msg)
        owner.bootstrap(send)

    def provision(self, record: EncryptedRecord) -> None:
        self.x.ingest(record.record_id, record.epoch, record.g, record.blocks, record.original_length)
        self.y.ingest_state(record.record_id, record.epoch, record.g, len(record.blocks))

    def rekey(self, i: int) -> int:
        return self.coordinator.rekey(i)

    def serve(self, i: int, consumer: str):
        return self.x.serve(i, consumer)

    def serve_key(self, i: int, consumer: str):
        return self.coordinator.serve_key(i, consumer)
