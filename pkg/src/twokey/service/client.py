"""HTTP clients with the same method shapes as the in-process parties.

Anything that takes a ledger, an X or a Y (``Consumer.buy``, ``YCoordinator``,
``StorageX``'s ledger hook) accepts these clients unchanged. Refusals come back
as the matching ``ProtocolError`` subclass.
"""

from __future__ import annotations

import httpx

from ..errors import ProtocolError, error_from_code
from ..keyderive import MasterKey, Side
from ..ledger import PaymentReceipt
from ..modmath import FieldParams, element_from_hex, element_to_hex
from ..storage_x import ServeXResult
from ..storage_y import ServeYResult


def _hexes(values) -> list[str]:
    return [element_to_hex(v) for v in values]


def _ints(values) -> tuple[int, ...]:
    return tuple(element_from_hex(v) for v in values)


class _Http:
    def __init__(self, base: str | httpx.Client, timeout: float = 30.0):
        if isinstance(base, httpx.Client):
            self.http = base
        else:
            self.http = httpx.Client(base_url=base, timeout=timeout)

    def _call(self, method: str, path: str, json=None, params=None):
        resp = self.http.request(method, path, json=json, params=params)
        if resp.status_code >= 400:
            try:
                body = resp.json()
            except ValueError:
                body = None
            if isinstance(body, dict) and isinstance(body.get("error"), str):
                raise error_from_code(body["error"], body.get("detail", ""))
            raise ProtocolError(f"{method} {path}: HTTP {resp.status_code}")
        return resp.json() if resp.content else None

    def health(self) -> dict:
        return self._call("GET", "/health")

    def params(self) -> FieldParams:
        body = self._call("GET", "/params")
        return FieldParams(int(body["p"], 16), int(body["q"], 16), body["p_bits"])


class LedgerClient(_Http):
    def pay(self, nft_id: int, payer: str, amount: int) -> PaymentReceipt:
        body = self._call("POST", "/ledger/pay", {"nft_id": nft_id, "payer": payer, "amount": amount})
        return PaymentReceipt(**body)

    def verify_and_consume(self, nft_id: int, payer: str, side) -> bool:
        side = Side(side).value
        return self._call("POST", "/ledger/verify", {"nft_id": nft_id, "payer": payer, "side": side})["ok"]

    def outstanding(self, nft_id: int, served, pending) -> int:
        params = {"nft_id": nft_id, "served": Side(served).value, "pending": Side(pending).value}
        return self._call("GET", "/ledger/outstanding", params=params)["count"]

    def receipts(self) -> list[PaymentReceipt]:
        return [PaymentReceipt(**r) for r in self._call("GET", "/ledger/receipts")]


class XClient(_Http):
    def install_master_key(self, mk: MasterKey) -> None:
        self._call("POST", "/x/bootstrap", {"master_key": mk.key.hex()})

    def ingest(self, i: int, j: int, g: int, blocks, original_length: int) -> None:
        self._call("POST", "/x/records", {"i": i, "j": j, "g": element_to_hex(g), "blocks": _hexes(blocks),
                                          "original_length": original_length})

    def apply_rekey(self, i: int, j_new: int, ck_y) -> tuple[int, int]:
        body = self._call("POST", f"/x/records/{i}/rekey", {"j": j_new, "ck_y": _hexes(ck_y)})
        return body["i"], body["j"]

    def serve(self, i: int, consumer: str) -> ServeXResult:
        b = self._call("POST", f"/x/records/{i}/serve", {"consumer": consumer})
        return ServeXResult(b["i"], b["j"], element_from_hex(b["g"]), _ints(b["blocks"]),
                            _ints(b["inv_x"]), b["original_length"])

    def epoch(self, i: int) -> int:
        return self._call("GET", f"/x/records/{i}")["j"]

    def audit(self) -> dict:
        return self._call("GET", "/x/audit")


class YClient(_Http):
    def install_master_key(self, mk: MasterKey) -> None:
        self._call("POST", "/y/bootstrap", {"master_key": mk.key.hex()})

    def ingest_state(self, i: int, j: int, g: int, block_count: int) -> None:
        self._call("POST", "/y/records", {"i": i, "j": j, "g": element_to_hex(g), "block_count": block_count})

    def rekey(self, i: int) -> int:
        return self._call("POST", f"/y/records/{i}/rekey")["j"]

    def request_rekey(self, i: int, served_epoch: int, consumer: str | None = None) -> int | None:
        body = {"j": served_epoch, "consumer": consumer}
        return self._call("POST", f"/y/records/{i}/rekey-request", body)["j"]

    def serve_key(self, i: int, consumer: str) -> ServeYResult:
        b = self._call("POST", f"/y/records/{i}/key", {"consumer": consumer})
        return ServeYResult(b["i"], b["j"], _ints(b["inv_y"]))

    def epoch(self, i: int) -> int:
        return self._call("GET", f"/y/records/{i}")["j"]

    def audit(self) -> dict:
        return self._call("GET", "/y/audit")


class ServiceClient:
    """Ledger, X and Y clients for a deployment.

    Pass one URL (or client) for a combined ``all`` node, or separate ones.
    """

    def __init__(self, server=None, *, ledger=None, x=None, y=None, timeout: float = 30.0):
        if server is None and not (ledger and x and y):
            raise ValueError("need a combined server URL or all of ledger, x and y")
        self.ledger = LedgerClient(ledger or server, timeout)
        self.x = XClient(x or server, timeout)
        self.y = YClient(y or server, timeout)

    def params(self) -> FieldParams:
        return self.x.params()

    def deliver_bootstrap(self, msgs) -> None:
        for msg in msgs:
            key = msg.payload["master_key"]
            if msg.receiver == "X":
                self.x.install_master_key(MasterKey(key, Side.X))
            else:
                self.y.install_master_key(MasterKey(key, Side.Y))

    def provision(self, record) -> None:
        self.x.ingest(record.record_id, record.epoch, record.g, record.blocks, record.original_length)
        self.y.ingest_state(record.record_id, record.epoch, record.g, len(record.blocks))
