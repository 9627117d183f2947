"""In-process stand-in for the NFT payment contract.

Every receipt carries one consumption slot per storage side. X and Y each
check the contract independently, so a single payment buys exactly one
ciphertext serve from X and one key release from Y.
"""

from __future__ import annotations

import threading
from dataclasses import asdict, dataclass
from pathlib import Path

from .errors import Underpayment
from .keyderive import Side


@dataclass
class PaymentReceipt:
    tx_id: int
    nft_id: int
    payer: str
    amount: int
    consumed_x: bool = False
    consumed_y: bool = False

    @property
    def consumed(self) -> bool:
        return self.consumed_x and self.consumed_y

    def slot(self, side: Side) -> bool:
        return self.consumed_x if Side(side) is Side.X else self.consumed_y

    def to_line(self) -> str:
        return (f"{self.tx_id} {self.nft_id} {self.payer} {self.amount} "
                f"{int(self.consumed_x)} {int(self.consumed_y)}")

    @classmethod
    def from_line(cls, line: str) -> "PaymentReceipt":
        tx_id, nft_id, payer, amount, cx, cy = line.split()
        return cls(int(tx_id), int(nft_id), payer, int(amount), cx == "1", cy == "1")


class MockLedger:
    """Append-only receipt log with atomic check-and-consume.

    ``price`` is either one price for every NFT or a mapping of NFT id to price
    (missing ids cost ``default_price``). With ``journal`` set, each state
    change is appended as a line; later lines for a tx_id supersede earlier ones.
    """

    def __init__(self, price: int | dict[int, int] = 0, default_price: int = 0,
                 journal: str | Path | None = None):
        if isinstance(price, dict):
            self._prices = dict(price)
            self._default = default_price
        else:
            self._prices = {}
            self._default = price
        self._receipts: list[PaymentReceipt] = []
        self._lock = threading.Lock()
        self._journal = Path(journal) if journal else None
        if self._journal and self._journal.exists():
            self._load_journal()

    def price_of(self, nft_id: int) -> int:
        return self._prices.get(nft_id, self._default)

    def pay(self, nft_id: int, payer: str, amount: int) -> PaymentReceipt:
        if amount < 0:
            raise ValueError("amount must be non-negative")
        if " " in payer or not payer:
            raise ValueError("payer id must be a non-empty token without spaces")
        with self._lock:
            price = self.price_of(nft_id)
            if amount < price:
                raise Underpayment(f"NFT {nft_id} costs {price}, paid {amount}")
            receipt = PaymentReceipt(len(self._receipts) + 1, nft_id, payer, amount)
            self._receipts.append(receipt)
            self._append(receipt)
            return PaymentReceipt(**asdict(receipt))

    def verify_and_consume(self, nft_id: int, payer: str, side: Side | str) -> bool:
        """Consume the oldest receipt of ``payer`` for ``nft_id`` whose ``side`` slot is free."""
        side = Side(side)
        with self._lock:
            for receipt in self._receipts:
                if receipt.nft_id == nft_id and receipt.payer == payer and not receipt.slot(side):
                    if side is Side.X:
                        receipt.consumed_x = True
                    else:
                        receipt.consumed_y = True
                    self._append(receipt)
                    return True
            return False

    def outstanding(self, nft_id: int, served: Side | str, pending: Side | str) -> int:
        """Receipts already consumed on ``served`` but not yet on ``pending``."""
        served, pending = Side(served), Side(pending)
        with self._lock:
            return sum(1 for r in self._receipts
                       if r.nft_id == nft_id and r.slot(served) and not r.slot(pending))

    def receipts(self) -> list[PaymentReceipt]:
        with self._lock:
            return [PaymentReceipt(**asdict(r)) for r in self._receipts]

    def snapshot(self) -> dict:
        return {"receipts": [asdict(r) for r in self.receipts()]}

    def _append(self, receipt: PaymentReceipt) -> None:
        if self._journal is None:
            return
        self._journal.parent.mkdir(parents=True, exist_ok=True)
        with self._journal.open("a") as fh:
            fh.write(receipt.to_line() + "\n")

    def _load_journal(self) -> None:
        latest: dict[int, PaymentReceipt] = {}
        for line in self._journal.read_text().splitlines():
            if line.strip():
                receipt = PaymentReceipt.from_line(line)
                latest[receipt.tx_id] = receipt
        self._receipts = [latest[k] for k in sorted(latest)]
