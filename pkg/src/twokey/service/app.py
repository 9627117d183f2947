"""FastAPI service exposing the ledger, storage X and storage Y.

One app can host every party (``role="all"``) or a single one, in which case
the links to the other parties are HTTP clients. Refusals map to HTTP status
codes and carry ``{"error": code, "detail": text}``.
"""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass
from pathlib import Path

from fastapi import BackgroundTasks, FastAPI, HTTPException, Request
from fastapi.responses import JSONResponse

from ..deployment import Deployment, YCoordinator
from ..errors import EpochError, NotBootstrapped, ProtocolError
from ..keyderive import MasterKey, Side
from ..ledger import MockLedger
from ..messages import MsgType, ProtocolMessage
from ..modmath import DEFAULT_PARAMS, FieldParams, element_from_hex, element_to_hex
from ..storage_x import StorageX
from ..storage_y import StorageY
from . import schemas as s
from .client import LedgerClient, XClient, YClient

log = logging.getLogger(__name__)

ROLES = ("all", "x", "y", "ledger")

STATUS = {
    "payment-required": 402,
    "underpayment": 402,
    "unknown-record": 404,
    "not-yet-rekeyed": 409,
    "epoch-error": 409,
    "duplicate-record": 409,
    "already-bootstrapped": 409,
    "not-bootstrapped": 409,
    "not-in-group": 422,
    "corruption": 422,
    "temporarily-unavailable": 503,
}


@dataclass
class Node:
    role: str
    params: FieldParams
    ledger: object | None = None
    x: StorageX | None = None
    y: StorageY | None = None
    coordinator: YCoordinator | None = None
    y_link: object | None = None  # X's route to Y for post-serve rekey requests

    def notify_served(self, i: int, j: int, consumer: str) -> None:
        try:
            if self.coordinator is not None:
                self.coordinator.on_rekey_request(i, j, consumer)
            elif self.y_link is not None:
                self.y_link.request_rekey(i, j, consumer)
        except ProtocolError as exc:
            log.warning("rekey request for record %d failed: %s", i, exc)

    def resume_rekey(self, i: int) -> int | None:
        """Push Y's pending rekey for ``i`` to X again, committing if X already has it."""
        y, coord = self.y, self.coordinator
        init = y.resend_pending(i)
        try:
            return coord.deliver(init)
        except EpochError:
            if coord.x_link.epoch(i) == init.epoch:
                y.receive_ack(i, init.epoch)
                return init.epoch
            raise


def build_node(role: str = "all", params: FieldParams = DEFAULT_PARAMS, state_dir: str | Path | None = None,
               price: int | dict = 0, ledger_url=None, x_url=None, y_url=None) -> Node:
    """Assemble the parties for ``role``; the ``*_url`` arguments may also be httpx clients."""
    if role not in ROLES:
        raise ValueError(f"role must be one of {ROLES}")
    base = Path(state_dir) if state_dir else None
    if role == "all":
        d = Deployment(params, price, base)
        return Node(role, params, d.ledger, d.x, d.y, d.coordinator)
    if role == "ledger":
        return Node(role, params, MockLedger(price, journal=base / "ledger.journal" if base else None))
    if ledger_url is None:
        raise ValueError(f"role {role} needs a ledger URL")
    ledger = LedgerClient(ledger_url)
    if role == "x":
        if y_url is None:
            raise ValueError("role x needs Y's URL")
        return Node(role, params, ledger, x=StorageX(params, ledger, state_dir=base), y_link=YClient(y_url))
    if x_url is None:
        raise ValueError("role y needs X's URL")
    y = StorageY(params, ledger, state_dir=base)
    return Node(role, params, ledger, y=y, coordinator=YCoordinator(y, XClient(x_url)))


def _need(component, name: str):
    if component is None:
        raise HTTPException(404, f"this node does not host {name}")
    return component


def _hexes(values) -> list[str]:
    return [element_to_hex(v) for v in values]


def create_app(node: Node | None = None, **kwargs) -> FastAPI:
    node = node or build_node(**kwargs)
    app = FastAPI(title="two-key storage", version="0.1.0")
    app.state.node = node

    @app.exception_handler(ProtocolError)
    async def _protocol_error(request: Request, exc: ProtocolError):
        return JSONResponse({"error": exc.code, "detail": str(exc)}, status_code=STATUS.get(exc.code, 400))

    @app.exception_handler(ValueError)
    async def _value_error(request: Request, exc: ValueError):
        return JSONResponse({"error": "invalid", "detail": str(exc)}, status_code=422)

    @app.get("/health", response_model=s.Health)
    def health():
        return s.Health(role=node.role, p_bits=node.params.p_bits)

    @app.get("/params", response_model=s.ParamsModel)
    def params():
        p = node.params
        return s.ParamsModel(p=element_to_hex(p.p), q=element_to_hex(p.q), p_bits=p.p_bits)

    # -- ledger -------------------------------------------------------------

    def local_ledger() -> MockLedger:
        if not isinstance(node.ledger, MockLedger):
            raise HTTPException(404, "this node does not host the ledger")
        return node.ledger

    @app.post("/ledger/pay", response_model=s.Receipt)
    def pay(req: s.PayRequest):
        return asdict(local_ledger().pay(req.nft_id, req.payer, req.amount))

    @app.post("/ledger/verify", response_model=s.VerifyResponse)
    def verify(req: s.VerifyRequest):
        return s.VerifyResponse(ok=local_ledger().verify_and_consume(req.nft_id, req.payer, req.side))

    @app.get("/ledger/outstanding", response_model=s.CountResponse)
    def outstanding(nft_id: int, served: str, pending: str):
        return s.CountResponse(count=local_ledger().outstanding(nft_id, served, pending))

    @app.get("/ledger/receipts", response_model=list[s.Receipt])
    def receipts():
        return [asdict(r) for r in local_ledger().receipts()]

    # -- storage X ----------------------------------------------------------

    @app.post("/x/bootstrap", status_code=204)
    def x_bootstrap(req: s.BootstrapRequest):
        _need(node.x, "storage X").install_master_key(MasterKey(bytes.fromhex(req.master_key), Side.X))

    @app.post("/x/records", status_code=201, response_model=s.XRecordInfo)
    def x_ingest(req: s.ProvisionX):
        e = _need(node.x, "storage X").ingest(req.i, req.j, element_from_hex(req.g),
                                              [element_from_hex(b) for b in req.blocks], req.original_length)
        return s.XRecordInfo(i=e.record_id, j=e.epoch, g=req.g, block_count=len(e.blocks),
                             original_length=e.original_length)

    @app.get("/x/records/{i}", response_model=s.XRecordInfo)
    def x_record(i: int):
        x = _need(node.x, "storage X")
        e = x._entry(i)
        return s.XRecordInfo(i=i, j=e.epoch, g=element_to_hex(e.g), block_count=len(e.blocks),
                             original_length=e.original_length)

    @app.post("/x/records/{i}/rekey", response_model=s.EpochModel)
    def x_rekey(i: int, req: s.RekeyInitModel):
        _, j = _need(node.x, "storage X").apply_rekey(i, req.j, [element_from_hex(k) for k in req.ck_y])
        return s.EpochModel(i=i, j=j)

    @app.post("/x/records/{i}/serve", response_model=s.ServeXModel)
    def x_serve(i: int, req: s.FetchRequest, tasks: BackgroundTasks):
        r = _need(node.x, "storage X").serve(i, req.consumer, notify=False)
        tasks.add_task(node.notify_served, i, r.epoch, req.consumer)
        return s.ServeXModel(i=i, j=r.epoch, g=element_to_hex(r.g), blocks=_hexes(r.blocks),
                             inv_x=_hexes(r.inv_x), original_length=r.original_length)

    @app.get("/x/audit", response_model=s.AuditModel)
    def x_audit():
        return _need(node.x, "storage X").audit()

    # -- storage Y ----------------------------------------------------------

    @app.post("/y/bootstrap", status_code=204)
    def y_bootstrap(req: s.BootstrapRequest):
        _need(node.y, "storage Y").install_master_key(MasterKey(bytes.fromhex(req.master_key), Side.Y))

    @app.post("/y/records", status_code=201, response_model=s.YRecordInfo)
    def y_ingest(req: s.ProvisionY):
        e = _need(node.y, "storage Y").ingest_state(req.i, req.j, element_from_hex(req.g), req.block_count)
        return s.YRecordInfo(i=e.record_id, j=e.epoch, g=req.g, block_count=e.block_count)

    @app.get("/y/records/{i}", response_model=s.YRecordInfo)
    def y_record(i: int):
        e = _need(node.y, "storage Y")._entry(i)
        return s.YRecordInfo(i=i, j=e.epoch, g=element_to_hex(e.g), block_count=e.block_count, pending=e.pending)

    @app.post("/y/records/{i}/rekey", response_model=s.EpochModel)
    def y_rekey(i: int):
        y = _need(node.y, "storage Y")
        if y._entry(i).pending is not None:
            return s.EpochModel(i=i, j=node.resume_rekey(i))
        return s.EpochModel(i=i, j=node.coordinator.rekey(i))

    @app.post("/y/records/{i}/rekey-request", response_model=s.RekeyStarted)
    def y_rekey_request(i: int, req: s.RekeyRequestModel):
        _need(node.y, "storage Y")
        return s.RekeyStarted(i=i, j=node.coordinator.on_rekey_request(i, req.j, req.consumer))

    @app.post("/y/records/{i}/key", response_model=s.ServeYModel)
    def y_key(i: int, req: s.FetchRequest, tasks: BackgroundTasks):
        y = _need(node.y, "storage Y")
        r = y.serve_key(i, req.consumer)
        tasks.add_task(lambda: node.coordinator.deliver(y.poll_rekey(i)))
        return s.ServeYModel(i=i, j=r.epoch, inv_y=_hexes(r.inv_y))

    @app.get("/y/audit", response_model=s.AuditModel)
    def y_audit():
        return _need(node.y, "storage Y").audit()

    # -- raw protocol messages ------------------------------------------------

    @app.post("/messages")
    def messages(record: dict):
        """Deliver one protocol message (transcript record shape); returns the replies."""
        msg = ProtocolMessage.from_record(record)
        if msg.msg_type is MsgType.PAY:
            local_ledger().pay(msg.payload["i"], msg.payload["payer"], msg.payload["amount"])
            return []
        party = {"X": node.x, "Y": node.y}.get(msg.receiver)
        if party is None:
            raise HTTPException(404, f"this node does not host {msg.receiver!r}")
        if not party.bootstrapped and msg.msg_type not in (MsgType.BOOTSTRAP_X, MsgType.BOOTSTRAP_Y):
            raise NotBootstrapped(f"{msg.receiver} has no master key")
        return [reply.to_record() for reply in party.handle(msg)]

    return app
