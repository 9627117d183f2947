"""HTTP service, driven in-process through TestClient."""

import random

import pytest
from fastapi.testclient import TestClient

from twokey.consumer import Consumer
from twokey.errors import NotYetRekeyed, PaymentRequired, Underpayment, UnknownRecord
from twokey.messages import MsgType, ProtocolMessage
from twokey.modmath import DEFAULT_PARAMS
from twokey.owner import RecordOwner
from twokey.service import ServiceClient, YClient, build_node, create_app


def _provision(client, seed=3, ids=(1, 2), size=500):
    owner = RecordOwner(DEFAULT_PARAMS, rng=random.Random(seed))
    owner.bootstrap(client.deliver_bootstrap)
    data = {}
    for i in ids:
        data[i] = random.Random(seed + i).randbytes(size)
        owner.add_record(i, data[i])
        client.provision(owner.encrypt(i))
        assert client.y.rekey(i) == 2
    return data


@pytest.fixture
def combined(tmp_path):
    with TestClient(create_app(role="all", state_dir=tmp_path, price=5)) as http:
        yield ServiceClient(http), http


@pytest.fixture
def split(tmp_path):
    tl = TestClient(create_app(role="ledger", price=5))
    nx = build_node("x", ledger_url=tl, y_url="http://unused", state_dir=tmp_path / "x")
    tx = TestClient(create_app(nx))
    ty = TestClient(create_app(role="y", ledger_url=tl, x_url=tx, state_dir=tmp_path / "y"))
    nx.y_link = YClient(ty)
    with tl, tx, ty:
        yield ServiceClient(ledger=tl, x=tx, y=ty)


def test_health_and_params(combined):
    client, http = combined
    assert http.get("/health").json() == {"status": "ok", "role": "all", "p_bits": 1024}
    assert client.params() == DEFAULT_PARAMS


def test_buy_over_http_combined(combined):
    client, _ = combined
    data = _provision(client)
    alice = Consumer("alice", DEFAULT_PARAMS, amount=5)
    for n in range(3):
        assert alice.buy(1, client.ledger, client.x, client.y) == data[1]
        assert alice.outcomes[-1].epoch == 2 + n
    assert client.x.epoch(1) == client.y.epoch(1) == 5
    assert client.x.audit()["violations"] == [] and client.y.audit()["violations"] == []


def test_buy_over_http_split(split):
    data = _provision(split)
    bob = Consumer("bob", DEFAULT_PARAMS, amount=5)
    assert bob.buy(2, split.ledger, split.x, split.y) == data[2]
    assert bob.buy(2, split.ledger, split.x, split.y) == data[2]
    assert split.x.epoch(2) == split.y.epoch(2) == 4
    assert split.x.epoch(1) == 2
    assert split.y.audit()["records"] == 2


def test_refusals_map_to_exceptions_and_status(combined):
    client, http = combined
    _provision(client, ids=(1,))
    with pytest.raises(Underpayment):
        client.ledger.pay(1, "cheap", 4)
    with pytest.raises(PaymentRequired):
        client.x.serve(1, "nobody")
    resp = http.post("/y/records/1/key", json={"consumer": "nobody"})
    assert resp.status_code == 402 and resp.json()["error"] == "payment-required"
    with pytest.raises(UnknownRecord):
        client.x.epoch(9)
    assert http.post("/x/records", json={"i": 1, "g": "5", "blocks": ["2"], "original_length": 1}).status_code == 409
    assert http.post("/ledger/pay", json={"nft_id": 0, "payer": "a", "amount": 1}).status_code == 422
    assert http.post("/x/bootstrap", json={"master_key": "zz"}).status_code == 422
    assert http.post("/x/bootstrap", json={"master_key": "00" * 64}).json()["error"] == "already-bootstrapped"


def test_not_yet_rekeyed_and_resume(combined):
    client, http = combined
    owner = RecordOwner(DEFAULT_PARAMS, rng=random.Random(1))
    owner.bootstrap(client.deliver_bootstrap)
    owner.add_record(4, b"four")
    client.provision(owner.encrypt(4))
    client.ledger.pay(4, "a", 5)
    with pytest.raises(NotYetRekeyed):
        client.x.serve(4, "a")
    node = http.app.state.node
    node.y.initiate_rekey(4)  # started but never delivered
    assert http.get("/y/records/4").json()["pending"] == 2
    assert http.post("/y/records/4/key", json={"consumer": "a"}).status_code == 503
    assert client.y.rekey(4) == 2  # resumes the pending epoch instead of starting a new one
    assert client.x.epoch(4) == client.y.epoch(4) == 2


def test_resume_after_x_applied_but_ack_was_lost(combined):
    client, http = combined
    _provision(client, ids=(1,))
    node = http.app.state.node
    init = node.y.initiate_rekey(1)
    node.x.apply_rekey(1, init.epoch, list(init.ck_y))
    assert client.y.rekey(1) == 3
    assert node.y.entries[1].pending is None


def test_raw_message_endpoint(combined):
    client, http = combined
    _provision(client, ids=(1,))
    pay = ProtocolMessage(MsgType.PAY, "carol", "ledger", {"i": 1, "payer": "carol", "amount": 5})
    assert http.post("/messages", json=pay.to_record()).json() == []
    fx = ProtocolMessage(MsgType.FETCH_REQUEST_X, "carol", "X", {"i": 1, "consumer": "carol"})
    replies = [ProtocolMessage.from_record(r) for r in http.post("/messages", json=fx.to_record()).json()]
    assert [m.msg_type for m in replies] == [MsgType.SERVE_X, MsgType.REKEY_REQUEST]
    again = [ProtocolMessage.from_record(r) for r in http.post("/messages", json=fx.to_record()).json()]
    assert again[0].payload["error"] == "payment-required"
    bad = http.post("/messages", json={"msg_type": "Nope"})
    assert bad.status_code == 422 and bad.json()["error"] == "corruption"


def test_restart_keeps_state(tmp_path):
    with TestClient(create_app(role="all", state_dir=tmp_path)) as http:
        client = ServiceClient(http)
        data = _provision(client, ids=(7,))
    with TestClient(create_app(role="all", state_dir=tmp_path)) as http:
        client = ServiceClient(http)
        assert client.x.epoch(7) == 2
        assert Consumer("d", DEFAULT_PARAMS).buy(7, client.ledger, client.x, client.y) == data[7]


def test_role_wiring_is_checked():
    with pytest.raises(ValueError):
        build_node("x", ledger_url="http://l")
    with pytest.raises(ValueError):
        build_node("y", y_url="http://y")
    with pytest.raises(ValueError):
        build_node("bogus")
    with TestClient(create_app(role="ledger")) as http:
        assert http.get("/x/audit").status_code == 404
