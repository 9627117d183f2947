"""Consumer purchase flow, retries and decryption."""

import dataclasses
import random

import pytest

from conftest import P23
from twokey.consumer import Consumer, RetrievalBundle, decrypt, recover_blocks
from twokey.deployment import Deployment
from twokey.errors import CorruptionError, EpochMismatch, PaymentRequired, TemporarilyUnavailable, Underpayment
from twokey.harness import audit_transcript, replay, run_scenario
from twokey.modmath import DEFAULT_PARAMS, encode_record
from twokey.owner import RecordOwner


def _bundle(**kw):
    base = dict(record_id=1, epoch=2, g=5, blocks=(18,), original_length=1, inv_x=(4,), inv_y=(10,), epoch_y=2)
    base.update(kw)
    return RetrievalBundle(**base)


def test_small_field_recovery():
    # 4 * 10 * 18 = 720 = 31*23 + 7
    assert recover_blocks(_bundle(), P23) == [7]


def test_identity_keys_pass_blocks_through():
    assert recover_blocks(_bundle(blocks=(9, 17), inv_x=(1, 1), inv_y=(1, 1)), P23) == [9, 17]


def test_recover_rejects_mismatch_and_corruption():
    with pytest.raises(EpochMismatch):
        recover_blocks(_bundle(epoch_y=3), P23)
    with pytest.raises(CorruptionError):
        recover_blocks(_bundle(inv_y=(10, 10)), P23)
    with pytest.raises(CorruptionError):
        recover_blocks(_bundle(blocks=(0,)), P23)
    with pytest.raises(CorruptionError):
        recover_blocks(_bundle(inv_x=(23,)), P23)


def _deployment(price=0, seed=5, size=600):
    d = Deployment(DEFAULT_PARAMS, price=price)
    owner = RecordOwner(DEFAULT_PARAMS, rng=random.Random(seed))
    d.bootstrap(owner)
    data = random.Random(seed).randbytes(size)
    owner.add_record(1, data)
    d.provision(owner.encrypt(1))
    d.rekey(1)
    return d, data


def test_direct_purchase_happy_path():
    d, data = _deployment(price=3)
    alice = Consumer("alice", DEFAULT_PARAMS, amount=3)
    assert alice.buy(1, d.ledger, d, d) == data
    assert alice.outcomes[-1].epoch == 2
    assert d.x.epoch(1) == d.y.epoch(1) == 3  # serve triggered the next rekey
    assert alice.buy(1, d.ledger, d, d) == data
    assert alice.outcomes[-1].epoch == 3


def test_underpayment_and_missing_payment():
    d, _ = _deployment(price=3)
    with pytest.raises(Underpayment):
        Consumer("cheap", DEFAULT_PARAMS, amount=2).buy(1, d.ledger, d, d)
    with pytest.raises(PaymentRequired):
        d.x.serve(1, "nobody")
    with pytest.raises(PaymentRequired):
        d.y.serve_key(1, "nobody")


class FlakyY:
    """Refuses the first key request as busy."""

    def __init__(self, inner):
        self.inner = inner
        self.calls = 0

    def serve_key(self, i, consumer):
        self.calls += 1
        if self.calls == 1:
            raise TemporarilyUnavailable("busy")
        return self.inner.serve_key(i, consumer)


class StaleX:
    """Reports a stale epoch on the first serve."""

    def __init__(self, inner):
        self.inner = inner
        self.calls = 0

    def serve(self, i, consumer):
        self.calls += 1
        r = self.inner.serve(i, consumer)
        return dataclasses.replace(r, epoch=r.epoch - 1) if self.calls == 1 else r


def test_busy_y_is_asked_once_more():
    d, data = _deployment()
    y = FlakyY(d.coordinator)
    assert Consumer("a", DEFAULT_PARAMS).buy(1, d.ledger, d.x, y) == data
    assert y.calls == 2


def test_busy_y_twice_gives_up():
    d, _ = _deployment()
    d.y.initiate_rekey(1)  # never acknowledged
    with pytest.raises(TemporarilyUnavailable):
        Consumer("a", DEFAULT_PARAMS).buy(1, d.ledger, d.x, d.y)


def test_epoch_mismatch_pays_again_once():
    d, data = _deployment()
    x = StaleX(d.x)
    assert Consumer("a", DEFAULT_PARAMS).buy(1, d.ledger, x, d.coordinator) == data
    assert x.calls == 2
    assert len(d.ledger.receipts()) == 2


def test_epoch_mismatch_twice_fails():
    class AlwaysStale(StaleX):
        def serve(self, i, consumer):
            r = self.inner.serve(i, consumer)
            return dataclasses.replace(r, epoch=r.epoch + 7)
    d, _ = _deployment()
    with pytest.raises(EpochMismatch):
        Consumer("a", DEFAULT_PARAMS).buy(1, d.ledger, AlwaysStale(d.x), d.coordinator)


def test_single_side_keys_do_not_decrypt():
    d, data = _deployment(size=300)
    d.ledger.pay(1, "a", 0)
    sx = d.x.serve(1, "a", notify=False)
    sy = d.y.serve_key(1, "a")
    good = RetrievalBundle.assemble(sx, sy)
    assert decrypt(good, DEFAULT_PARAMS) == data
    target = list(encode_record(data, DEFAULT_PARAMS).blocks)
    only_x = dataclasses.replace(good, inv_y=tuple(1 for _ in good.inv_y))
    only_y = dataclasses.replace(good, inv_x=tuple(1 for _ in good.inv_x))
    assert recover_blocks(only_x, DEFAULT_PARAMS) != target
    assert recover_blocks(only_y, DEFAULT_PARAMS) != target


# -- message mode ------------------------------------------------------------------

def test_fetch_without_payment_is_refused_by_both():
    cfg = {"scheduler": "fifo", "records": [{"id": 1, "random_bytes": 50}],
           "actions": [{"op": "fetch", "record": 1, "consumer": "eve"}]}
    t = run_scenario(cfg, 3)
    outcome = t.final_states["consumers"]["eve"]["outcomes"][0]
    assert not outcome["ok"] and outcome["error"] == "payment-required,payment-required"
    assert audit_transcript(t).ok


def test_deferred_fetch_gives_one_mismatch_then_success():
    cfg = {"scheduler": "shuffle", "records": [{"id": 1, "random_bytes": 300}],
           "actions": [{"op": "purchase", "record": 1, "consumer": "alice"},
                       {"op": "purchase", "record": 1, "consumer": "bob"}],
           "faults": [{"kind": "defer", "msg_type": "FetchRequestX", "occurrence": 2, "record": 1}]}
    t = run_scenario(cfg, 1)
    assert t.status == "completed"
    outcomes = {n: c["outcomes"] for n, c in t.final_states["consumers"].items()}
    assert [(o["ok"], o["epoch"]) for o in outcomes["alice"]] == [(True, 2)]
    assert [(o["ok"], o["epoch"]) for o in outcomes["bob"]] == [(True, 3)]
    bob_pays = [m for m in t.messages if m.msg_type.value == "Pay" and m.sender == "bob"]
    assert len(bob_pays) == 2  # the mismatch retry paid again
    assert audit_transcript(t).ok
    replay(t)
