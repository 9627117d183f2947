"""Deterministic multi-party scenario runner and transcript replay.

A scenario is a JSON document::

    {
      "params": "oakley-1024",            # preset name or {"p": "<hex>"}
      "channel": "plaintext",             # or "sealed"
      "scheduler": "fifo",                # or "shuffle" (seeded, per-record FIFO)
      "price": 10,                        # or {"<nft id>": price}
      "consumers": ["alice"],
      "records": [{"id": 1, "random_bytes": 300}, {"id": 2, "text": "..."},
                  {"id": 3, "file": "r3.bin"}, {"id": 4, "data_hex": "00ff"}],
      "initial_rekey": true,
      "actions": [{"op": "purchase", "record": 3, "consumer": "alice"},
                  {"op": "fetch", "record": 1, "consumer": "bob"},      # no payment
                  {"op": "rekey", "record": 2},
                  {"op": "settle"}],
      "faults": [{"kind": "drop", "msg_type": "RekeyInit", "occurrence": 1, "record": 2}],
      "checkpoints": ["provision", "end"]
    }

Every run is bootstrap, provision, initial rekey, then the listed actions.
With the ``fifo`` scheduler the network settles after every action; with
``shuffle`` it settles at phase ends and at explicit ``settle`` actions.
"""

from __future__ import annotations

import json
import random
from collections import defaultdict
from dataclasses import dataclass
from pathlib import Path

from ..consumer import Consumer
from ..errors import ProtocolError, ReplayMismatch, ScenarioError, Underpayment
from ..ledger import MockLedger
from ..messages import MsgType, ProtocolMessage, decode_payload
from ..modmath import NAMED_PARAMS, FieldParams
from ..owner import RecordOwner
from ..storage_x import StorageX
from ..storage_y import StorageY
from .channel import PLAINTEXT, SealedChannel
from .transcript import COMPLETED, HALTED, Transcript, canonical

FIFO = "fifo"
SHUFFLE = "shuffle"
PHASE_LABELS = ("bootstrap", "provision", "initial_rekey", "actions", "each_action", "end")
ACTION_OPS = ("purchase", "fetch", "rekey", "settle")


def resolve_params(spec) -> FieldParams:
    if spec is None:
        spec = "oakley-1024"
    if isinstance(spec, str):
        try:
            return NAMED_PARAMS[spec]
        except KeyError:
            raise ScenarioError(f"unknown parameter preset {spec!r}") from None
    if isinstance(spec, dict) and "p" in spec:
        return FieldParams.from_prime(int(spec["p"], 16))
    raise ScenarioError(f"cannot interpret params {spec!r}")


def resolve_records(config: dict, seed: int, base_dir: str | Path | None = None) -> dict[int, bytes]:
    rng = random.Random(f"{seed}:records")
    base = Path(base_dir) if base_dir else Path.cwd()
    out: dict[int, bytes] = {}
    for rec in config.get("records", []):
        i = int(rec["id"])
        if i in out:
            raise ScenarioError(f"record id {i} listed twice")
        if "data_hex" in rec:
            data = bytes.fromhex(rec["data_hex"])
        elif "text" in rec:
            data = rec["text"].encode()
        elif "file" in rec:
            data = (base / rec["file"]).read_bytes()
        elif "random_bytes" in rec:
            size = rec["random_bytes"]
            n = rng.randint(size[0], size[1]) if isinstance(size, list) else int(size)
            data = rng.randbytes(n)
        else:
            raise ScenarioError(f"record {i} has no data source")
        if not data:
            raise ScenarioError(f"record {i} is empty")
        out[i] = data
    return out


def _price_table(config: dict):
    price = config.get("price", 0)
    if isinstance(price, dict):
        return {int(k): int(v) for k, v in price.items()}
    return int(price)


def price_of(config: dict, i: int) -> int:
    table = _price_table(config)
    return table.get(i, 0) if isinstance(table, dict) else table


def validate_config(config: dict) -> None:
    for key in config:
        if key not in ("params", "channel", "scheduler", "price", "consumers", "records",
                       "initial_rekey", "actions", "faults", "checkpoints", "strict_generators",
                       "description"):
            raise ScenarioError(f"unknown scenario key {key!r}")
    if config.get("scheduler", FIFO) not in (FIFO, SHUFFLE):
        raise ScenarioError(f"unknown scheduler {config['scheduler']!r}")
    ids = {int(r["id"]) for r in config.get("records", [])}
    for n, act in enumerate(config.get("actions", [])):
        op = act.get("op")
        if op not in ACTION_OPS:
            raise ScenarioError(f"action {n}: unknown op {op!r}")
        if op != "settle" and int(act.get("record", -1)) not in ids:
            raise ScenarioError(f"action {n}: record {act.get('record')} is not configured")
        if op in ("purchase", "fetch") and not act.get("consumer"):
            raise ScenarioError(f"action {n}: {op} needs a consumer")
    for label in config.get("checkpoints", []):
        if label not in PHASE_LABELS:
            raise ScenarioError(f"unknown checkpoint label {label!r}")
    for f in config.get("faults", []):
        if f.get("kind") not in ("drop", "defer"):
            raise ScenarioError(f"unknown fault kind {f.get('kind')!r}")
        MsgType(f["msg_type"])


@dataclass
class Fault:
    kind: str
    msg_type: MsgType
    occurrence: int = 1
    record: int | None = None
    seen: int = 0

    def matches(self, msg: ProtocolMessage) -> bool:
        return msg.msg_type is self.msg_type and (self.record is None or msg.record_id == self.record)

    def would_fire(self, msg: ProtocolMessage) -> bool:
        return self.matches(msg) and self.seen + 1 == self.occurrence

    def observe(self, msg: ProtocolMessage) -> bool:
        if not self.matches(msg):
            return False
        self.seen += 1
        return self.seen == self.occurrence


class LedgerParty:
    """Receives consumer payments as messages; X and Y query the ledger directly."""

    party_id = "ledger"

    def __init__(self, ledger: MockLedger):
        self.ledger = ledger

    def handle(self, msg: ProtocolMessage) -> list[ProtocolMessage]:
        if msg.msg_type is not MsgType.PAY:
            raise ProtocolError(f"ledger does not accept {msg.msg_type.value}")
        try:
            self.ledger.pay(msg.payload["i"], msg.payload["payer"], msg.payload["amount"])
        except Underpayment:
            pass
        return []


class _Halt(Exception):
    def __init__(self, info: dict):
        self.info = info
        super().__init__(info)


class Simulation:
    def __init__(self, config: dict, seed: int = 0, base_dir: str | Path | None = None):
        validate_config(config)
        self.config = config
        self.seed = seed
        self.params = resolve_params(config.get("params"))
        self.records = resolve_records(config, seed, base_dir)
        self.ledger = MockLedger(_price_table(config))
        self.owner = RecordOwner(self.params, rng=random.Random(f"{seed}:owner"),
                                 strict_generators=bool(config.get("strict_generators", False)))
        self.x = StorageX(self.params, self.ledger)
        self.y = StorageY(self.params, self.ledger)
        names = list(config.get("consumers", []))
        for act in config.get("actions", []):
            if act.get("consumer") and act["consumer"] not in names:
                names.append(act["consumer"])
        self.consumers = {n: Consumer(n, self.params) for n in names}
        self.parties = {"X": self.x, "Y": self.y, "ledger": LedgerParty(self.ledger),
                        "owner": self.owner, **self.consumers}
        self.channel = SealedChannel(config.get("channel", PLAINTEXT), rng=random.Random(f"{seed}:channel"))
        for party in self.parties:
            self.channel.register(party)
        self.scheduler = config.get("scheduler", FIFO)
        self._sched_rng = random.Random(f"{seed}:sched")
        self.faults = [Fault(f["kind"], MsgType(f["msg_type"]), int(f.get("occurrence", 1)),
                             f.get("record")) for f in config.get("faults", [])]
        self.transcript = Transcript(config, seed)
        self._queue: list[ProtocolMessage] = []
        self._deferred: list[ProtocolMessage] = []
        self._deferred_ids: set[int] = set()
        self._action_index = 0
        self._checkpoints = set(config.get("checkpoints", []))

    # -- plan -----------------------------------------------------------------

    def plan(self) -> list[list[dict]]:
        """Action groups; the network settles after each group."""
        records = [int(r["id"]) for r in self.config.get("records", [])]
        user = [dict(a) for a in self.config.get("actions", [])]
        if not records and not user:
            return []
        groups = [("bootstrap", [{"op": "bootstrap"}]),
                  ("provision", [{"op": "provision", "record": i} for i in records])]
        if self.config.get("initial_rekey", True):
            groups.append(("initial_rekey", [{"op": "rekey", "record": i} for i in records]))
        groups.append(("actions", user))
        plan = []
        for label, acts in groups:
            if self.scheduler == FIFO or label == "actions":
                batch: list[dict] = []
                for act in acts:
                    if self.scheduler == FIFO:
                        plan.append((label, [act]))
                    elif act["op"] == "settle":
                        plan.append((label, batch + [act]))
                        batch = []
                    else:
                        batch.append(act)
                if batch:
                    plan.append((label, batch))
            else:
                plan.append((label, acts))
        return plan

    # -- actions --------------------------------------------------------------

    def execute_action(self, action: dict) -> list[ProtocolMessage]:
        op = action["op"]
        if op == "bootstrap":
            msgs = self.owner.bootstrap(send=self._check_deliverable)
        elif op == "provision":
            i = int(action["record"])
            if i not in self.owner.records:
                self.owner.add_record(i, self.records[i])
            msgs = self.owner.provision_messages(i)
        elif op == "rekey":
            init = self.y.initiate_rekey(int(action["record"]))
            msgs = [ProtocolMessage(MsgType.REKEY_INIT, "Y", "X", init.payload())]
        elif op in ("purchase", "fetch"):
            i = int(action["record"])
            amount = action.get("amount", price_of(self.config, i))
            msgs = self.consumers[action["consumer"]].start_purchase(i, amount, pay=(op == "purchase"))
        elif op == "settle":
            msgs = []
        else:
            raise ScenarioError(f"unknown op {op!r}")
        for m in msgs:
            m.action = action["index"]
        return msgs

    def _check_deliverable(self, msgs: list[ProtocolMessage]) -> None:
        """All-or-nothing send: refuse if any message would be dropped."""
        for m in msgs:
            if any(f.kind == "drop" and f.would_fire(m) for f in self.faults):
                raise ProtocolError(f"channel to {m.receiver} is down")

    # -- network --------------------------------------------------------------

    def _next(self) -> ProtocolMessage:
        if self.scheduler == FIFO:
            return self._queue.pop(0)
        keys = []
        for m in self._queue:
            if m.record_id not in keys:
                keys.append(m.record_id)
        key = keys[self._sched_rng.randrange(len(keys))]
        for n, m in enumerate(self._queue):
            if m.record_id == key:
                return self._queue.pop(n)
        raise AssertionError("unreachable")

    def _record(self, entry) -> None:
        if isinstance(entry, ProtocolMessage):
            entry.seq = len(self.transcript.messages)
        self.transcript.entries.append(entry)

    def run_until_quiet(self) -> None:
        while True:
            if not self._queue:
                if not self._deferred:
                    return
                self._queue.extend(self._deferred)
                self._deferred.clear()
                continue
            msg = self._next()
            fired = [f for f in self.faults if f.observe(msg)]
            if any(f.kind == "defer" for f in fired) and id(msg) not in self._deferred_ids:
                self._deferred_ids.add(id(msg))
                self._deferred.append(msg)
                continue
            self._record(msg)
            if any(f.kind == "drop" for f in fired):
                msg.dropped = True
                continue
            self._deliver(msg)

    def _deliver(self, msg: ProtocolMessage) -> None:
        delivered = msg
        if self.channel.mode != PLAINTEXT:
            msg.wire = self.channel.seal(msg.payload_bytes(), msg.receiver)
            opened = json.loads(self.channel.open(msg.wire, msg.receiver))
            delivered = ProtocolMessage(msg.msg_type, msg.sender, msg.receiver,
                                        decode_payload(msg.msg_type, opened), seq=msg.seq)
        try:
            outs = self.parties[msg.receiver].handle(delivered)
        except (ProtocolError, ValueError, KeyError) as exc:
            raise _Halt({"seq": msg.seq, "msg_type": msg.msg_type.value,
                         "error": getattr(exc, "code", type(exc).__name__), "detail": str(exc)}) from exc
        for out in outs:
            out.cause = msg.seq
            self._queue.append(out)

    # -- run ------------------------------------------------------------------

    def states(self) -> dict:
        return {
            "X": self.x.snapshot(),
            "Y": self.y.snapshot(),
            "ledger": self.ledger.snapshot(),
            "consumers": {n: c.snapshot() for n, c in sorted(self.consumers.items())},
        }

    def _checkpoint(self, label: str) -> None:
        if label in self._checkpoints:
            self.transcript.checkpoints.append(
                {"label": label, "after_seq": len(self.transcript.messages) - 1, "states": self.states()})

    def _stuck(self) -> dict | None:
        pending = [i for i, e in sorted(self.y.entries.items()) if e.pending is not None]
        if pending:
            return {"reason": "unacked pending epoch", "records": pending}
        stuck = {n: c.in_flight for n, c in self.consumers.items() if c.in_flight}
        if stuck:
            return {"reason": "purchase did not complete", "consumers": stuck}
        return None

    def run(self) -> Transcript:
        t = self.transcript
        plan = self.plan()
        last_label = None
        try:
            for label, acts in plan:
                if last_label is not None and label != last_label:
                    self._checkpoint(last_label)
                last_label = label
                for act in acts:
                    act = {"index": self._action_index, **act}
                    self._action_index += 1
                    self._record(act)
                    try:
                        self._queue.extend(self.execute_action(act))
                    except (ProtocolError, ValueError) as exc:
                        raise _Halt({"action": act["index"], "op": act["op"],
                                     "error": getattr(exc, "code", type(exc).__name__),
                                     "detail": str(exc)}) from exc
                self.run_until_quiet()
                if label == "actions":
                    self._checkpoint("each_action")
                stuck = self._stuck()
                if stuck:
                    raise _Halt({"action": self._action_index - 1, **stuck})
            if last_label is not None:
                self._checkpoint(last_label)
        except _Halt as halt:
            t.status, t.halt = HALTED, halt.info
        self._checkpoint("end")
        t.final_states = self.states()
        return t


def run_scenario(config: dict, seed: int = 0, base_dir: str | Path | None = None) -> Transcript:
    return Simulation(config, seed, base_dir).run()


def load_config(path: str | Path) -> dict:
    return json.loads(Path(path).read_text())


def replay(t: Transcript, base_dir: str | Path | None = None) -> dict:
    """Re-drive fresh parties with the transcript's actions and messages.

    Every message a party emits during replay must match the recorded one;
    the first divergence raises :class:`ReplayMismatch` naming its seq.
    """
    sim = Simulation(t.config, t.seed, base_dir)
    generated: dict[tuple, list[ProtocolMessage]] = {}
    used: dict[tuple, set[int]] = defaultdict(set)
    halt = t.halt or {}
    for entry in t.entries:
        if isinstance(entry, dict):
            try:
                generated[("a", entry["index"])] = sim.execute_action(entry)
            except (ProtocolError, ValueError) as exc:
                if halt.get("action") == entry["index"] and "seq" not in halt:
                    break
                raise ReplayMismatch(f"action {entry['index']}", str(exc)) from None
            continue
        key = ("m", entry.cause) if entry.cause is not None else ("a", entry.action)
        produced = generated.get(key, [])
        # deferral can reorder one cause's outputs, so match on type and receiver
        idx = next((n for n, m in enumerate(produced) if n not in used[key]
                    and m.msg_type is entry.msg_type and m.receiver == entry.receiver), None)
        if idx is None:
            raise ReplayMismatch(entry.seq, "no party produced this message")
        expected = produced[idx]
        used[key].add(idx)
        if not expected.same_content(entry):
            raise ReplayMismatch(entry.seq, f"{entry.msg_type.value} payload differs from regenerated message")
        if entry.wire is not None:
            try:
                opened = sim.channel.open(entry.wire, entry.receiver)
            except ProtocolError as exc:
                raise ReplayMismatch(entry.seq, str(exc)) from None
            if opened != expected.payload_bytes():
                raise ReplayMismatch(entry.seq, "sealed wire bytes do not open to the payload")
        if entry.dropped:
            continue
        try:
            generated[("m", entry.seq)] = sim.parties[entry.receiver].handle(expected)
        except (ProtocolError, ValueError, KeyError) as exc:
            if halt.get("seq") == entry.seq:
                break
            raise ReplayMismatch(entry.seq, f"handler failed: {exc}") from None
    states = sim.states()
    if t.final_states is not None:
        if t.status == COMPLETED:
            for key, produced in generated.items():
                if len(used[key]) < len(produced):
                    raise ReplayMismatch("end", f"{len(produced) - len(used[key])} regenerated message(s) missing")
        if canonical(states) != canonical(t.final_states):
            raise ReplayMismatch("end", "final party states differ")
    return states
