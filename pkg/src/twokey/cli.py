"""Command-line entry point.

Network commands talk to the HTTP service: either one combined node
(``--server``) or separate ``--ledger-url``/``--x-url``/``--y-url`` nodes.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import random
import sys
from pathlib import Path

from . import _store
from .errors import ProtocolError, ReplayMismatch
from .keyderive import MasterKey, Side, derive_content_key
from .modmath import (DEFAULT_PARAMS, NAMED_PARAMS, FieldParams, element_from_hex, element_to_hex,
                      find_large_order_element, generate_safe_prime, is_safe_prime)

log = logging.getLogger("twokey")


def load_params(spec: str | None) -> FieldParams:
    if spec is None:
        return DEFAULT_PARAMS
    if spec in NAMED_PARAMS:
        return NAMED_PARAMS[spec]
    return FieldParams.loads(Path(spec).read_text())


def _die(msg: str, code: int = 1) -> int:
    print(f"error: {msg}", file=sys.stderr)
    return code


def _client(args):
    from .service.client import ServiceClient
    if args.server:
        return ServiceClient(args.server, ledger=args.ledger_url, x=args.x_url, y=args.y_url)
    return ServiceClient(ledger=args.ledger_url, x=args.x_url, y=args.y_url)


def _add_endpoints(p: argparse.ArgumentParser) -> None:
    p.add_argument("--server", help="combined node URL (role all)")
    p.add_argument("--ledger-url")
    p.add_argument("--x-url")
    p.add_argument("--y-url")


def _parse_listen(listen: str) -> tuple[str, int]:
    host, _, port = listen.rpartition(":")
    return host or "127.0.0.1", int(port)


# -- params --------------------------------------------------------------------

def cmd_params_generate(args) -> int:
    rng = random.Random(args.seed) if args.seed is not None else None
    params = generate_safe_prime(args.bits, rng)
    text = params.dumps()
    if args.out:
        Path(args.out).write_text(text)
        print(f"wrote {params.p_bits}-bit safe prime to {args.out}")
    else:
        print(text, end="")
    return 0


def cmd_params_show(args) -> int:
    params = load_params(args.params)
    print(f"p_bits={params.p_bits}")
    print(f"p={element_to_hex(params.p)}")
    print(f"q={element_to_hex(params.q)}")
    print(f"safe_prime={is_safe_prime(params.p)}")
    size = params.block_size
    print(f"block_size={size}" if size >= 1 else "block_size=none (field too small to encode records)")
    return 0


# -- keyderive test vectors ------------------------------------------------------

def cmd_vectors_generate(args) -> int:
    params = load_params(args.params)
    rng = random.Random(args.seed)
    lines = []
    for n in range(args.count):
        mk = MasterKey(rng.randbytes(64), Side.X)
        g = find_large_order_element(params, rng)
        i, j, b = rng.randint(1, 1000), rng.randint(1, 50), rng.randint(0, 40)
        key = derive_content_key(mk, g, i, j, b, params)
        lines.append(f"{mk.key.hex()} {element_to_hex(g)} {i} {j} {b} {element_to_hex(key.residue)}")
    text = "\n".join(lines) + "\n"
    if args.out:
        Path(args.out).write_text(text)
    else:
        print(text, end="")
    return 0


def cmd_vectors_check(args) -> int:
    params = load_params(args.params)
    bad = 0
    lines = [ln for ln in Path(args.file).read_text().splitlines() if ln.strip()]
    for n, line in enumerate(lines, 1):
        mk_hex, g_hex, i, j, b, want = line.split()
        key = derive_content_key(MasterKey(bytes.fromhex(mk_hex), Side.X), element_from_hex(g_hex),
                                 int(i), int(j), int(b), params)
        if key.residue != element_from_hex(want):
            bad += 1
            print(f"vector {n}: mismatch")
    print(f"{len(lines) - bad}/{len(lines)} vectors match")
    return 1 if bad else 0


# -- owner ---------------------------------------------------------------------

def _owner_keys(state: Path):
    mk_x = _store.load_master_key(state / "x", Side.X)
    mk_y = _store.load_master_key(state / "y", Side.Y)
    return mk_x, mk_y


def cmd_owner_bootstrap(args) -> int:
    from .owner import RecordOwner
    state = Path(args.state)
    if any(k is not None for k in _owner_keys(state)):
        return _die(f"{state} already holds master keys")
    client = _client(args)
    params = client.params()
    owner = RecordOwner(params)
    owner.bootstrap(client.deliver_bootstrap)
    (state / "x").mkdir(parents=True, exist_ok=True)
    (state / "y").mkdir(parents=True, exist_ok=True)
    _store.save_master_key(state / "x", owner.mk_x)
    _store.save_master_key(state / "y", owner.mk_y)
    _store.atomic_write(state / "params.txt", params.dumps())
    print("bootstrapped X and Y")
    return 0


def cmd_owner_add_record(args) -> int:
    from .owner import RecordOwner
    state = Path(args.state)
    mk_x, mk_y = _owner_keys(state)
    if mk_x is None or mk_y is None:
        return _die(f"no master keys in {state}; run `owner bootstrap` first")
    params = FieldParams.loads((state / "params.txt").read_text())
    index_path = state / "records.json"
    index = json.loads(index_path.read_text()) if index_path.exists() else {}
    if str(args.id) in index:
        return _die(f"record {args.id} was already added")
    owner = RecordOwner(params)
    owner.restore_keys(mk_x, mk_y)
    owner._used_generators.update(element_from_hex(g) for g in index.values())
    data = Path(args.file).read_bytes()
    owner.add_record(args.id, data)
    record = owner.encrypt(args.id)
    client = _client(args)
    client.provision(record)
    index[str(args.id)] = element_to_hex(record.g)
    _store.atomic_write(index_path, json.dumps(index, indent=1, sort_keys=True) + "\n")
    epoch = 1 if args.no_rekey else client.y.rekey(args.id)
    print(f"record {args.id}: {len(data)} bytes in {len(record.blocks)} block(s), epoch {epoch}")
    return 0


# -- consumer ------------------------------------------------------------------

def cmd_consumer_buy(args) -> int:
    from .consumer import Consumer
    client = _client(args)
    consumer = Consumer(args.name, client.params(), amount=args.amount)
    try:
        plaintext = consumer.buy(args.id, client.ledger, client.x, client.y)
    except (ProtocolError, ValueError) as exc:
        return _die(f"purchase of record {args.id} failed: {exc}")
    Path(args.out).write_bytes(plaintext)
    print(json.dumps({"record": args.id, "epoch": consumer.outcomes[-1].epoch, "bytes": len(plaintext),
                      "sha256": hashlib.sha256(plaintext).hexdigest()}))
    return 0


# -- storage nodes ---------------------------------------------------------------

def _serve(args, role: str) -> int:
    import uvicorn

    from .service.app import create_app
    host, port = _parse_listen(args.listen)
    app = create_app(role=role, params=load_params(args.params), state_dir=args.state,
                     price=_price(args.price), ledger_url=getattr(args, "ledger_url", None),
                     x_url=getattr(args, "x_url", None), y_url=getattr(args, "y_url", None))
    uvicorn.run(app, host=host, port=port, log_level=args.log_level)
    return 0


def _price(text: str | None):
    if text is None:
        return 0
    if text.lstrip().startswith("{"):
        return {int(k): int(v) for k, v in json.loads(text).items()}
    return int(text)


def _audit_local(args, side: str) -> int:
    params = load_params(args.params)
    if args.url:
        from .service.client import XClient, YClient
        report = (XClient if side == "X" else YClient)(args.url).audit()
    else:
        if side == "X":
            from .storage_x import StorageX as party
        else:
            from .storage_y import StorageY as party
        report = party(params, state_dir=args.state).audit()
    print(json.dumps(report, indent=1))
    return 1 if report["violations"] else 0


# -- simulator -----------------------------------------------------------------

def cmd_sim_run(args) -> int:
    from .harness import load_config, run_scenario
    config = load_config(args.config)
    base = Path(args.config).resolve().parent
    # pin file-backed records to absolute paths so audit/replay work from anywhere
    for rec in config.get("records", []):
        if "file" in rec:
            rec["file"] = str(base / rec["file"])
    t = run_scenario(config, args.seed, base)
    t.dump(args.out)
    print(f"{t.status}: {len(t.messages)} messages -> {args.out}")
    if t.halt:
        print(f"halt: {json.dumps(t.halt, sort_keys=True)}")
    return 0 if t.status == "completed" else 2


def _base_dir(args) -> Path:
    return Path(args.base_dir) if args.base_dir else Path(args.transcript).resolve().parent


def cmd_sim_audit(args) -> int:
    from .harness import Transcript, audit_transcript
    t = Transcript.load(args.transcript)
    report = audit_transcript(t, base_dir=_base_dir(args))
    print("\n".join(report.lines()))
    return 0 if report.ok else 1


def cmd_sim_replay(args) -> int:
    from .harness import Transcript, replay
    t = Transcript.load(args.transcript)
    try:
        replay(t, _base_dir(args))
    except ReplayMismatch as exc:
        return _die(str(exc))
    print(f"replay ok: {len(t.messages)} messages reproduced ({t.status})")
    return 0


# -- parser --------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="twokey", description="Two-storage rekeying record store.")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="group", required=True)

    params = sub.add_parser("params", help="field parameters").add_subparsers(dest="cmd", required=True)
    p = params.add_parser("generate", help="generate a fresh safe prime")
    p.add_argument("--bits", type=int, default=1024)
    p.add_argument("--seed", type=int)
    p.add_argument("--out")
    p.set_defaults(func=cmd_params_generate)
    p = params.add_parser("show", help="print a parameter set")
    p.add_argument("--params", help=f"preset ({', '.join(NAMED_PARAMS)}) or params file")
    p.set_defaults(func=cmd_params_show)

    vec = sub.add_parser("vectors", help="content-key test vectors").add_subparsers(dest="cmd", required=True)
    p = vec.add_parser("generate")
    p.add_argument("--count", type=int, default=8)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--params")
    p.add_argument("--out")
    p.set_defaults(func=cmd_vectors_generate)
    p = vec.add_parser("check")
    p.add_argument("file")
    p.add_argument("--params")
    p.set_defaults(func=cmd_vectors_check)

    owner = sub.add_parser("owner", help="record owner").add_subparsers(dest="cmd", required=True)
    p = owner.add_parser("bootstrap", help="create master keys and install them on X and Y")
    p.add_argument("--state", default="owner-state")
    _add_endpoints(p)
    p.set_defaults(func=cmd_owner_bootstrap)
    p = owner.add_parser("add-record", help="encrypt a file and provision it")
    p.add_argument("--id", type=int, required=True)
    p.add_argument("--file", required=True)
    p.add_argument("--state", default="owner-state")
    p.add_argument("--no-rekey", action="store_true", help="leave the record at epoch 1 (not yet servable)")
    _add_endpoints(p)
    p.set_defaults(func=cmd_owner_add_record)

    consumer = sub.add_parser("consumer", help="buyer").add_subparsers(dest="cmd", required=True)
    p = consumer.add_parser("buy", help="pay for a record, fetch and decrypt it")
    p.add_argument("--id", type=int, required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--name", default="consumer")
    p.add_argument("--amount", type=int, default=0)
    _add_endpoints(p)
    p.set_defaults(func=cmd_consumer_buy)

    for group, role, side in (("storex", "x", "X"), ("storey", "y", "Y")):
        g = sub.add_parser(group, help=f"storage {side}").add_subparsers(dest="cmd", required=True)
        p = g.add_parser("serve-loop", help=f"run storage {side} as an HTTP service")
        p.add_argument("--listen", default="127.0.0.1:8000")
        p.add_argument("--state", required=True)
        p.add_argument("--params")
        p.add_argument("--ledger-url", required=True)
        p.add_argument(f"--{'y' if side == 'X' else 'x'}-url", required=True)
        p.add_argument("--price", help=argparse.SUPPRESS)
        p.add_argument("--log-level", default="info")
        p.set_defaults(func=lambda a, role=role: _serve(a, role))
        p = g.add_parser("audit", help="recompute accumulators and check invariants")
        p.add_argument("--state")
        p.add_argument("--url", help="audit a running node instead of a state directory")
        p.add_argument("--params")
        p.set_defaults(func=lambda a, side=side: _audit_local(a, side))

    ledger = sub.add_parser("ledger", help="mock ledger").add_subparsers(dest="cmd", required=True)
    p = ledger.add_parser("serve-loop")
    p.add_argument("--listen", default="127.0.0.1:8000")
    p.add_argument("--state")
    p.add_argument("--params")
    p.add_argument("--price", help='flat price, or JSON {"<nft>": price}')
    p.add_argument("--log-level", default="info")
    p.set_defaults(func=lambda a: _serve(a, "ledger"))

    p = sub.add_parser("serve", help="run ledger, X and Y in one HTTP service")
    p.add_argument("--listen", default="127.0.0.1:8000")
    p.add_argument("--state")
    p.add_argument("--params")
    p.add_argument("--price")
    p.add_argument("--log-level", default="info")
    p.set_defaults(func=lambda a: _serve(a, "all"))

    sim = sub.add_parser("sim", help="deterministic scenario simulator").add_subparsers(dest="cmd", required=True)
    p = sim.add_parser("run")
    p.add_argument("--config", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_sim_run)
    for name, func in (("audit", cmd_sim_audit), ("replay", cmd_sim_replay)):
        p = sim.add_parser(name)
        p.add_argument("transcript")
        p.add_argument("--base-dir", help="directory that file-based records are relative to")
        p.set_defaults(func=func)
    return ap


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ProtocolError, OSError, ValueError) as exc:
        return _die(str(exc))


if __name__ == "__main__":
    sys.exit(main())
