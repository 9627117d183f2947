"""Command-line interface, in-process and against a live local server."""

import json
import socket
import threading
import time

import pytest
import uvicorn

from conftest import DATA, SCENARIOS
from twokey.cli import main
from twokey.modmath import FieldParams, is_safe_prime
from twokey.service import create_app


def test_params_generate_and_show(tmp_path, capsys):
    out = tmp_path / "p.txt"
    assert main(["params", "generate", "--bits", "64", "--seed", "3", "--out", str(out)]) == 0
    params = FieldParams.loads(out.read_text())
    assert params.p_bits == 64 and is_safe_prime(params.p)
    capsys.readouterr()
    assert main(["params", "show", "--params", str(out)]) == 0
    assert "block_size=6" in capsys.readouterr().out
    assert main(["params", "show", "--params", "toy-23"]) == 0
    assert "block_size=none" in capsys.readouterr().out


def test_vectors_generate_and_check(tmp_path, capsys):
    assert main(["vectors", "check", str(DATA / "content_keys_oakley1024.txt")]) == 0
    assert "10/10 vectors match" in capsys.readouterr().out
    out = tmp_path / "v.txt"
    assert main(["vectors", "generate", "--count", "3", "--seed", "1", "--out", str(out)]) == 0
    assert main(["vectors", "check", str(out)]) == 0
    lines = out.read_text().splitlines()
    fields = lines[0].split()
    fields[-1] = format(int(fields[-1], 16) ^ 1, "x")
    out.write_text("\n".join([" ".join(fields)] + lines[1:]) + "\n")
    assert main(["vectors", "check", str(out)]) == 1


def test_sim_run_audit_replay(tmp_path, capsys):
    t = tmp_path / "t.jsonl"
    assert main(["sim", "run", "--config", str(SCENARIOS / "purchase.json"), "--seed", "2", "--out", str(t)]) == 0
    assert main(["sim", "audit", str(t)]) == 0
    assert main(["sim", "replay", str(t)]) == 0
    out = capsys.readouterr().out
    assert "no violations" in out and "replay ok" in out
    # tamper with the first rekey acknowledgement
    lines = t.read_text().splitlines()
    for n, line in enumerate(lines):
        rec = json.loads(line)
        if rec.get("msg_type") == "RekeyAck":
            rec["payload"]["j"] = "7"
            lines[n] = json.dumps(rec)
            break
    t.write_text("\n".join(lines) + "\n")
    assert main(["sim", "audit", str(t)]) == 1
    assert main(["sim", "replay", str(t)]) == 1
    assert "diverged at seq 9" in capsys.readouterr().err


def test_sim_run_halted_exit_code(tmp_path, capsys):
    t = tmp_path / "t.jsonl"
    assert main(["sim", "run", "--config", str(SCENARIOS / "dropped-rekey.json"), "--out", str(t)]) == 2
    assert "unacked pending epoch" in capsys.readouterr().out
    assert main(["sim", "replay", str(t)]) == 0


def test_sim_file_records_resolve_from_config_dir(tmp_path):
    (tmp_path / "blob.bin").write_bytes(b"file backed record" * 20)
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"records": [{"id": 1, "file": "blob.bin"}],
                               "actions": [{"op": "purchase", "record": 1, "consumer": "a"}]}))
    t = tmp_path / "out" / "t.jsonl"
    t.parent.mkdir()
    assert main(["sim", "run", "--config", str(cfg), "--out", str(t)]) == 0
    assert main(["sim", "audit", str(t)]) == 0


def _free_port():
    with socket.socket() as s:
        s.bind(("127.0.0.1", 0))
        return s.getsockname()[1]


@pytest.fixture
def server(tmp_path):
    port = _free_port()
    app = create_app(role="all", state_dir=tmp_path / "node", price=10)
    srv = uvicorn.Server(uvicorn.Config(app, host="127.0.0.1", port=port, log_level="warning"))
    thread = threading.Thread(target=srv.run, daemon=True)
    thread.start()
    for _ in range(200):
        if srv.started:
            break
        time.sleep(0.02)
    yield f"http://127.0.0.1:{port}", tmp_path
    srv.should_exit = True
    thread.join(5)


def test_owner_and_consumer_against_live_server(server, capsys):
    url, tmp = server
    state = tmp / "owner"
    src = tmp / "in.bin"
    src.write_bytes(bytes(range(256)) * 20)
    assert main(["owner", "bootstrap", "--state", str(state), "--server", url]) == 0
    assert main(["owner", "bootstrap", "--state", str(state), "--server", url]) == 1
    assert main(["owner", "add-record", "--id", "4", "--file", str(src), "--state", str(state), "--server", url]) == 0
    assert "epoch 2" in capsys.readouterr().out
    out = tmp / "out.bin"
    assert main(["consumer", "buy", "--id", "4", "--out", str(out), "--name", "alice", "--amount", "10",
                 "--server", url]) == 0
    assert out.read_bytes() == src.read_bytes()
    summary = json.loads(capsys.readouterr().out)
    assert summary["epoch"] == 2 and summary["bytes"] == 5120
    assert main(["consumer", "buy", "--id", "4", "--out", str(out), "--amount", "9", "--server", url]) == 1
    assert "costs 10, paid 9" in capsys.readouterr().err
    assert main(["storex", "audit", "--url", url]) == 0
    assert main(["storey", "audit", "--state", str(tmp / "node" / "y")]) == 0
