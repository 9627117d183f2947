"""Helpers shared by the two storage parties: per-record locks and flat-file state."""

from __future__ import annotations

import os
import threading
from contextlib import contextmanager
from pathlib import Path

from .keyderive import MasterKey, Side


class RecordLocks:
    """One lock per record id, so different records never wait on each other."""

    def __init__(self):
        self._guard = threading.Lock()
        self._locks: dict[int, threading.Lock] = {}

    @contextmanager
    def hold(self, i: int):
        with self._guard:
            lock = self._locks.setdefault(i, threading.Lock())
        with lock:
            yield


def atomic_write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_text(text)
    os.replace(tmp, path)


def parse_header(lines: list[str]) -> tuple[dict[str, str], list[str]]:
    """Split ``key=value`` header lines from the bare lines that follow."""
    header: dict[str, str] = {}
    body_start = 0
    for idx, line in enumerate(lines):
        if "=" not in line:
            body_start = idx
            break
        key, _, value = line.partition("=")
        header[key.strip()] = value.strip()
    else:
        body_start = len(lines)
    return header, [ln for ln in lines[body_start:] if ln.strip()]


def save_master_key(state_dir: Path, mk: MasterKey) -> None:
    atomic_write(state_dir / "master_key.hex", mk.key.hex() + "\n")
    os.chmod(state_dir / "master_key.hex", 0o600)


def load_master_key(state_dir: Path, side: Side) -> MasterKey | None:
    path = state_dir / "master_key.hex"
    if not path.exists():
        return None
    return MasterKey(bytes.fromhex(path.read_text().strip()), side)
