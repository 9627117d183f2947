"""Transcript container and its JSON-lines file format.

Line kinds, in file order::

    {"kind": "header", "config": ..., "seed": ...}
    {"kind": "action", "index": k, "op": ..., ...}      interleaved with
    {"kind": "msg", "seq": ..., "msg_type": ..., ...}    protocol messages
    {"kind": "checkpoint", "label": ..., "after_seq": ..., "states": ...}
    {"kind": "footer", "status": ..., "halt": ..., "final_states": ...}
"""

from __future__ import annotations

import copy
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

from ..errors import CorruptionError
from ..messages import ProtocolMessage

COMPLETED = "completed"
HALTED = "halted"


def canonical(states: Any) -> str:
    return json.dumps(states, sort_keys=True, separators=(",", ":"))


@dataclass
class Transcript:
    config: dict
    seed: int
    entries: list = field(default_factory=list)  # ProtocolMessage or action dicts, in order
    checkpoints: list[dict] = field(default_factory=list)
    status: str = COMPLETED
    halt: dict | None = None
    final_states: dict | None = None

    @property
    def messages(self) -> list[ProtocolMessage]:
        return [e for e in self.entries if isinstance(e, ProtocolMessage)]

    @property
    def actions(self) -> list[dict]:
        return [e for e in self.entries if isinstance(e, dict)]

    def __len__(self):
        return len(self.messages)

    def message(self, seq: int) -> ProtocolMessage:
        for m in self.messages:
            if m.seq == seq:
                return m
        raise KeyError(seq)

    def truncated(self, n_messages: int) -> "Transcript":
        """Prefix holding the first ``n_messages`` messages (and the actions before them)."""
        kept, count = [], 0
        for e in self.entries:
            if isinstance(e, ProtocolMessage):
                if count == n_messages:
                    break
                count += 1
            kept.append(copy.deepcopy(e))
        return Transcript(copy.deepcopy(self.config), self.seed, kept, status="truncated")

    def dumps(self) -> str:
        lines = [json.dumps({"kind": "header", "config": self.config, "seed": self.seed}, sort_keys=True)]
        for e in self.entries:
            if isinstance(e, ProtocolMessage):
                lines.append(json.dumps({"kind": "msg", **e.to_record()}, sort_keys=True))
            else:
                lines.append(json.dumps({"kind": "action", **e}, sort_keys=True))
        for cp in self.checkpoints:
            lines.append(json.dumps({"kind": "checkpoint", **cp}, sort_keys=True))
        lines.append(json.dumps({"kind": "footer", "status": self.status, "halt": self.halt,
                                 "final_states": self.final_states}, sort_keys=True))
        return "\n".join(lines) + "\n"

    def dump(self, path: str | Path) -> None:
        Path(path).write_text(self.dumps())

    @classmethod
    def loads(cls, text: str) -> "Transcript":
        t = None
        for n, line in enumerate(text.splitlines(), 1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise CorruptionError(f"line {n}: {exc}") from None
            kind = rec.pop("kind", None)
            if kind == "header":
                t = cls(rec["config"], rec["seed"])
                continue
            if t is None:
                raise CorruptionError("transcript does not start with a header line")
            if kind == "msg":
                t.entries.append(ProtocolMessage.from_record(rec))
            elif kind == "action":
                t.entries.append(rec)
            elif kind == "checkpoint":
                t.checkpoints.append(rec)
            elif kind == "footer":
                t.status, t.halt, t.final_states = rec["status"], rec.get("halt"), rec.get("final_states")
            else:
                raise CorruptionError(f"line {n}: unknown record kind {kind!r}")
        if t is None:
            raise CorruptionError("empty transcript file")
        return t

    @classmethod
    def load(cls, path: str | Path) -> "Transcript":
        return cls.loads(Path(path).read_text())
