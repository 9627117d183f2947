"""Deterministic multi-party simulator, transcript audit and replay."""

from .audit import AuditReport, Violation, audit_transcript
from .channel import SealedChannel
from .compromise import x_compromise_attempts
from .scenario import Simulation, load_config, replay, run_scenario
from .transcript import Transcript

__all__ = [
    "AuditReport", "SealedChannel", "Simulation", "Transcript", "Violation",
    "audit_transcript", "load_config", "replay", "run_scenario", "x_compromise_attempts",
]
