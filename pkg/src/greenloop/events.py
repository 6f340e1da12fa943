"""Append-only run event log: line-delimited JSON, replayable.

Each record is ``{"seq": int, "slot": int, "kind": str, "payload": {...}}``
serialized with sorted keys so identical runs produce identical bytes.
Slots are logical clock ticks in simulation mode.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator

from .errors import CorruptLogError

KIND_QUERY_ISSUED = "query_issued"
KIND_LABEL_RECEIVED = "label_received"
KIND_RULE_APPLIED = "rule_applied"
KIND_UPDATE_COMMITTED = "update_committed"
KIND_UPDATE_SKIPPED = "update_skipped"
KIND_DEFERRED = "deferred"
KIND_FORGETTING_VIOLATION = "forgetting_violation"
KIND_CORRECTIVE_UPDATE = "corrective_update"
KIND_TRADEOFF_POINT = "tradeoff_point"
KIND_HALT = "halt"

EVENT_KINDS = frozenset({
    KIND_QUERY_ISSUED, KIND_LABEL_RECEIVED, KIND_RULE_APPLIED,
    KIND_UPDATE_COMMITTED, KIND_UPDATE_SKIPPED, KIND_DEFERRED,
    KIND_FORGETTING_VIOLATION, KIND_CORRECTIVE_UPDATE,
    KIND_TRADEOFF_POINT, KIND_HALT,
})


@dataclass(frozen=True)
class Event:
    seq: int
    slot: int
    kind: str
    payload: dict

    def to_json(self) -> str:
        return json.dumps(
            {"seq": self.seq, "slot": self.slot, "kind": self.kind, "payload": self.payload},
            sort_keys=True, separators=(",", ":"),
        )


class EventLog:
    """In-memory append-only log; write once at the end of a run."""

    def __init__(self):
        self.events: list[Event] = []

    def append(self, slot: int, kind: str, payload: dict) -> Event:
        if kind not in EVENT_KINDS:
            raise ValueError(f"unknown event kind {kind!r}")
        event = Event(seq=len(self.events), slot=slot, kind=kind, payload=payload)
        self.events.append(event)
        return event

    def __len__(self) -> int:
        return len(self.events)

    def __iter__(self) -> Iterator[Event]:
        return iter(self.events)

    def write(self, path: str | Path) -> None:
        with open(path, "w") as fh:
            for event in self.events:
                fh.write(event.to_json())
                fh.write("\n")


def read_events(path: str | Path) -> list[Event]:
    """Parse an event log file; errors carry the 1-based line number."""
    events: list[Event] = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise CorruptLogError(f"invalid JSON ({exc.msg})", lineno) from None
            try:
                event = Event(seq=rec["seq"], slot=rec["slot"], kind=rec["kind"],
                              payload=rec["payload"])
            except (KeyError, TypeError):
                raise CorruptLogError("record missing seq/slot/kind/payload", lineno) from None
            if event.kind not in EVENT_KINDS:
                raise CorruptLogError(f"unknown event kind {event.kind!r}", lineno)
            if event.seq != len(events):
                raise CorruptLogError(f"sequence gap: expected {len(events)}, got {event.seq}", lineno)
            events.append(event)
    return events


@dataclass
class ReplayCounters:
    """Budget/progress counters reconstructed purely from the log."""

    labels_per_task: dict[int, int] = field(default_factory=dict)
    weak_labels: int = 0
    cumulative_kg: float = 0.0
    model_version: int = 0
    updates_committed: int = 0
    updates_skipped: int = 0
    deferrals: int = 0
    tradeoff_points: list[dict] = field(default_factory=list)
    halt_reason: str | None = None


def replay(events: Iterable[Event]) -> ReplayCounters:
    """Fold the log back into counters; the oracle for status endpoints."""
    counters = ReplayCounters()
    for event in events:
        p = event.payload
        if event.kind == KIND_LABEL_RECEIVED:
            task = int(p["task_id"])
            counters.labels_per_task[task] = counters.labels_per_task.get(task, 0) + 1
        elif event.kind == KIND_RULE_APPLIED:
            counters.weak_labels += int(p["matched"])
        elif event.kind in (KIND_UPDATE_COMMITTED, KIND_CORRECTIVE_UPDATE):
            counters.cumulative_kg = float(p["cumulative_kg"])
            counters.model_version = int(p["version_after"])
            counters.updates_committed += 1
        elif event.kind == KIND_UPDATE_SKIPPED:
            counters.updates_skipped += 1
        elif event.kind == KIND_DEFERRED:
            counters.deferrals += 1
        elif event.kind == KIND_TRADEOFF_POINT:
            counters.tradeoff_points.append(p)
        elif event.kind == KIND_HALT:
            counters.halt_reason = p.get("reason")
    return counters
