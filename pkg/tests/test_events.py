"""Event log round trips, corruption reporting, and replay counters."""

from __future__ import annotations

import pytest

from greenloop.errors import CorruptLogError
from greenloop.events import (EVENT_KINDS, EventLog, KIND_HALT, KIND_LABEL_RECEIVED,
                              KIND_TRADEOFF_POINT, KIND_UPDATE_COMMITTED, read_events, replay)


def small_log():
    log = EventLog()
    log.append(0, KIND_LABEL_RECEIVED, {"sample_id": 1, "task_id": 0, "label": 1,
                                        "kind": "label", "spent": 1, "budget": 5})
    log.append(0, KIND_UPDATE_COMMITTED, {"tag": "task0", "cumulative_kg": 0.25,
                                          "version_after": 3, "flops": 100})
    log.append(1, KIND_TRADEOFF_POINT, {"cumulative_kg": 0.25, "mean_accuracy": 0.8,
                                        "labels_spent": 1, "timestamp": 1, "model_version": 3})
    log.append(2, KIND_HALT, {"reason": "stream_complete"})
    return log


def test_round_trip(tmp_path):
    log = small_log()
    path = tmp_path / "events.ndjson"
    log.write(path)
    events = read_events(path)
    assert [e.kind for e in events] == [e.kind for e in log.events]
    assert [e.payload for e in events] == [e.payload for e in log.events]
    assert [e.seq for e in events] == [0, 1, 2, 3]


def test_write_is_deterministic(tmp_path):
    a, b = tmp_path / "a.ndjson", tmp_path / "b.ndjson"
    small_log().write(a)
    small_log().write(b)
    assert a.read_bytes() == b.read_bytes()


def test_unknown_kind_rejected_on_append():
    with pytest.raises(ValueError):
        EventLog().append(0, "mystery", {})


def test_corrupt_json_reports_line(tmp_path):
    path = tmp_path / "events.ndjson"
    small_log().write(path)
    lines = path.read_text().splitlines()
    lines[1] = "{broken"
    path.write_text("\n".join(lines) + "\n")
    with pytest.raises(CorruptLogError) as exc:
        read_events(path)
    assert exc.value.line == 2


def test_sequence_gap_reports_line(tmp_path):
    path = tmp_path / "events.ndjson"
    log = small_log()
    log.write(path)
    lines = path.read_text().splitlines()
    del lines[1]
    path.write_text("\n".join(lines) + "\n")
    with pytest.raises(CorruptLogError) as exc:
        read_events(path)
    assert exc.value.line == 2


def test_replay_counters():
    counters = replay(small_log().events)
    assert counters.labels_per_task == {0: 1}
    assert counters.cumulative_kg == 0.25
    assert counters.model_version == 3
    assert counters.updates_committed == 1
    assert counters.halt_reason == "stream_complete"
    assert len(counters.tradeoff_points) == 1


def test_kind_registry_is_closed():
    assert EVENT_KINDS == {
        "query_issued", "label_received", "rule_applied", "update_committed",
        "update_skipped", "deferred", "forgetting_violation", "corrective_update",
        "tradeoff_point", "halt",
    }
