"""Energy and emission accounting, the hard-budget ledger, and the
carbon-aware scheduler.

Energy is modeled, not measured: FLOPs times a declared device profile.
``EnergyMeter`` is the extension point for plugging in real metering; the
shipped implementation is the model-based one.

Emission arithmetic is the product chain
    kg = energy_kwh * ci = (power_kw * hours) * ci
and the ledger enforces cumulative kg <= budget at every commit,
all-or-nothing.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace as dc_replace
from datetime import datetime, timedelta, timezone
from enum import Enum
from pathlib import Path
from typing import Iterable, Mapping, Protocol, Sequence

from .errors import BudgetExceededError, RejectedInputError, TraceParseError

KG_PER_POUND = 0.45359237

TRACE_HEADER = ["slot_start_iso8601", "ci_kg_per_kwh"]
LEDGER_HEADER = ["event_id", "timestamp", "tag", "energy_kwh", "ci", "emitted_kg", "cumulative_kg"]


@dataclass(frozen=True)
class DeviceProfile:
    """Declared power/throughput model for the execution hardware.

    ``idle_overhead_factor`` folds cooling and facility overhead into one
    multiplier (>= 1).
    """

    power_draw_kw: float
    flops_per_second: float
    idle_overhead_factor: float = 1.0

    def __post_init__(self):
        if self.power_draw_kw <= 0 or self.flops_per_second <= 0:
            raise RejectedInputError("power draw and throughput must be positive")
        if self.idle_overhead_factor < 1.0:
            raise RejectedInputError("idle_overhead_factor must be >= 1")
        if not math.isfinite(self.energy_per_flop_kwh) or self.energy_per_flop_kwh <= 0:
            raise RejectedInputError("device profile yields non-finite energy per FLOP")

    @property
    def energy_per_flop_kwh(self) -> float:
        return self.power_draw_kw * self.idle_overhead_factor / (self.flops_per_second * 3600.0)


class EnergyMeter(Protocol):
    """Measurement hook: anything that prices work in kWh."""

    def energy_kwh(self, flops: int) -> float: ...


@dataclass(frozen=True)
class ModeledMeter:
    device: DeviceProfile

    def energy_kwh(self, flops: int) -> float:
        return energy_kwh(flops, self.device)


def energy_kwh(flops: float, device: DeviceProfile) -> float:
    """Modeled energy for a FLOP count; zero iff flops is zero."""
    if flops < 0:
        raise RejectedInputError("flops must be >= 0")
    return flops * device.energy_per_flop_kwh


def emission_kg(energy: float, ci: float) -> float:
    """kg CO2e for an energy draw at a grid intensity; exact product."""
    if energy < 0 or ci < 0:
        raise RejectedInputError("energy and carbon intensity must be >= 0")
    return energy * ci


def pounds_to_kg(pounds: float) -> float:
    """Reporting helper for sources quoting emissions in pounds."""
    return pounds * KG_PER_POUND


@dataclass(frozen=True)
class CarbonIntensityTrace:
    """Uniformly slotted grid carbon intensity (kg CO2e per kWh)."""

    slot_starts: tuple[datetime, ...]
    ci: tuple[float, ...]
    slot_duration_s: float = 3600.0

    def __post_init__(self):
        if len(self.slot_starts) != len(self.ci) or not self.ci:
            raise RejectedInputError("trace needs matching, non-empty slot and ci sequences")
        if any(c < 0 for c in self.ci):
            raise RejectedInputError("carbon intensity must be >= 0")
        step = timedelta(seconds=self.slot_duration_s)
        for a, b in zip(self.slot_starts, self.slot_starts[1:]):
            if b - a != step:
                raise RejectedInputError("trace slots must be strictly increasing and uniform")

    def __len__(self) -> int:
        return len(self.ci)

    def ci_at(self, slot: int) -> float:
        if not (0 <= slot < len(self.ci)):
            raise RejectedInputError(f"slot {slot} outside trace of length {len(self.ci)}")
        return self.ci[slot]

    def clamp_slot(self, slot: int) -> int:
        return min(max(slot, 0), len(self.ci) - 1)

    @classmethod
    def from_values(cls, values: Sequence[float], slot_duration_s: float = 3600.0,
                    start: datetime | None = None) -> "CarbonIntensityTrace":
        start = start or datetime(2024, 1, 1, tzinfo=timezone.utc)
        step = timedelta(seconds=slot_duration_s)
        starts = tuple(start + i * step for i in range(len(values)))
        return cls(slot_starts=starts, ci=tuple(float(v) for v in values),
                   slot_duration_s=slot_duration_s)


def parse_trace_csv(path: str | Path, slot_duration_s: float = 3600.0) -> CarbonIntensityTrace:
    """Strict trace reader: header row, ISO-8601 UTC timestamps.

    Parse failures report the 1-based line number.
    """
    starts: list[datetime] = []
    values: list[float] = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        for lineno, row in enumerate(reader, start=1):
            if lineno == 1:
                if [c.strip() for c in row] != TRACE_HEADER:
                    raise TraceParseError(f"expected header {','.join(TRACE_HEADER)}", lineno)
                continue
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != 2:
                raise TraceParseError(f"expected 2 columns, got {len(row)}", lineno)
            raw_ts, raw_ci = row[0].strip(), row[1].strip()
            try:
                ts = datetime.fromisoformat(raw_ts.replace("Z", "+00:00"))
            except ValueError:
                raise TraceParseError(f"bad ISO-8601 timestamp {raw_ts!r}", lineno) from None
            if ts.tzinfo is None or ts.utcoffset() != timedelta(0):
                raise TraceParseError(f"timestamp {raw_ts!r} must be UTC", lineno)
            try:
                ci = float(raw_ci)
            except ValueError:
                raise TraceParseError(f"bad carbon intensity {raw_ci!r}", lineno) from None
            if ci < 0:
                raise TraceParseError("carbon intensity must be >= 0", lineno)
            starts.append(ts)
            values.append(ci)
    if not values:
        raise TraceParseError("trace has no data rows", 1)
    try:
        return CarbonIntensityTrace(tuple(starts), tuple(values), slot_duration_s)
    except RejectedInputError as exc:
        raise TraceParseError(str(exc), 2) from None


def write_trace_csv(trace: CarbonIntensityTrace, path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(TRACE_HEADER)
        for ts, ci in zip(trace.slot_starts, trace.ci):
            writer.writerow([ts.isoformat().replace("+00:00", "Z"), repr(ci)])


@dataclass(frozen=True)
class LedgerEntry:
    event_id: int
    timestamp: int
    energy_kwh: float
    ci_used: float
    emitted_kg: float
    tag: str


@dataclass(frozen=True)
class CarbonLedger:
    """Append-only emission record with a hard cumulative budget.

    Commit is all-or-nothing: success returns a new ledger, failure
    raises with the would-be overshoot and leaves this ledger untouched.
    Optional per-tag sub-budgets are enforced alongside the global one.
    """

    budget_epsilon_kg: float
    entries: tuple[LedgerEntry, ...] = ()
    cumulative_kg: float = 0.0
    tag_budgets: Mapping[str, float] = field(default_factory=dict)
    tag_cumulative: Mapping[str, float] = field(default_factory=dict)

    def __post_init__(self):
        if self.budget_epsilon_kg <= 0:
            raise RejectedInputError("budget must be positive")

    @property
    def headroom_kg(self) -> float:
        return self.budget_epsilon_kg - self.cumulative_kg

    def would_fit(self, emitted: float, tag: str | None = None) -> bool:
        if self.cumulative_kg + emitted > self.budget_epsilon_kg:
            return False
        if tag is not None and tag in self.tag_budgets:
            if self.tag_cumulative.get(tag, 0.0) + emitted > self.tag_budgets[tag]:
                return False
        return True

    def commit(self, *, event_id: int, timestamp: int, energy_kwh: float,
               ci: float, tag: str) -> "CarbonLedger":
        emitted = emission_kg(energy_kwh, ci)
        new_total = self.cumulative_kg + emitted
        if new_total > self.budget_epsilon_kg:
            raise BudgetExceededError(
                f"commit of {emitted:.6g} kg would exceed budget "
                f"{self.budget_epsilon_kg:.6g} kg by {new_total - self.budget_epsilon_kg:.6g} kg",
                overshoot_kg=new_total - self.budget_epsilon_kg,
            )
        tag_cum = dict(self.tag_cumulative)
        if tag in self.tag_budgets:
            new_tag_total = tag_cum.get(tag, 0.0) + emitted
            if new_tag_total > self.tag_budgets[tag]:
                raise BudgetExceededError(
                    f"commit of {emitted:.6g} kg would exceed sub-budget for {tag!r}",
                    overshoot_kg=new_tag_total - self.tag_budgets[tag],
                    tag=tag,
                )
            tag_cum[tag] = new_tag_total
        entry = LedgerEntry(event_id=event_id, timestamp=timestamp,
                            energy_kwh=energy_kwh, ci_used=ci, emitted_kg=emitted, tag=tag)
        return dc_replace(self, entries=self.entries + (entry,),
                          cumulative_kg=new_total, tag_cumulative=tag_cum)


def ledger_to_csv(ledger: CarbonLedger, path: str | Path) -> None:
    """Export with running totals, one row per committed entry."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(LEDGER_HEADER)
        running = 0.0
        for e in ledger.entries:
            running += e.emitted_kg
            writer.writerow([e.event_id, e.timestamp, e.tag, repr(e.energy_kwh),
                             repr(e.ci_used), repr(e.emitted_kg), repr(running)])


class Pathway(str, Enum):
    FULL = "full"
    SHALLOW = "shallow"


@dataclass(frozen=True)
class PathwayOption:
    label: Pathway
    flops: int

    def __post_init__(self):
        if self.flops < 0:
            raise RejectedInputError("pathway flops must be >= 0")


@dataclass(frozen=True)
class WorkItem:
    """A schedulable unit of training compute."""

    id: int
    flops: int
    pathway_options: tuple[PathwayOption, ...]
    deadline_slot: int | None = None

    def __post_init__(self):
        options = tuple(self.pathway_options)
        if not options:
            raise RejectedInputError("work item needs at least one pathway")
        by_label = {o.label: o for o in options}
        if len(by_label) != len(options):
            raise RejectedInputError("duplicate pathway labels")
        if Pathway.FULL in by_label and Pathway.SHALLOW in by_label:
            if by_label[Pathway.SHALLOW].flops >= by_label[Pathway.FULL].flops:
                raise RejectedInputError("shallow pathway must cost fewer FLOPs than full")
        object.__setattr__(self, "pathway_options", options)


class DecisionKind(str, Enum):
    PROCEED_FULL = "proceed_full"
    PROCEED_SHALLOW = "proceed_shallow"
    DEFER = "defer"
    SKIP = "skip"


@dataclass(frozen=True)
class Decision:
    kind: DecisionKind
    slot: int | None = None
    pathway: Pathway | None = None
    flops: int | None = None
    energy_kwh: float | None = None
    ci: float | None = None
    emission_kg: float | None = None

    @property
    def to_slot(self) -> int | None:
        return self.slot if self.kind is DecisionKind.DEFER else None


_PATHWAY_RANK = {Pathway.FULL: 0, Pathway.SHALLOW: 1}


def schedule(item: WorkItem, trace: CarbonIntensityTrace, now_slot: int,
             ledger: CarbonLedger, device: DeviceProfile,
             lookahead_w: int = 0) -> Decision:
    """Pick the cleanest feasible (slot, pathway) pair in the window.

    Candidates run from now to min(now + lookahead, deadline, trace end).
    Minimal emission wins; full beats shallow at equal emission, earlier
    beats later at equal everything. Nothing feasible means Skip.
    """
    if lookahead_w < 0:
        raise RejectedInputError("lookahead must be >= 0")
    if not (0 <= now_slot < len(trace)):
        raise RejectedInputError(f"now_slot {now_slot} outside trace")
    last = min(now_slot + lookahead_w, len(trace) - 1)
    if item.deadline_slot is not None:
        if item.deadline_slot < now_slot:
            return Decision(kind=DecisionKind.SKIP)
        last = min(last, item.deadline_slot)

    best: tuple[float, int, int, Decision] | None = None
    for slot in range(now_slot, last + 1):
        ci = trace.ci_at(slot)
        for option in item.pathway_options:
            energy = energy_kwh(option.flops, device)
            emitted = emission_kg(energy, ci)
            if not ledger.would_fit(emitted):
                continue
            key = (emitted, _PATHWAY_RANK[option.label], slot)
            if best is None or key < best[:3]:
                kind = DecisionKind.DEFER if slot > now_slot else (
                    DecisionKind.PROCEED_FULL if option.label is Pathway.FULL
                    else DecisionKind.PROCEED_SHALLOW)
                best = (*key, Decision(kind=kind, slot=slot, pathway=option.label,
                                       flops=option.flops, energy_kwh=energy,
                                       ci=ci, emission_kg=emitted))
    if best is None:
        return Decision(kind=DecisionKind.SKIP)
    return best[3]


def carbon_pressure(trace: CarbonIntensityTrace, now_slot: int, window: int) -> float:
    """Rank of the current intensity inside a window centered on now.

    0 means now is the cleanest slot in the window, 1 the dirtiest; ties
    resolve to the lowest rank. The window shifts inward at trace edges
    to keep its size when possible.
    """
    if window < 1:
        raise RejectedInputError("window must be >= 1")
    if not (0 <= now_slot < len(trace)):
        raise RejectedInputError(f"now_slot {now_slot} outside trace")
    n = len(trace)
    w = min(window, n)
    lo = max(0, min(now_slot - (w - 1) // 2, n - w))
    values = trace.ci[lo : lo + w]
    if w == 1:
        return 0.0
    now_ci = trace.ci_at(now_slot)
    rank = sum(1 for v in values if v < now_ci)
    return rank / (w - 1)
