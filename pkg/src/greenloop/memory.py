"""Bounded exemplar store with per-task reservoir sampling and the
forgetting monitor.

The buffer splits its capacity into equal per-task shares (floor division,
remainder to the earliest-seen tasks). Within each task's share a classic
reservoir keeps every sample alive with probability share/seen. When a new
task claims its share, over-share tasks shed random members.

Single writer: the orchestrator owns the buffer; everyone else reads
snapshots.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, replace as dc_replace
from typing import Mapping, Sequence

import numpy as np

from .errors import RejectedInputError
from .learner import Batch, LossReport, ModelState, evaluate
from .samples import PROV_REPLAY_PREFIX, LabeledSample

logger = logging.getLogger(__name__)

Slot = tuple[LabeledSample, int, float]  # (sample, task_id, retention weight)


@dataclass(frozen=True)
class TaskReference:
    """Loss anchor frozen when a task is declared complete."""

    reference_loss: float
    eval_set_id: str


@dataclass(frozen=True)
class ForgettingReport:
    """Per-task loss drift against the frozen anchors.

    delta_k = current loss on task k minus its reference loss. Violations
    (delta_k > margin) come sorted by magnitude, worst first.
    """

    deltas: Mapping[int, float]
    worst_delta: float
    violations: tuple[int, ...]
    margin: float

    @property
    def ok(self) -> bool:
        return not self.violations


class ReplayBuffer:
    """Capacity-bounded exemplar store with selective rehearsal."""

    def __init__(self, capacity: int, seed: int = 0, uncertainty_weighted: bool = False):
        if capacity < 1:
            raise RejectedInputError("capacity must be >= 1")
        self.capacity = capacity
        self.uncertainty_weighted = uncertainty_weighted
        self._rng = np.random.default_rng(seed)
        self.slots: list[Slot] = []
        self.per_task_reference: dict[int, TaskReference] = {}
        self.seen_count: dict[int, int] = {}
        self.task_order: list[int] = []
        # insert-path caches: per-task slot positions and the share split
        self._index: dict[int, list[int]] = {}
        self._shares: dict[int, int] = {}

    def __len__(self) -> int:
        return len(self.slots)

    def shares(self) -> dict[int, int]:
        """Per-task capacity shares: floor split, remainder to earliest tasks."""
        n = len(self.task_order)
        if n == 0:
            return {}
        base, rem = divmod(self.capacity, n)
        return {t: base + (1 if i < rem else 0) for i, t in enumerate(self.task_order)}

    def _rebuild_index(self) -> None:
        self._index = {t: [] for t in self.task_order}
        for i, (_, t, _) in enumerate(self.slots):
            self._index[t].append(i)

    def _shed_to_shares(self, rng: np.random.Generator) -> None:
        for t in self.task_order:
            idx = self._index.get(t, [])
            excess = len(idx) - self._shares[t]
            if excess <= 0:
                continue
            if self.uncertainty_weighted:
                # drop the least informative exemplars first
                victims = sorted(idx, key=lambda i: self.slots[i][2])[:excess]
            else:
                victims = list(rng.choice(idx, size=excess, replace=False))
            for i in sorted(victims, reverse=True):
                del self.slots[i]
        self._rebuild_index()

    def insert(self, sample: LabeledSample, task_id: int,
               weight: float = 1.0, rng_seed: int | None = None) -> None:
        """Reservoir insert under the task's capacity share.

        Deterministic given the buffer seed (or an explicit per-call
        ``rng_seed``); tasks with a zero share never store.
        """
        rng = self._rng if rng_seed is None else np.random.default_rng(rng_seed)
        if task_id not in self.seen_count:
            self.seen_count[task_id] = 0
            self.task_order.append(task_id)
            self._shares = self.shares()
            self._index.setdefault(task_id, [])
            self._shed_to_shares(rng)
        share = self._shares[task_id]
        self.seen_count[task_id] += 1
        if share == 0:
            return
        idx = self._index[task_id]
        if len(idx) < share:
            idx.append(len(self.slots))
            self.slots.append((sample, task_id, weight))
            return
        j = int(rng.integers(0, self.seen_count[task_id]))
        if j < share:
            if self.uncertainty_weighted:
                victim = min(idx, key=lambda i: self.slots[i][2])
            else:
                victim = idx[j]
            self.slots[victim] = (sample, task_id, weight)

    def rehearsal_batch(self, size: int, mix: float, current_batch: Batch,
                        rng_seed: int | None = None) -> Batch:
        """Blend round(mix*size) stored exemplars with current samples.

        Replayed samples get a ``replay/`` provenance prefix so the
        composition stays auditable. An empty buffer with mix > 0 falls
        back to the current batch only (logged).
        """
        if size < 1:
            raise RejectedInputError("size must be >= 1")
        if not (0.0 <= mix <= 1.0):
            raise RejectedInputError("mix must be in [0, 1]")
        rng = self._rng if rng_seed is None else np.random.default_rng(rng_seed)
        n_replay = int(round(mix * size))
        if n_replay > 0 and not self.slots:
            logger.warning("rehearsal requested (mix=%.2f) but buffer is empty; using current batch only", mix)
            n_replay = 0
        picked: list[LabeledSample] = []
        if n_replay > 0:
            replace_draw = n_replay > len(self.slots)
            choice = rng.choice(len(self.slots), size=n_replay, replace=replace_draw)
            for i in choice:
                s, _, _ = self.slots[int(i)]
                picked.append(dc_replace(s, provenance=PROV_REPLAY_PREFIX + s.provenance))
        n_current = size - len(picked)
        cur = list(current_batch.samples)
        if n_current >= len(cur):
            picked.extend(cur)
        elif n_current > 0:
            choice = rng.choice(len(cur), size=n_current, replace=False)
            picked.extend(cur[int(i)] for i in sorted(choice))
        return Batch(samples=tuple(picked), task_id=current_batch.task_id)

    def set_reference(self, task_id: int, reference_loss: float, eval_set_id: str) -> None:
        """Freeze the task's loss anchor; exactly once per task."""
        if task_id in self.per_task_reference:
            raise RejectedInputError(f"reference for task {task_id} already frozen")
        self.per_task_reference[task_id] = TaskReference(reference_loss, eval_set_id)

    def check_forgetting(self, model: ModelState, eval_sets: Mapping[int, Batch],
                         delta: float) -> ForgettingReport:
        """Compare current per-task losses against the frozen anchors."""
        deltas: dict[int, float] = {}
        for task_id, ref in self.per_task_reference.items():
            if task_id not in eval_sets:
                raise RejectedInputError(f"no eval set for referenced task {task_id}")
            report: LossReport = evaluate(model, eval_sets[task_id])
            deltas[task_id] = report.mean_loss - ref.reference_loss
        violations = tuple(sorted((k for k, d in deltas.items() if d > delta),
                                  key=lambda k: -deltas[k]))
        worst = max(deltas.values(), default=0.0)
        return ForgettingReport(deltas=deltas, worst_delta=worst, violations=violations, margin=delta)

    def restore(self, slots: Sequence[Slot], references: Mapping[int, TaskReference],
                seen: Mapping[int, int], task_order: Sequence[int]) -> None:
        """Reload contents from a checkpoint; RNG state is not restored."""
        if len(slots) > self.capacity:
            raise RejectedInputError("checkpoint holds more slots than capacity")
        self.slots = list(slots)
        self.per_task_reference = dict(references)
        self.seen_count = dict(seen)
        self.task_order = list(task_order)
        self._shares = self.shares()
        self._rebuild_index()
