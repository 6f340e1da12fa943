"""The lifelong loop: task streams in, budget-gated updates out.

Per task the loop (1) selects queries under the throttled label budget,
(2) obtains labels from the oracle (or the live feedback queue), (3) routes
every update through the carbon scheduler and commits its emission to the
ledger before executing, (4) mixes rehearsal exemplars into each batch,
(5) monitors forgetting and fires corrective updates, and (6) appends a
carbon/accuracy tradeoff point after every committed update.

Constraint handling is procedural: ledger gating, budget gating, and
violation-triggered corrections rather than a solver. Budget exhaustion
halts the run cleanly with complete artifacts.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace as dc_replace
from typing import Iterable, Mapping, Sequence

import numpy as np

from . import acquisition, carbon
from .acquisition import Ensemble, QueryBudget, ThrottleContext, ThrottleParams
from .carbon import (CarbonIntensityTrace, CarbonLedger, Decision, DecisionKind,
                     DeviceProfile, Pathway, PathwayOption, WorkItem)
from .errors import BudgetExceededError, RejectedInputError
from .events import (EventLog, KIND_CORRECTIVE_UPDATE, KIND_DEFERRED, KIND_FORGETTING_VIOLATION,
                     KIND_HALT, KIND_LABEL_RECEIVED, KIND_QUERY_ISSUED, KIND_RULE_APPLIED,
                     KIND_TRADEOFF_POINT, KIND_UPDATE_COMMITTED, KIND_UPDATE_SKIPPED)
from .learner import (Architecture, Batch, ModelState, UpdateConfig, evaluate, init_model,
                      output_layer_mask, regularizer, update, update_flops)
from .memory import ForgettingReport, ReplayBuffer
from .samples import PROV_HUMAN, PROV_WEAK, LabeledSample, UnlabeledSample
from .streams import Oracle, Task, TaskStream

logger = logging.getLogger(__name__)

HALT_BUDGET = "budget_exceeded"
HALT_FORGETTING = "forgetting_infeasible"
HALT_COMPLETE = "stream_complete"


@dataclass(frozen=True)
class BudgetSet:
    """The run's hard limits and objective weights."""

    epsilon_kg: float          # carbon budget
    labels_per_task: int       # annotation budget b
    delta: float               # tolerable forgetting margin
    lam: float = 0.0           # footprint regularizer weight
    beta: float = 1.0          # disagreement weight in the acquisition utility

    def __post_init__(self):
        if self.epsilon_kg <= 0:
            raise RejectedInputError("carbon budget must be positive")
        if self.labels_per_task < 0 or self.delta < 0 or self.lam < 0 or self.beta < 0:
            raise RejectedInputError("budgets and weights must be nonnegative")


@dataclass(frozen=True)
class Rule:
    """Human-injected predicate: feature[i] <cmp> threshold implies label."""

    feature_index: int
    comparator: str
    threshold: float
    label: int

    COMPARATORS = ("<", "<=", ">", ">=", "==")

    def __post_init__(self):
        if self.feature_index < 0:
            raise RejectedInputError("feature_index must be >= 0")
        if self.comparator not in self.COMPARATORS:
            raise RejectedInputError(f"unknown comparator {self.comparator!r}")
        if self.label < 0:
            raise RejectedInputError("rule label must be >= 0")

    def matches(self, features: np.ndarray) -> bool:
        v = float(features[self.feature_index])
        t = self.threshold
        return {"<": v < t, "<=": v <= t, ">": v > t, ">=": v >= t, "==": v == t}[self.comparator]


def apply_rule(rule: Rule, pool: Sequence[UnlabeledSample], n_classes: int,
               weight: float = 0.5) -> list[LabeledSample]:
    """Weak labels for every pool sample the rule matches.

    Weak labels carry ``weight`` (< 1) in later updates and never consume
    the annotation budget.
    """
    if not (0.0 < weight < 1.0):
        raise RejectedInputError("weak label weight must be in (0, 1)")
    if rule.label >= n_classes:
        raise RejectedInputError(f"rule label {rule.label} out of range for {n_classes} classes")
    if pool and rule.feature_index >= pool[0].features.shape[0]:
        raise RejectedInputError(f"feature_index {rule.feature_index} out of range")
    return [
        LabeledSample(sample_id=s.sample_id, features=s.features, label=rule.label,
                      weight=weight, provenance=PROV_WEAK)
        for s in pool if rule.matches(s.features)
    ]


@dataclass(frozen=True)
class TradeoffPoint:
    cumulative_kg: float
    mean_accuracy: float
    labels_spent: int
    timestamp: int
    model_version: int

    def payload(self) -> dict:
        return {
            "cumulative_kg": self.cumulative_kg,
            "mean_accuracy": self.mean_accuracy,
            "labels_spent": self.labels_spent,
            "timestamp": self.timestamp,
            "model_version": self.model_version,
        }


def pareto_frontier(points: Sequence[TradeoffPoint]) -> list[TradeoffPoint]:
    """Non-dominated points, carbon ascending, earlier timestamp first.

    A point is dominated when some other point emits no more carbon and
    reaches at least its accuracy, with one of the two strict.
    """
    kept = []
    for p in points:
        dominated = any(
            q.cumulative_kg <= p.cumulative_kg and q.mean_accuracy >= p.mean_accuracy
            and (q.cumulative_kg < p.cumulative_kg or q.mean_accuracy > p.mean_accuracy)
            for q in points
        )
        if not dominated:
            kept.append(p)
    return sorted(kept, key=lambda p: (p.cumulative_kg, p.timestamp))


@dataclass(frozen=True)
class ObjectiveReport:
    mean_task_loss: float
    regularizer_value: float
    penalized_objective: float
    constraint_status: Mapping[str, bool]


@dataclass(frozen=True)
class RunConfig:
    """Everything a run needs beyond the stream itself."""

    budgets: BudgetSet
    device: DeviceProfile
    trace: CarbonIntensityTrace
    seed: int = 0
    ensemble_k: int = 5
    architecture: str = "logistic"          # logistic | mlp
    hidden_width: int = 8
    learning_rate: float = 0.5
    epochs: int = 5
    pathway_policy: str = "auto"            # auto | full | shallow
    rehearsal_mix: float = 0.5
    memory_capacity: int = 200
    throttle_base: float = 1.0
    human_available: bool = True
    urgency: float = 0.5
    throttle_params: ThrottleParams = ThrottleParams()
    eval_cadence: int = 1
    round_size: int = 10
    selection: str = "utility"              # utility | info_gain | random
    bootstrap: bool = False
    noise_eta: float = 0.0
    weak_label_weight: float = 0.5
    lookahead: int = 3
    pressure_window: int = 24
    max_corrective: int = 3
    corrective_size: int = 32
    per_task_budget_kg: float | None = None
    rules: tuple[tuple[int | None, Rule], ...] = ()
    query_ttl_slots: int = 24
    pending_window: int = 5
    n_classes: int | None = None
    reg_scale: float = 1.0

    def __post_init__(self):
        if self.ensemble_k < 1:
            raise RejectedInputError("ensemble_k must be >= 1")
        if self.architecture not in ("logistic", "mlp"):
            raise RejectedInputError(f"unknown architecture {self.architecture!r}")
        if self.pathway_policy not in ("auto", "full", "shallow"):
            raise RejectedInputError(f"unknown pathway policy {self.pathway_policy!r}")
        if self.selection not in ("utility", "info_gain", "random"):
            raise RejectedInputError(f"unknown selection strategy {self.selection!r}")
        if not (0.0 <= self.rehearsal_mix <= 1.0):
            raise RejectedInputError("rehearsal_mix must be in [0, 1]")


@dataclass
class TaskOutcome:
    task_id: int
    status: str                 # completed | halted | unattempted
    labels_spent: int = 0
    final_eval_accuracy: float | None = None


@dataclass
class RunResult:
    model: ModelState
    members: tuple[ModelState, ...]
    ledger: CarbonLedger
    curve: tuple[TradeoffPoint, ...]
    events: EventLog
    buffer: ReplayBuffer
    tasks: tuple[TaskOutcome, ...]
    halted: bool
    halt_reason: str
    flags: tuple[str, ...]

    @property
    def labels_spent(self) -> int:
        return sum(t.labels_spent for t in self.tasks)


def _derive_rng(seed: int, stream_id: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(stream_id,)))


class LearningLoop:
    """Mutable engine shared by the simulation runner and the live service.

    Owns the committee, buffer, ledger, clock, and event log; the callers
    decide where labels come from.
    """

    def __init__(self, stream: TaskStream, config: RunConfig):
        if config.architecture == "mlp" and config.hidden_width < 1:
            raise RejectedInputError("mlp needs hidden_width >= 1")
        self.stream = stream
        self.config = config
        self.trace = config.trace
        self.device = config.device
        n_classes = config.n_classes or (stream.n_classes if len(stream) else 2)
        if n_classes < 2:
            raise RejectedInputError("need at least two classes")
        self.n_classes = n_classes
        self.d_in = stream.d_in if len(stream) else 2
        arch = Architecture.LOGISTIC if config.architecture == "logistic" else Architecture.MLP
        hidden = 0 if arch is Architecture.LOGISTIC else config.hidden_width
        self.members: list[ModelState] = [
            init_model(arch, self.d_in, n_classes, hidden,
                       seed=config.seed * 1000 + 100 + i)
            for i in range(config.ensemble_k)
        ]
        self.oracle = Oracle(n_classes, config.noise_eta, seed=config.seed * 1000 + 1)
        self.buffer = ReplayBuffer(config.memory_capacity, seed=config.seed * 1000 + 2)
        self.selection_rng = _derive_rng(config.seed, 3)
        self.bootstrap_rng = _derive_rng(config.seed, 4)
        tag_budgets = {}
        if config.per_task_budget_kg is not None:
            tag_budgets = {f"task{t.task_id}": config.per_task_budget_kg for t in stream.tasks}
        self.ledger = CarbonLedger(budget_epsilon_kg=config.budgets.epsilon_kg,
                                   tag_budgets=tag_budgets)
        self.log = EventLog()
        self.clock = 0
        self.curve: list[TradeoffPoint] = []
        self.eval_sets: dict[int, Batch] = {}
        self.seen_tasks: list[Task] = []
        self.labels_spent: dict[int, int] = {}
        self.update_counter = 0
        self.halted = False
        self.halt_reason = ""
        self.flags: list[str] = []
        self.last_batch: Batch | None = None

    # -- committee -----------------------------------------------------

    @property
    def canonical(self) -> ModelState:
        return self.members[0]

    def ensemble(self) -> Ensemble:
        return Ensemble(members=tuple(self.members))

    def mean_accuracy(self) -> float:
        if not self.seen_tasks:
            return 0.0
        accs = [evaluate(self.canonical, t.eval_batch).accuracy for t in self.seen_tasks]
        return float(np.mean(accs))

    # -- clock / scheduling --------------------------------------------

    def advance_to(self, slot: int) -> None:
        self.clock = self.trace.clamp_slot(max(self.clock, slot))

    def carbon_pressure(self) -> float:
        return carbon.carbon_pressure(self.trace, self.clock, self.config.pressure_window)

    def _permanently_infeasible(self, options: list[tuple[PathwayOption, np.ndarray]]) -> bool:
        """No remaining slot could ever fit this item's cheapest pathway."""
        min_ci = min(self.trace.ci[self.clock:])
        cheapest = min(o.flops for o, _ in options)
        floor = carbon.emission_kg(carbon.energy_kwh(cheapest, self.device), min_ci)
        return self.ledger.cumulative_kg + floor > self.ledger.budget_epsilon_kg

    def _pathway_options(self, batch_size: int) -> list[tuple[PathwayOption, np.ndarray]]:
        cfg = self.config
        model = self.canonical
        full_mask = np.ones(model.weights.shape[0], dtype=bool)
        k = len(self.members)
        full_flops = k * update_flops(model, full_mask, batch_size, cfg.epochs)
        shallow = output_layer_mask(model)
        options: list[tuple[PathwayOption, np.ndarray]] = []
        if cfg.pathway_policy in ("auto", "full") or shallow is None:
            options.append((PathwayOption(Pathway.FULL, full_flops), full_mask))
        if shallow is not None and cfg.pathway_policy in ("auto", "shallow"):
            shallow_flops = k * update_flops(model, shallow, batch_size, cfg.epochs)
            options.append((PathwayOption(Pathway.SHALLOW, shallow_flops), shallow))
        return options

    def _execute_update(self, batch: Batch, mask: np.ndarray) -> tuple[int, int, float, float, int]:
        """Update every committee member; returns version span and losses."""
        cfg = self.config
        version_before = self.canonical.version
        loss_before = loss_after = 0.0
        errors = 0
        new_members = []
        for i, member in enumerate(self.members):
            member_batch = batch
            if cfg.bootstrap and len(batch) > 1:
                idx = self.bootstrap_rng.integers(0, len(batch), size=len(batch))
                member_batch = Batch(samples=tuple(batch.samples[int(j)] for j in idx),
                                     task_id=batch.task_id)
            result = update(member, member_batch,
                            UpdateConfig(learning_rate=cfg.learning_rate, epochs=cfg.epochs,
                                         pathway_mask=mask))
            if result.error is not None:
                errors += 1
            new_members.append(result.model)
            if i == 0:
                loss_before, loss_after = result.loss_before, result.loss_after
        self.members = new_members
        return version_before, self.canonical.version, loss_before, loss_after, errors

    def train_step(self, current: Batch, tag: str, mix: float | None = None,
                   corrective: bool = False) -> str:
        """Schedule, commit, and execute one committee update.

        Returns "committed", "skipped", or "halted". Emission is committed
        to the ledger before any weight moves.
        """
        cfg = self.config
        mix = cfg.rehearsal_mix if mix is None else mix
        if not self.buffer.slots:
            mix = 0.0
        if mix < 1.0:
            size = int(round(len(current) / (1.0 - mix)))
        else:
            size = max(len(current), cfg.corrective_size)
        batch = self.buffer.rehearsal_batch(size=size, mix=mix, current_batch=current)
        self.last_batch = current

        options = self._pathway_options(len(batch))
        item = WorkItem(id=len(self.log), flops=options[0][0].flops,
                        pathway_options=tuple(o for o, _ in options))
        decision = carbon.schedule(item, self.trace, self.clock, self.ledger,
                                   self.device, cfg.lookahead)
        if decision.kind is DecisionKind.SKIP:
            # a budget that was never enough for a single update keeps the run
            # alive (everything skips, audit trail intact); exhaustion after
            # real work, with no future slot that could ever fit, halts cleanly
            if self.ledger.entries and self._permanently_infeasible(options):
                self.halt(HALT_BUDGET, {"cause": "headroom_exhausted",
                                        "headroom_kg": self.ledger.headroom_kg})
                return "halted"
            self.log.append(self.clock, KIND_UPDATE_SKIPPED, {
                "tag": tag, "reason": "no_feasible_slot", "batch_size": len(batch),
                "headroom_kg": self.ledger.headroom_kg,
            })
            return "skipped"
        if decision.kind is DecisionKind.DEFER:
            self.log.append(self.clock, KIND_DEFERRED, {
                "tag": tag, "from_slot": self.clock, "to_slot": decision.slot,
                "pathway": decision.pathway.value, "planned_emission_kg": decision.emission_kg,
            })
            self.advance_to(decision.slot)

        try:
            self.ledger = self.ledger.commit(
                event_id=len(self.log), timestamp=self.clock,
                energy_kwh=decision.energy_kwh, ci=decision.ci, tag=tag,
            )
        except BudgetExceededError as exc:
            if exc.tag is not None:
                # a per-task sub-budget ran dry: skip this update, keep the run
                self.log.append(self.clock, KIND_UPDATE_SKIPPED, {
                    "tag": tag, "reason": "sub_budget_exceeded",
                    "batch_size": len(batch), "overshoot_kg": exc.overshoot_kg,
                })
                return "skipped"
            self.halt(HALT_BUDGET, {"overshoot_kg": exc.overshoot_kg, "tag": tag})
            return "halted"

        mask = next(m for o, m in options if o.label is decision.pathway)
        v0, v1, loss_before, loss_after, errors = self._execute_update(batch, mask)
        by_prov: dict[str, int] = {}
        for s in batch.samples:
            root = s.provenance.split("/", 1)[0]
            by_prov[root] = by_prov.get(root, 0) + 1
        payload = {
            "tag": tag, "pathway": decision.pathway.value, "flops": decision.flops,
            "energy_kwh": decision.energy_kwh, "ci": decision.ci,
            "emitted_kg": decision.emission_kg, "cumulative_kg": self.ledger.cumulative_kg,
            "version_before": v0, "version_after": v1, "batch_size": len(batch),
            "composition": by_prov, "train_loss_before": loss_before,
            "train_loss_after": loss_after, "error_members": errors,
        }
        kind = KIND_CORRECTIVE_UPDATE if corrective else KIND_UPDATE_COMMITTED
        self.log.append(self.clock, kind, payload)
        self.update_counter += 1
        self.record_tradeoff_point()
        return "committed"

    def record_tradeoff_point(self) -> None:
        point = TradeoffPoint(
            cumulative_kg=self.ledger.cumulative_kg,
            mean_accuracy=self.mean_accuracy(),
            labels_spent=sum(self.labels_spent.values()),
            timestamp=self.clock,
            model_version=self.canonical.version,
        )
        self.curve.append(point)
        self.log.append(self.clock, KIND_TRADEOFF_POINT, point.payload())

    def halt(self, reason: str, payload: dict | None = None) -> None:
        self.halted = True
        self.halt_reason = reason
        self.log.append(self.clock, KIND_HALT, {"reason": reason, **(payload or {})})

    # -- forgetting ----------------------------------------------------

    def check_forgetting(self) -> ForgettingReport | None:
        if not self.buffer.per_task_reference:
            return None
        return self.buffer.check_forgetting(self.canonical, self.eval_sets,
                                            self.config.budgets.delta)

    def enforce_forgetting(self) -> None:
        """Corrective rehearsal updates until compliant, else halt flagged."""
        report = self.check_forgetting()
        if report is None or report.ok:
            return
        self.log.append(self.clock, KIND_FORGETTING_VIOLATION, {
            "deltas": {str(k): v for k, v in sorted(report.deltas.items())},
            "worst_delta": report.worst_delta,
            "violations": list(report.violations),
            "margin": report.margin,
        })
        current = self.last_batch
        for attempt in range(self.config.max_corrective):
            if not self.buffer.slots or current is None:
                break
            status = self.train_step(current, tag="corrective", mix=1.0, corrective=True)
            if status != "committed":
                break
            report = self.check_forgetting()
            if report is None or report.ok:
                return
        if not self.halted:
            self.flags.append(HALT_FORGETTING)
            self.halt(HALT_FORGETTING, {"worst_delta": report.worst_delta,
                                        "violations": list(report.violations)})

    def maybe_enforce_forgetting(self) -> None:
        if self.config.eval_cadence > 0 and self.update_counter % self.config.eval_cadence == 0:
            self.enforce_forgetting()

    # -- task lifecycle ------------------------------------------------

    def begin_task(self, task: Task) -> QueryBudget:
        self.advance_to(task.arrival_slot)
        self.seen_tasks.append(task)
        self.labels_spent.setdefault(task.task_id, 0)
        return QueryBudget(b=self.config.budgets.labels_per_task, spent=0,
                           throttle_factor=self.config.throttle_base)

    def complete_task(self, task: Task, collected: Iterable[LabeledSample]) -> None:
        for sample in collected:
            self.buffer.insert(sample, task.task_id, weight=sample.weight)
        loss = evaluate(self.canonical, task.eval_batch).mean_loss
        self.buffer.set_reference(task.task_id, loss, eval_set_id=f"eval-{task.task_id}")
        self.eval_sets[task.task_id] = task.eval_batch


def _select_ids(loop: LearningLoop, pool: list[UnlabeledSample],
                budget: QueryBudget) -> list[int]:
    cfg = loop.config
    if cfg.selection == "random":
        count = acquisition.query_count(budget, len(pool), cfg.round_size)
        if count == 0:
            return []
        ordered = sorted(s.sample_id for s in pool)
        picked = loop.selection_rng.choice(len(ordered), size=count, replace=False)
        return [ordered[int(i)] for i in sorted(picked)]
    return acquisition.select_top_b(
        pool, loop.ensemble(), budget, cfg.budgets.beta,
        use_info_gain=(cfg.selection == "info_gain"), limit=cfg.round_size,
    )


def run(stream: TaskStream, config: RunConfig) -> RunResult:
    """Simulate a full task stream under the configured budgets."""
    loop = LearningLoop(stream, config)
    cfg = config
    outcomes: list[TaskOutcome] = []

    for task in stream.tasks:
        if loop.halted:
            outcomes.append(TaskOutcome(task_id=task.task_id, status="unattempted"))
            continue
        budget = loop.begin_task(task)
        collected: list[LabeledSample] = []
        pool: dict[int, UnlabeledSample] = {s.sample_id: s for s in task.pool}

        if task.seed_batch is not None:
            collected.extend(task.seed_batch.samples)
            loop.train_step(task.seed_batch, tag=f"task{task.task_id}")
            if not loop.halted:
                loop.maybe_enforce_forgetting()

        for scope, rule in cfg.rules:
            if loop.halted or (scope is not None and scope != task.task_id):
                continue
            weak = apply_rule(rule, list(pool.values()), loop.n_classes,
                              weight=cfg.weak_label_weight)
            loop.log.append(loop.clock, KIND_RULE_APPLIED, {
                "task_id": task.task_id, "matched": len(weak),
                "weight": cfg.weak_label_weight,
                "rule": {"feature_index": rule.feature_index, "comparator": rule.comparator,
                         "threshold": rule.threshold, "label": rule.label},
            })
            if weak:
                collected.extend(weak)
                loop.train_step(Batch(samples=tuple(weak), task_id=task.task_id),
                                tag=f"task{task.task_id}")
                if not loop.halted:
                    loop.maybe_enforce_forgetting()

        while not loop.halted and budget.remaining > 0 and pool:
            pressure = loop.carbon_pressure()
            budget = acquisition.throttle(
                budget,
                ThrottleContext(human_available=cfg.human_available, urgency=cfg.urgency,
                                carbon_pressure=pressure),
                base=cfg.throttle_base, params=cfg.throttle_params,
            )
            ids = _select_ids(loop, list(pool.values()), budget)
            if not ids:
                break
            chosen = [pool[i] for i in ids]
            scores = acquisition.score_pool(loop.ensemble(), chosen, cfg.budgets.beta)
            for sample, score in zip(chosen, scores):
                loop.log.append(loop.clock, KIND_QUERY_ISSUED, {
                    "sample_id": sample.sample_id, "task_id": task.task_id,
                    "utility": score.utility, "entropy": score.entropy_term,
                    "variance": score.variance_term, "info_gain": score.info_gain,
                })
            labeled: list[LabeledSample] = []
            for sample in chosen:
                label = loop.oracle.label(sample)
                labeled.append(LabeledSample(sample_id=sample.sample_id,
                                             features=sample.features, label=label,
                                             provenance=PROV_HUMAN))
                del pool[sample.sample_id]
                loop.labels_spent[task.task_id] += 1
                loop.log.append(loop.clock, KIND_LABEL_RECEIVED, {
                    "sample_id": sample.sample_id, "task_id": task.task_id, "label": label,
                    "kind": "label", "spent": loop.labels_spent[task.task_id],
                    "budget": budget.b,
                })
            budget = budget.charge(len(labeled))
            collected.extend(labeled)
            loop.train_step(Batch(samples=tuple(labeled), task_id=task.task_id),
                            tag=f"task{task.task_id}")
            if not loop.halted:
                loop.maybe_enforce_forgetting()

        if loop.halted:
            outcomes.append(TaskOutcome(task_id=task.task_id, status="halted",
                                        labels_spent=loop.labels_spent[task.task_id]))
            continue
        loop.complete_task(task, collected)
        outcomes.append(TaskOutcome(
            task_id=task.task_id, status="completed",
            labels_spent=loop.labels_spent[task.task_id],
            final_eval_accuracy=evaluate(loop.canonical, task.eval_batch).accuracy,
        ))

    if not loop.halted:
        loop.halt(HALT_COMPLETE, {"tasks_completed": sum(1 for o in outcomes
                                                         if o.status == "completed")})
        loop.halted = False  # a completed stream is not an abnormal halt

    return RunResult(
        model=loop.canonical, members=tuple(loop.members), ledger=loop.ledger,
        curve=tuple(loop.curve), events=loop.log, buffer=loop.buffer,
        tasks=tuple(outcomes), halted=loop.halted, halt_reason=loop.halt_reason,
        flags=tuple(loop.flags),
    )


def objective(model: ModelState, seen_tasks: Sequence[Task], config: RunConfig, *,
              ledger: CarbonLedger | None = None,
              labels_spent: Mapping[int, int] | None = None,
              forgetting: ForgettingReport | None = None) -> ObjectiveReport:
    """Penalized objective over seen tasks plus constraint flags."""
    if not seen_tasks:
        raise RejectedInputError("objective needs at least one seen task")
    losses = [evaluate(model, t.eval_batch).mean_loss for t in seen_tasks]
    mean_loss = float(np.mean(losses))
    reg = regularizer(model, scale=config.reg_scale)
    b = config.budgets.labels_per_task
    status = {
        "carbon_ok": True if ledger is None else ledger.cumulative_kg <= ledger.budget_epsilon_kg,
        "label_ok": True if labels_spent is None else all(v <= b for v in labels_spent.values()),
        "forgetting_ok": True if forgetting is None else forgetting.ok,
    }
    return ObjectiveReport(
        mean_task_loss=mean_loss, regularizer_value=reg,
        penalized_objective=mean_loss + config.budgets.lam * reg,
        constraint_status=status,
    )
