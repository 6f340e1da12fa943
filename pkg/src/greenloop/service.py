"""Live human-feedback service: pending queries out, labels and rules in.

All mutations serialize through one lock owned by the session; reads are
snapshot-consistent. The learning loop never waits on a human: labels
integrate at the submit boundary, queries past their TTL expire back into
the pool, and duplicate submissions are idempotent no-ops.

HTTP surface (all under /v1): see the committed OpenAPI file in api/.
Errors use machine-readable ``{"code": ..., "message": ...}`` bodies with
404 for unknown ids, 409 for terminal conflicts, 422 for validation.
"""

import logging
import threading
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Literal

import numpy as np

from . import acquisition
from .acquisition import QueryBudget, ThrottleContext
from .errors import RejectedInputError
from .events import KIND_LABEL_RECEIVED, KIND_QUERY_ISSUED, KIND_RULE_APPLIED
from .learner import Architecture, Batch, ModelState
from .orchestrator import LearningLoop, Rule, RunConfig, apply_rule
from .samples import PROV_HUMAN, LabeledSample, UnlabeledSample
from .streams import TaskStream

logger = logging.getLogger(__name__)

STATE_OPEN = "open"
STATE_ANSWERED = "answered"
STATE_SKIPPED = "skipped"
STATE_EXPIRED = "expired"

FEEDBACK_KINDS = ("label", "correction", "confirmation", "skip")


class UnknownQueryError(KeyError):
    pass


class TerminalConflictError(Exception):
    pass


@dataclass
class PendingQuery:
    """One query card: the sample, the scores, and the model's view of it."""

    query_id: str
    sample_id: int
    task_id: int
    features: list[float]
    utility: float
    entropy_term: float
    variance_term: float
    info_gain: float
    prediction: list[float]
    predicted_class: int
    confidence: float
    explanation: list[float]
    issued_slot: int
    state: str = STATE_OPEN
    terminal_kind: str | None = None
    terminal_value: int | None = None

    def public(self) -> dict:
        d = asdict(self)
        d.pop("terminal_kind")
        d.pop("terminal_value")
        return d


def explanation_vector(model: ModelState, x: np.ndarray, cls: int) -> np.ndarray:
    """Per-feature contribution to the predicted class's logit.

    Exact (w_c * x elementwise) for the logistic head; gradient-times-input
    at the current point for the MLP.
    """
    if model.architecture is Architecture.LOGISTIC:
        W, _ = model.unpack()
        return W[cls] * x
    W1, b1, W2, _ = model.unpack()
    h = np.tanh(W1 @ x + b1)
    grad = (W2[cls] * (1.0 - h * h)) @ W1
    return grad * x


@dataclass
class SubmitResult:
    result: Literal["answered", "noop", "skipped"]
    model_version: int
    labels_spent: int


class LiveSession:
    """Serves one task stream to human annotators through the HTTP API."""

    def __init__(self, stream: TaskStream, config: RunConfig,
                 clock: Callable[[], int] | None = None):
        if not len(stream):
            raise RejectedInputError("live session needs a non-empty stream")
        self.loop = LearningLoop(stream, config)
        self.config = config
        self._lock = threading.RLock()
        self._start = time.monotonic()
        self._clock = clock
        self._query_counter = 0
        self.pending: dict[str, PendingQuery] = {}
        self._task_index = 0
        self._budget: QueryBudget = self.loop.begin_task(stream.tasks[0])
        self._pool: dict[int, UnlabeledSample] = {s.sample_id: s for s in stream.tasks[0].pool}
        self._declined: set[int] = set()
        self._collected: list[LabeledSample] = []
        self.complete = False
        if stream.tasks[0].seed_batch is not None:
            self._collected.extend(stream.tasks[0].seed_batch.samples)
            self.loop.train_step(stream.tasks[0].seed_batch, tag="task%d" % stream.tasks[0].task_id)
        self._refill()

    # -- clock -----------------------------------------------------------

    def now_slot(self) -> int:
        if self._clock is not None:
            slot = self._clock()
        else:
            elapsed = time.monotonic() - self._start
            slot = int(elapsed // self.loop.trace.slot_duration_s)
        return self.loop.trace.clamp_slot(slot)

    @property
    def task(self):
        return self.loop.stream.tasks[self._task_index]

    # -- query lifecycle ---------------------------------------------------

    def _next_query_id(self) -> str:
        self._query_counter += 1
        return f"q{self._query_counter:06d}"

    def _expire_stale(self) -> None:
        now = self.now_slot()
        ttl = self.config.query_ttl_slots
        for q in self.pending.values():
            if q.state == STATE_OPEN and now - q.issued_slot >= ttl:
                q.state = STATE_EXPIRED  # sample stays in the pool, eligible again

    def _refill(self) -> None:
        if self.complete or self.loop.halted:
            return
        open_ids = {q.sample_id for q in self.pending.values() if q.state == STATE_OPEN}
        want = self.config.pending_window - len(open_ids)
        if want <= 0 or self._budget.remaining <= len(open_ids):
            return
        self.loop.advance_to(self.now_slot())
        pressure = self.loop.carbon_pressure()
        self._budget = acquisition.throttle(
            self._budget,
            ThrottleContext(human_available=self.config.human_available,
                            urgency=self.config.urgency, carbon_pressure=pressure),
            base=self.config.throttle_base, params=self.config.throttle_params,
        )
        candidates = [s for s in self._pool.values()
                      if s.sample_id not in open_ids and s.sample_id not in self._declined]
        ids = acquisition.select_top_b(candidates, self.loop.ensemble(), self._budget,
                                       self.config.budgets.beta, limit=want)
        ensemble = self.loop.ensemble()
        for sid in ids:
            sample = self._pool[sid]
            score = acquisition.utility(ensemble, sample.features,
                                        self.config.budgets.beta, sample_id=sid)
            probs = ensemble.mean_proba(sample.features[None, :])[0]
            cls = int(np.argmax(probs))
            expl = explanation_vector(self.loop.canonical, sample.features, cls)
            query = PendingQuery(
                query_id=self._next_query_id(), sample_id=sid, task_id=self.task.task_id,
                features=[float(v) for v in sample.features],
                utility=score.utility, entropy_term=score.entropy_term,
                variance_term=score.variance_term, info_gain=score.info_gain,
                prediction=[float(p) for p in probs], predicted_class=cls,
                confidence=float(probs[cls]),
                explanation=[float(v) for v in expl],
                issued_slot=self.now_slot(),
            )
            self.pending[query.query_id] = query
            self.loop.log.append(self.now_slot(), KIND_QUERY_ISSUED, {
                "query_id": query.query_id, "sample_id": sid, "task_id": query.task_id,
                "utility": query.utility, "entropy": query.entropy_term,
                "variance": query.variance_term, "info_gain": query.info_gain,
            })

    def list_pending(self) -> list[PendingQuery]:
        with self._lock:
            self._expire_stale()
            self._refill()
            open_queries = [q for q in self.pending.values() if q.state == STATE_OPEN]
            return sorted(open_queries, key=lambda q: (-q.utility, q.query_id))

    # -- feedback ----------------------------------------------------------

    def submit(self, query_id: str, kind: str, value: int | None) -> SubmitResult:
        with self._lock:
            self._expire_stale()
            if kind not in FEEDBACK_KINDS:
                raise RejectedInputError(f"unknown feedback kind {kind!r}")
            query = self.pending.get(query_id)
            if query is None:
                raise UnknownQueryError(query_id)
            if query.state == STATE_EXPIRED:
                raise TerminalConflictError(f"query {query_id} expired")
            if query.state != STATE_OPEN:
                if query.terminal_kind == kind and query.terminal_value == value:
                    return SubmitResult("noop", self.loop.canonical.version,
                                        self._spent_current())
                raise TerminalConflictError(
                    f"query {query_id} already {query.state} by {query.terminal_kind}")

            if kind == "skip":
                query.state = STATE_SKIPPED
                query.terminal_kind, query.terminal_value = kind, None
                self._declined.add(query.sample_id)
                self._refill()
                return SubmitResult("skipped", self.loop.canonical.version,
                                    self._spent_current())

            if kind == "confirmation":
                label = query.predicted_class
            else:
                if value is None:
                    raise RejectedInputError("label value required")
                if not (0 <= value < self.loop.n_classes):
                    raise RejectedInputError(
                        f"label {value} out of range for {self.loop.n_classes} classes")
                label = int(value)

            query.state = STATE_ANSWERED
            query.terminal_kind, query.terminal_value = kind, value
            self._integrate_label(query, label, kind)
            return SubmitResult("answered", self.loop.canonical.version,
                                self._spent_current())

    def _spent_current(self) -> int:
        return self.loop.labels_spent.get(self.task.task_id, 0)

    def _integrate_label(self, query: PendingQuery, label: int, kind: str) -> None:
        sample = self._pool.pop(query.sample_id)
        labeled = LabeledSample(sample_id=sample.sample_id, features=sample.features,
                                label=label, provenance=PROV_HUMAN)
        self._budget = self._budget.charge(1)
        self.loop.labels_spent[self.task.task_id] = self._spent_current() + 1
        self.loop.log.append(self.now_slot(), KIND_LABEL_RECEIVED, {
            "query_id": query.query_id, "sample_id": sample.sample_id,
            "task_id": self.task.task_id, "label": label, "kind": kind,
            "spent": self._spent_current(), "budget": self._budget.b,
        })
        self._collected.append(labeled)
        self.loop.advance_to(self.now_slot())
        self.loop.train_step(Batch(samples=(labeled,), task_id=self.task.task_id),
                             tag=f"task{self.task.task_id}")
        if not self.loop.halted:
            self.loop.maybe_enforce_forgetting()
        if self.loop.halted:
            self.complete = True
        elif self._budget.remaining == 0 or not self._pool:
            self._advance_task()
        self._refill()

    def _advance_task(self) -> None:
        self.loop.complete_task(self.task, self._collected)
        for q in self.pending.values():
            if q.state == STATE_OPEN:
                q.state = STATE_EXPIRED
        if self._task_index + 1 >= len(self.loop.stream.tasks):
            self.complete = True
            return
        self._task_index += 1
        task = self.task
        self._budget = self.loop.begin_task(task)
        self._pool = {s.sample_id: s for s in task.pool}
        self._declined = set()
        self._collected = []
        if task.seed_batch is not None:
            self._collected.extend(task.seed_batch.samples)
            self.loop.train_step(task.seed_batch, tag=f"task{task.task_id}")

    def submit_rule(self, rule: Rule) -> dict:
        with self._lock:
            weak = apply_rule(rule, list(self._pool.values()), self.loop.n_classes,
                              weight=self.config.weak_label_weight)
            self.loop.log.append(self.now_slot(), KIND_RULE_APPLIED, {
                "task_id": self.task.task_id, "matched": len(weak),
                "weight": self.config.weak_label_weight,
                "rule": {"feature_index": rule.feature_index, "comparator": rule.comparator,
                         "threshold": rule.threshold, "label": rule.label},
            })
            version = self.loop.canonical.version
            if weak:
                self._collected.extend(weak)
                self.loop.advance_to(self.now_slot())
                self.loop.train_step(Batch(samples=tuple(weak), task_id=self.task.task_id),
                                     tag=f"task{self.task.task_id}")
                version = self.loop.canonical.version
            return {"matched": len(weak), "model_version": version}

    # -- snapshots -----------------------------------------------------------

    def status(self) -> dict:
        with self._lock:
            loop = self.loop
            forgetting = loop.check_forgetting()
            return {
                "carbon": {"used_kg": loop.ledger.cumulative_kg,
                           "budget_kg": loop.ledger.budget_epsilon_kg},
                "labels": {str(tid): {"spent": spent,
                                      "budget": self.config.budgets.labels_per_task}
                           for tid, spent in sorted(loop.labels_spent.items())},
                "model_version": loop.canonical.version,
                "accuracy_history": [
                    {"timestamp": p.timestamp, "mean_accuracy": p.mean_accuracy}
                    for p in loop.curve
                ],
                "forgetting": None if forgetting is None else {
                    "deltas": {str(k): v for k, v in sorted(forgetting.deltas.items())},
                    "worst_delta": forgetting.worst_delta,
                    "violations": list(forgetting.violations),
                    "margin": forgetting.margin,
                },
                "throttle_factor": self._budget.throttle_factor,
                "current_task_id": self.task.task_id,
                "session_complete": self.complete,
                "halted": loop.halted,
                "halt_reason": loop.halt_reason,
            }

    def tradeoff(self) -> list[dict]:
        with self._lock:
            return [p.payload() for p in self.loop.curve]

    def flush(self, out_dir: str | Path) -> None:
        """Write run artifacts (event log, ledger, curve) to disk."""
        from .carbon import ledger_to_csv
        from .report import write_tradeoff_csv

        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        with self._lock:
            self.loop.log.write(out / "events.ndjson")
            ledger_to_csv(self.loop.ledger, out / "ledger.csv")
            write_tradeoff_csv(self.loop.curve, out / "tradeoff.csv")
        logger.info("flushed live session artifacts to %s", out)


def create_app(session: LiveSession, static_dir: str | Path | None = None):
    """FastAPI app exposing the /v1 surface (plus optional static assets)."""
    from fastapi import FastAPI, Request
    from fastapi.exceptions import RequestValidationError
    from fastapi.responses import JSONResponse
    from pydantic import BaseModel

    app = FastAPI(title="greenloop HITL service", version="1.0.0")

    class FeedbackIn(BaseModel):
        kind: Literal["label", "correction", "confirmation", "skip"]
        value: int | None = None

    class RuleIn(BaseModel):
        feature_index: int
        comparator: str
        threshold: float
        label: int

    def error(status: int, code: str, message: str) -> JSONResponse:
        return JSONResponse(status_code=status, content={"code": code, "message": message})

    @app.exception_handler(RequestValidationError)
    async def _validation_handler(request: Request, exc: RequestValidationError):
        return error(422, "validation_error", str(exc.errors()))

    @app.get("/v1/queries/pending")
    def pending() -> list[dict]:
        return [q.public() for q in session.list_pending()]

    @app.post("/v1/queries/{query_id}/feedback")
    def feedback(query_id: str, body: FeedbackIn):
        try:
            result = session.submit(query_id, body.kind, body.value)
        except UnknownQueryError:
            return error(404, "unknown_query", f"no query with id {query_id!r}")
        except TerminalConflictError as exc:
            return error(409, "terminal_conflict", str(exc))
        except RejectedInputError as exc:
            return error(422, "validation_error", str(exc))
        return {"status": "ok", "result": result.result,
                "model_version": result.model_version,
                "labels_spent": result.labels_spent}

    @app.post("/v1/rules")
    def rules(body: RuleIn):
        try:
            rule = Rule(feature_index=body.feature_index, comparator=body.comparator,
                        threshold=body.threshold, label=body.label)
            outcome = session.submit_rule(rule)
        except RejectedInputError as exc:
            return error(422, "validation_error", str(exc))
        return {"status": "ok", **outcome}

    @app.get("/v1/status")
    def status() -> dict:
        return session.status()

    @app.get("/v1/tradeoff")
    def tradeoff() -> list[dict]:
        return session.tradeoff()

    if static_dir is not None and Path(static_dir).is_dir():
        from fastapi.staticfiles import StaticFiles

        app.mount("/", StaticFiles(directory=str(static_dir), html=True), name="ui")
    return app
