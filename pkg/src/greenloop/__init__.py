"""Carbon-budgeted lifelong learning with human-in-the-loop labeling.

A small-model learning system that adapts over task streams while
enforcing a hard emission budget, a per-task annotation budget, and a
forgetting margin. Queries for labels flow through an HTTP service and a
dashboard; every update is scheduled against a grid carbon-intensity
trace and logged to an append-only event log.
"""

__version__ = "0.1.0"

from .acquisition import Ensemble, QueryBudget, ThrottleContext, entropy, select_top_b, throttle, utility
from .carbon import (CarbonIntensityTrace, CarbonLedger, Decision, DecisionKind, DeviceProfile,
                     WorkItem, carbon_pressure, emission_kg, energy_kwh, schedule)
from .learner import (Architecture, Batch, LossReport, ModelState, UpdateConfig, UpdateResult,
                      evaluate, init_model, meta_init, predict_proba, regularizer, update)
from .memory import ForgettingReport, ReplayBuffer
from .orchestrator import (BudgetSet, ObjectiveReport, Rule, RunConfig, RunResult, TradeoffPoint,
                           apply_rule, objective, pareto_frontier, run)
from .samples import LabeledSample, UnlabeledSample
from .streams import Oracle, Task, TaskStream

__all__ = [
    "Architecture", "Batch", "BudgetSet", "CarbonIntensityTrace", "CarbonLedger",
    "Decision", "DecisionKind", "DeviceProfile", "Ensemble", "ForgettingReport",
    "LabeledSample", "LossReport", "ModelState", "ObjectiveReport", "Oracle",
    "QueryBudget", "ReplayBuffer", "Rule", "RunConfig", "RunResult", "Task",
    "TaskStream", "ThrottleContext", "TradeoffPoint", "UnlabeledSample",
    "UpdateConfig", "UpdateResult", "WorkItem", "apply_rule", "carbon_pressure",
    "emission_kg", "energy_kwh", "entropy", "evaluate", "init_model", "meta_init",
    "objective", "pareto_frontier", "predict_proba", "regularizer", "run",
    "schedule", "select_top_b", "throttle", "update", "utility",
]
