"""TOML run configuration.

Keys (sections flat, all optional unless noted):

  seeds = [0]                      # list of run seeds
  mode = "simulate"                # simulate | live

  [budgets]   epsilon_kg (required), labels_per_task, delta, per_task_kg
  [objective] lambda
  [acquisition] beta, ensemble_k, strategy, round_size, bootstrap
  [scheduler] lookahead, pressure_window
  [device]    power_draw_kw, flops_per_second, idle_overhead_factor
  [trace]     path | (constant_ci, slots), slot_duration_s
  [stream]    path (required for the CLI)
  [memory]    capacity, mix, eval_cadence, max_corrective, corrective_size
  [learner]   architecture, hidden_width, learning_rate, epochs, pathway_policy
  [throttle]  base, human_available, urgency
  [oracle]    noise_eta
  [hitl]      query_ttl_slots, pending_window, weak_label_weight
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import tomli

from .carbon import CarbonIntensityTrace, DeviceProfile, parse_trace_csv
from .errors import ConfigError, TraceParseError
from .orchestrator import BudgetSet, RunConfig
from .streams import TaskStream, load_stream_dir


@dataclass
class AppConfig:
    """Parsed config file plus everything needed to build per-seed runs."""

    seeds: list[int]
    mode: str
    stream_path: Path | None
    run_template: RunConfig
    source: Path

    def run_config(self, seed: int) -> RunConfig:
        from dataclasses import replace

        return replace(self.run_template, seed=seed)

    def load_stream(self) -> TaskStream:
        if self.stream_path is None:
            raise ConfigError(f"{self.source}: [stream] path is required to run")
        return load_stream_dir(self.stream_path)


def _section(data: dict, name: str) -> dict:
    value = data.get(name, {})
    if not isinstance(value, dict):
        raise ConfigError(f"[{name}] must be a table")
    return value


def load_config(path: str | Path) -> AppConfig:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    try:
        with open(path, "rb") as fh:
            data = tomli.load(fh)
    except tomli.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from None

    budgets = _section(data, "budgets")
    if "epsilon_kg" not in budgets:
        raise ConfigError(f"{path}: budgets.epsilon_kg is required")
    objective = _section(data, "objective")
    acq = _section(data, "acquisition")
    sched = _section(data, "scheduler")
    device_cfg = _section(data, "device")
    trace_cfg = _section(data, "trace")
    stream_cfg = _section(data, "stream")
    mem = _section(data, "memory")
    learner = _section(data, "learner")
    thr = _section(data, "throttle")
    oracle = _section(data, "oracle")
    hitl = _section(data, "hitl")

    try:
        budget_set = BudgetSet(
            epsilon_kg=float(budgets["epsilon_kg"]),
            labels_per_task=int(budgets.get("labels_per_task", 20)),
            delta=float(budgets.get("delta", 0.25)),
            lam=float(objective.get("lambda", 0.0)),
            beta=float(acq.get("beta", 1.0)),
        )
        device = DeviceProfile(
            power_draw_kw=float(device_cfg.get("power_draw_kw", 0.3)),
            flops_per_second=float(device_cfg.get("flops_per_second", 1e9)),
            idle_overhead_factor=float(device_cfg.get("idle_overhead_factor", 1.0)),
        )
        duration = float(trace_cfg.get("slot_duration_s", 3600.0))
        if "path" in trace_cfg:
            trace_path = Path(trace_cfg["path"])
            if not trace_path.is_absolute():
                trace_path = path.parent / trace_path
            if not trace_path.exists():
                raise ConfigError(f"{path}: trace file not found: {trace_path}")
            trace = parse_trace_csv(trace_path, slot_duration_s=duration)
        else:
            trace = CarbonIntensityTrace.from_values(
                [float(trace_cfg.get("constant_ci", 0.4))] * int(trace_cfg.get("slots", 168)),
                slot_duration_s=duration,
            )
        template = RunConfig(
            budgets=budget_set,
            device=device,
            trace=trace,
            ensemble_k=int(acq.get("ensemble_k", 5)),
            selection=str(acq.get("strategy", "utility")),
            round_size=int(acq.get("round_size", 10)),
            bootstrap=bool(acq.get("bootstrap", False)),
            lookahead=int(sched.get("lookahead", 3)),
            pressure_window=int(sched.get("pressure_window", 24)),
            memory_capacity=int(mem.get("capacity", 200)),
            rehearsal_mix=float(mem.get("mix", 0.5)),
            eval_cadence=int(mem.get("eval_cadence", 1)),
            max_corrective=int(mem.get("max_corrective", 3)),
            corrective_size=int(mem.get("corrective_size", 32)),
            architecture=str(learner.get("architecture", "logistic")),
            hidden_width=int(learner.get("hidden_width", 8)),
            learning_rate=float(learner.get("learning_rate", 0.5)),
            epochs=int(learner.get("epochs", 5)),
            pathway_policy=str(learner.get("pathway_policy", "auto")),
            throttle_base=float(thr.get("base", 1.0)),
            human_available=bool(thr.get("human_available", True)),
            urgency=float(thr.get("urgency", 0.5)),
            noise_eta=float(oracle.get("noise_eta", 0.0)),
            weak_label_weight=float(hitl.get("weak_label_weight", 0.5)),
            query_ttl_slots=int(hitl.get("query_ttl_slots", 24)),
            pending_window=int(hitl.get("pending_window", 5)),
            per_task_budget_kg=(float(budgets["per_task_kg"])
                                if "per_task_kg" in budgets else None),
        )
    except (ConfigError, TraceParseError):
        raise
    except (ValueError, TypeError, KeyError) as exc:
        raise ConfigError(f"{path}: invalid value: {exc}") from exc

    seeds = data.get("seeds", [0])
    if not isinstance(seeds, list) or not seeds or not all(isinstance(s, int) for s in seeds):
        raise ConfigError(f"{path}: seeds must be a non-empty list of integers")
    mode = str(data.get("mode", "simulate"))
    if mode not in ("simulate", "live"):
        raise ConfigError(f"{path}: mode must be simulate or live")

    stream_path = None
    if "path" in stream_cfg:
        stream_path = Path(stream_cfg["path"])
        if not stream_path.is_absolute():
            stream_path = path.parent / stream_path

    return AppConfig(seeds=list(seeds), mode=mode, stream_path=stream_path,
                     run_template=template, source=path)
