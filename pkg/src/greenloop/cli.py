"""Command-line entry point.

  greenloop run    --config PATH --out DIR [--seed N]...
  greenloop serve  --config PATH --port P [--out DIR] [--static DIR]
  greenloop report --run DIR --out PATH

Exit codes are a stable contract: 0 for success (including a clean
budget halt), 2 for usage or config problems, 3 for runtime data errors
(corrupt logs, malformed traces or streams). HAI_LOG_LEVEL selects the
log level (error, warn, info, debug).
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path

from .errors import ConfigError, CorruptLogError, GreenloopError, RejectedInputError, TraceParseError

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3

_LOG_LEVELS = {"error": logging.ERROR, "warn": logging.WARNING,
               "info": logging.INFO, "debug": logging.DEBUG}


def _setup_logging() -> None:
    level = os.environ.get("HAI_LOG_LEVEL", "warn").lower()
    if level not in _LOG_LEVELS:
        print(f"warning: unknown HAI_LOG_LEVEL {level!r}, using warn", file=sys.stderr)
        level = "warn"
    logging.basicConfig(level=_LOG_LEVELS[level],
                        format="%(asctime)s %(levelname)s %(name)s: %(message)s")


def cmd_run(args: argparse.Namespace) -> int:
    from .carbon import ledger_to_csv
    from .checkpoint import save_run_checkpoint
    from .config import load_config
    from .orchestrator import run
    from .report import write_tradeoff_csv

    config = load_config(args.config)
    stream = config.load_stream()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    seeds = args.seed if args.seed else config.seeds
    for seed in seeds:
        result = run(stream, config.run_config(seed))
        seed_dir = out / f"seed_{seed}"
        seed_dir.mkdir(parents=True, exist_ok=True)
        result.events.write(seed_dir / "events.ndjson")
        ledger_to_csv(result.ledger, seed_dir / "ledger.csv")
        write_tradeoff_csv(result.curve, seed_dir / "tradeoff.csv")
        save_run_checkpoint(result.model, result.buffer, seed_dir / "checkpoint.bin")
        status = result.halt_reason or "completed"
        print(f"seed {seed}: {status}, {len(result.curve)} updates, "
              f"{result.labels_spent} labels, "
              f"{result.ledger.cumulative_kg:.6g}/{result.ledger.budget_epsilon_kg:.6g} kg")
    return EXIT_OK


def cmd_serve(args: argparse.Namespace) -> int:
    import uvicorn

    from .config import load_config
    from .service import LiveSession, create_app

    config = load_config(args.config)
    if config.mode != "live":
        raise ConfigError(f"{args.config}: serve requires mode = \"live\"")
    stream = config.load_stream()
    seed = args.seed[0] if args.seed else config.seeds[0]
    session = LiveSession(stream, config.run_config(seed))
    static_dir = args.static
    if static_dir is None:
        default_static = Path(__file__).resolve().parents[2] / "frontend" / "dist"
        static_dir = default_static if default_static.is_dir() else None
    app = create_app(session, static_dir=static_dir)
    out = Path(args.out)
    try:
        uvicorn.run(app, host=args.host, port=args.port, log_level="warning")
    finally:
        session.flush(out)
    return EXIT_OK


def cmd_report(args: argparse.Namespace) -> int:
    from .report import generate_report

    paths = generate_report(args.run, args.out)
    print(f"frontier: {paths.frontier_csv}")
    print(f"summary:  {paths.summary_txt}")
    for fig in paths.figures:
        print(f"figure:   {fig}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="greenloop",
                                     description="carbon-budgeted lifelong learning runs")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="simulate a task stream")
    p_run.add_argument("--config", required=True, help="TOML config path")
    p_run.add_argument("--out", required=True, help="output directory")
    p_run.add_argument("--seed", type=int, action="append",
                       help="run seed (repeatable; overrides config seeds)")
    p_run.set_defaults(func=cmd_run)

    p_serve = sub.add_parser("serve", help="serve the live labeling API")
    p_serve.add_argument("--config", required=True, help="TOML config path (mode = live)")
    p_serve.add_argument("--port", type=int, required=True)
    p_serve.add_argument("--host", default="127.0.0.1")
    p_serve.add_argument("--out", default="runs/live", help="artifact directory on shutdown")
    p_serve.add_argument("--seed", type=int, action="append")
    p_serve.add_argument("--static", default=None, help="static assets directory for the UI")
    p_serve.set_defaults(func=cmd_serve)

    p_report = sub.add_parser("report", help="frontier, summary, and figures for a run")
    p_report.add_argument("--run", required=True, help="run directory (from `greenloop run`)")
    p_report.add_argument("--out", required=True, help="report output directory")
    p_report.set_defaults(func=cmd_report)
    return parser


def main(argv: list[str] | None = None) -> int:
    _setup_logging()
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (CorruptLogError, TraceParseError, RejectedInputError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except FileNotFoundError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except GreenloopError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
