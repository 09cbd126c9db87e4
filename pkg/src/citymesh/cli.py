"""Command-line entry points.

    citymesh run   <scenario> [--seed N] [--report table|rows] [--out FILE]
                   [--trace FILE] [--record DIR]
    citymesh serve <scenario> [--port P] [--speed X] [--seed N] [--console DIR]
    citymesh check <scenario>

Exit codes: 0 success, 2 scenario problems, 1 runtime errors.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path

from .core import CityMeshError
from .engine import Engine, render_trace, snapshot_json
from .httpapi import ConsoleServer
from .metrics import render_report
from .scenario import Scenario, ScenarioParseError, load_scenario


def _load(path: str, seed: int | None) -> Scenario:
    scenario = load_scenario(path)
    if seed is not None:
        scenario = replace(scenario, seed=seed)
    return scenario


def cmd_run(args: argparse.Namespace) -> int:
    scenario = _load(args.scenario, args.seed)
    engine = Engine(scenario)
    if args.record:
        record_dir = Path(args.record)
        record_dir.mkdir(parents=True, exist_ok=True)
        (record_dir / "initial.json").write_text(snapshot_json(engine.snapshot()) + "\n")
    report, trace = engine.run()
    text = render_report(report, args.report)
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    if args.trace:
        Path(args.trace).write_text(render_trace(trace))
    if args.record:
        (record_dir / "events.jsonl").write_text(render_trace(trace))
        (record_dir / "final.json").write_text(snapshot_json(engine.snapshot()) + "\n")
    return 0


def cmd_serve(args: argparse.Namespace) -> int:
    scenario = _load(args.scenario, args.seed)
    engine = Engine(scenario)
    console_dir = args.console
    if console_dir is None:
        default = Path("frontend") / "dist"
        if (default / "index.html").is_file():
            console_dir = default
    server = ConsoleServer(
        engine, port=args.port, speed=args.speed, console_dir=console_dir
    )
    where = f"http://127.0.0.1:{server.port}"
    print(f"serving {args.scenario} at {where} (speed x{args.speed:g})", file=sys.stderr)
    if console_dir:
        print(f"console bundle: {console_dir}", file=sys.stderr)
    try:
        server.run()
    except KeyboardInterrupt:
        server.stop()
    return 0


def cmd_check(args: argparse.Namespace) -> int:
    scenario = _load(args.scenario, None)
    summary = {
        "lights": len(scenario.lights),
        "devices": len(scenario.devices),
        "center": scenario.has_center,
        "links": len(scenario.links),
        "events": len(scenario.events),
        "duration_ms": scenario.duration_ms,
        "seed": scenario.seed,
    }
    print(json.dumps(summary, sort_keys=True))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="citymesh",
        description="Resilient smart-city communication simulator",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="execute a scenario headless")
    run.add_argument("scenario")
    run.add_argument("--seed", type=int, default=None)
    run.add_argument("--report", choices=("table", "rows"), default="table")
    run.add_argument("--out", default=None, help="write the report here instead of stdout")
    run.add_argument("--trace", default=None, help="write the event trace (JSON lines)")
    run.add_argument(
        "--record",
        default=None,
        help="write console-replay fixtures (initial.json, events.jsonl, final.json)",
    )
    run.set_defaults(func=cmd_run)

    serve = sub.add_parser("serve", help="run paced in real time and expose the console API")
    serve.add_argument("scenario")
    serve.add_argument("--port", type=int, default=8127)
    serve.add_argument("--speed", type=float, default=1.0)
    serve.add_argument("--seed", type=int, default=None)
    serve.add_argument("--console", default=None, help="static console bundle directory")
    serve.set_defaults(func=cmd_serve)

    check = sub.add_parser("check", help="validate a scenario file without running it")
    check.add_argument("scenario")
    check.set_defaults(func=cmd_check)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ScenarioParseError as exc:
        print(f"scenario error: {exc}", file=sys.stderr)
        return 2
    except FileNotFoundError as exc:
        print(f"cannot read scenario: {exc}", file=sys.stderr)
        return 2
    except CityMeshError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    raise SystemExit(main())
