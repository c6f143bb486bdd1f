"""Command-line surface.

Exit codes: 0 success, 1 validation or run failure, 2 usage errors
(argparse's convention).
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .config import load_config
from .eda.fixtures import (
    DEFAULT_PATHS,
    DEFAULT_SEED,
    generate_fixture_set,
    parse_manifest,
    render_score_report,
    score_trace,
    write_fixture_set,
)
from .engine import run, run_baseline
from .errors import ConfigError, EngineError, MarcoError
from .graph import export_dot


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="marco", description="Graph-based task solving framework")
    sub = parser.add_subparsers(dest="command", required=True)

    p_validate = sub.add_parser("validate", help="check a run config and report every problem")
    p_validate.add_argument("config")

    p_run = sub.add_parser("run", help="execute a configured task graph")
    p_run.add_argument("config")
    p_run.add_argument("--backend", help="run every role against this configured backend")
    p_run.add_argument("--trace-out", help="write the trace document to this path")
    p_run.add_argument("--deterministic", action="store_true", help="sorted frontier order, zeroed timings")
    p_run.add_argument("--baseline", action="store_true", help="collapse the graph into one node first")

    p_graph = sub.add_parser("graph", help="graph inspection commands")
    graph_sub = p_graph.add_subparsers(dest="graph_command", required=True)
    p_export = graph_sub.add_parser("export", help="render the configured graph as DOT")
    p_export.add_argument("config")
    p_export.add_argument("--dot", required=True, help="output path, '-' for stdout")

    p_fixtures = sub.add_parser("fixtures", help="synthetic timing fixture commands")
    fixtures_sub = p_fixtures.add_subparsers(dest="fixtures_command", required=True)
    p_gen = fixtures_sub.add_parser("gen", help="generate a seeded multi-corner fixture set")
    p_gen.add_argument("--corners", type=int, default=3)
    p_gen.add_argument("--paths", type=int, default=DEFAULT_PATHS)
    p_gen.add_argument("--seed", type=int, default=DEFAULT_SEED)
    p_gen.add_argument("--out", required=True)

    p_score = sub.add_parser("score", help="compare a trace's recovered anomalies against a manifest")
    p_score.add_argument("trace")
    p_score.add_argument("manifest")
    return parser


def _cmd_validate(args: argparse.Namespace) -> int:
    try:
        config = load_config(args.config)
    except ConfigError as exc:
        for problem in exc.problems:
            print(f"invalid: {problem}", file=sys.stderr)
        return 1
    print(f"ok: {len(config.graph.nodes)} node(s), {len(config.agents)} agent(s), mode={config.graph.mode}")
    return 0


def _cmd_run(args: argparse.Namespace) -> int:
    try:
        config = load_config(args.config)
    except ConfigError as exc:
        for problem in exc.problems:
            print(f"invalid: {problem}", file=sys.stderr)
        return 1
    runner = run_baseline if args.baseline else run
    try:
        trace = runner(config, backend_override=args.backend, deterministic=args.deterministic)
    except EngineError as exc:
        print(f"error: {exc.code}: {exc}", file=sys.stderr)
        if args.trace_out and exc.trace is not None:
            exc.trace.write(args.trace_out)
            print(f"partial trace written to {args.trace_out}", file=sys.stderr)
        return 1
    except MarcoError as exc:
        print(f"error: {exc.code}: {exc}", file=sys.stderr)
        return 1
    for outcome in trace.outcomes:
        print(f"{outcome['node_id']}: {outcome['status']} (turns={outcome['turns_used']})")
    print(f"status: {trace.status}")
    if args.trace_out:
        trace.write(args.trace_out)
        print(f"trace written to {args.trace_out}")
    return 0


def _cmd_graph_export(args: argparse.Namespace) -> int:
    try:
        config = load_config(args.config)
    except ConfigError as exc:
        for problem in exc.problems:
            print(f"invalid: {problem}", file=sys.stderr)
        return 1
    dot = export_dot(config.graph)
    if args.dot == "-":
        sys.stdout.write(dot)
    else:
        Path(args.dot).write_text(dot, encoding="utf-8")
        print(f"dot written to {args.dot}")
    return 0


def _cmd_fixtures_gen(args: argparse.Namespace) -> int:
    try:
        fixture_set = generate_fixture_set(args.seed, corners=args.corners, paths=args.paths)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    written = write_fixture_set(fixture_set, args.out)
    for path in written:
        print(f"wrote {path}")
    return 0


def _cmd_score(args: argparse.Namespace) -> int:
    try:
        trace = json.loads(Path(args.trace).read_text(encoding="utf-8"))
        manifest = parse_manifest(Path(args.manifest).read_text(encoding="utf-8"))
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    if not isinstance(trace, dict):
        print("error: trace root must be a JSON object", file=sys.stderr)
        return 1
    result = score_trace(trace, manifest)
    sys.stdout.write(render_score_report(result))
    return 0


def main(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    if args.command == "validate":
        return _cmd_validate(args)
    if args.command == "run":
        return _cmd_run(args)
    if args.command == "graph":
        return _cmd_graph_export(args)
    if args.command == "fixtures":
        return _cmd_fixtures_gen(args)
    return _cmd_score(args)


if __name__ == "__main__":
    raise SystemExit(main())
