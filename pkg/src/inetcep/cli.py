"""Command line entry points.

Exit codes follow the usual batch convention: 0 success, 1 bad input
(scenario problems, unreadable files), 2 rejected queries and internal
faults. The seed resolution order is --seed flag, INETCEP_SEED env var,
scenario file value.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from . import ingest, oracle, report
from .query import QueryError, ast_to_dict, parse_query, validate
from .sim import ScenarioError, Simulation, load_scenario
from .topology import build_topology


def _env_seed() -> int | None:
    raw = os.environ.get("INETCEP_SEED")
    if raw is None:
        return None
    try:
        return int(raw)
    except ValueError:
        raise ScenarioError(f"INETCEP_SEED must be an integer, not {raw!r}")


def cmd_run(args: argparse.Namespace) -> int:
    try:
        seed = args.seed if args.seed is not None else _env_seed()
        scenario = load_scenario(args.scenario, seed_override=seed)
        if args.mode is not None:
            scenario.mode = args.mode
        sim = Simulation(scenario)
        sim.run()
    except (ScenarioError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # noqa: BLE001 - surfaced as exit code per contract
        print(f"internal error: {exc!r}", file=sys.stderr)
        return 2
    for path in report.write_report(sim, args.out):
        print(path)
    return 0


def cmd_parse(args: argparse.Namespace) -> int:
    try:
        ast = parse_query(args.query)
    except QueryError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    diags = validate(ast)
    if diags:
        for d in diags:
            print(f"{d.code} at {d.position}: {d.message}", file=sys.stderr)
        return 2
    print(json.dumps(ast_to_dict(ast), indent=2, sort_keys=True))
    return 0


def cmd_oracle(args: argparse.Namespace) -> int:
    try:
        ast = parse_query(args.query)
        diags = validate(ast)
        if diags:
            for d in diags:
                print(f"{d.code} at {d.position}: {d.message}", file=sys.stderr)
            return 2
        traces = {}
        for item in args.trace:
            source, _, path = item.partition("=")
            if not path:
                print(f"error: --trace wants SOURCE=path, got {item!r}", file=sys.stderr)
                return 1
            batch, warnings = ingest.load_csv(path, args.schema, args.ts_unit)
            for w in warnings:
                print(f"warning: {path}: {w}", file=sys.stderr)
            traces[source] = batch
        missing = [s for s in ast.sources if s not in traces]
        if missing:
            print(f"error: no trace given for {', '.join(missing)}", file=sys.stderr)
            return 1
    except (ingest.SchemaMismatch, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    events = oracle.ground_truth(args.query, traces)
    out = [
        {"qname": ce.qname, "ts": ce.ts, "kind": ce.kind, "value": ce.value}
        for ce in events
    ]
    print(json.dumps(out, indent=2, sort_keys=True))
    return 0


def cmd_topo(args: argparse.Namespace) -> int:
    try:
        topo = build_topology(args.kind)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    out = {
        "kind": topo.kind,
        "nodes": {n: topo.roles[n] for n in topo.nodes()},
        "links": [
            {"a": l.a, "b": l.b, "delay_us": l.delay_us, "bandwidth_pps": l.bandwidth}
            for l in topo.links
        ],
    }
    print(json.dumps(out, indent=2, sort_keys=True))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="inetcep",
        description="Pull/push content-centric networking with in-network query processing.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run a scenario file and write report files")
    p.add_argument("--scenario", required=True, help="TOML or JSON scenario file")
    p.add_argument("--out", default="out", help="output directory (default: out)")
    p.add_argument("--seed", type=int, default=None, help="override the scenario seed")
    p.add_argument("--mode", choices=("ucl", "pr"), default=None, help="override the mode")
    p.set_defaults(fn=cmd_run)

    p = sub.add_parser("parse", help="parse a query and print its AST as JSON")
    p.add_argument("query")
    p.set_defaults(fn=cmd_parse)

    p = sub.add_parser("oracle", help="ground-truth complex events for a trace")
    p.add_argument("query")
    p.add_argument(
        "--trace", action="append", required=True, metavar="SOURCE=PATH",
        help="event CSV for one source (repeatable)",
    )
    p.add_argument("--schema", choices=sorted(ingest.SCHEMAS), default="gps")
    p.add_argument("--ts-unit", choices=("us", "ms", "s"), default="ms")
    p.set_defaults(fn=cmd_oracle)

    p = sub.add_parser("topo", help="print a built-in topology as JSON")
    p.add_argument("kind", choices=("line", "tree", "manhattan"))
    p.set_defaults(fn=cmd_topo)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.fn(args)


if __name__ == "__main__":
    sys.exit(main())
