"""Command line front end.

Exit codes: 0 success, 1 operational failure, 2 unreadable root or bad
configuration, 3 missing, stale, or corrupt index.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import engine
from .config import AppConfig, load_config
from .errors import (
    CodeScoutError,
    ConfigError,
    IndexCorrupt,
    IndexMissing,
    RootNotFound,
    StaleIndex,
)
from .navigator import trace_to_json

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_BAD_ROOT = 2
EXIT_BAD_INDEX = 3


def _add_common(parser: argparse.ArgumentParser, with_stale: bool = True) -> None:
    parser.add_argument("root", help="repository root directory")
    parser.add_argument("--config", help="path to a JSON configuration file")
    parser.add_argument("--index-dir", help="index location (default: ROOT/.codescout)")
    if with_stale:
        parser.add_argument(
            "--allow-stale",
            action="store_true",
            help="use the index even when the tree has changed since indexing",
        )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="codescout",
        description="Index a repository and assemble focused context for questions about it.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_index = sub.add_parser("index", help="scan and index a repository")
    _add_common(p_index, with_stale=False)

    p_locate = sub.add_parser("locate", help="scout the repository and rank likely files")
    _add_common(p_locate)
    p_locate.add_argument("query", help="natural language question or task")
    p_locate.add_argument("--scripted", help="path to a scripted reasoner response file")
    p_locate.add_argument("--top-k", type=int, help="print at most this many ranked files")
    p_locate.add_argument("--trace", help="write the session trace as JSON to this path")
    p_locate.add_argument("--json", action="store_true", help="print the result as JSON")

    p_query = sub.add_parser("query", help="hybrid retrieval only, no scouting loop")
    _add_common(p_query)
    p_query.add_argument("query", help="search text")
    p_query.add_argument("--top-k", type=int, help="number of hits to return")
    p_query.add_argument("--json", action="store_true", help="print hits as JSON")

    p_answer = sub.add_parser("answer", help="locate context and ask the reasoner to answer")
    _add_common(p_answer)
    p_answer.add_argument("query", help="natural language question")
    p_answer.add_argument("--scripted", help="path to a scripted reasoner response file")
    p_answer.add_argument("--trace", help="write the session trace as JSON to this path")
    p_answer.add_argument("--json", action="store_true", help="print the full payload as JSON")

    p_stats = sub.add_parser("stats", help="summarize an indexed repository")
    _add_common(p_stats)
    p_stats.add_argument("--json", action="store_true", help="print stats as JSON")

    p_serve = sub.add_parser("serve", help="serve the engine over HTTP")
    _add_common(p_serve)
    p_serve.add_argument("--host", default="127.0.0.1")
    p_serve.add_argument("--port", type=int, default=8765)
    p_serve.add_argument("--scripted", help="path to a scripted reasoner response file")

    return parser


def _load_workspace(args, config: AppConfig) -> engine.Workspace:
    return engine.load_workspace(
        args.root,
        config,
        index_dir=args.index_dir,
        allow_stale=getattr(args, "allow_stale", False),
    )


def _write_trace(path: str, payload: dict) -> None:
    Path(path).write_text(trace_to_json(payload["trace"]), encoding="utf-8")


def cli_index(args, config: AppConfig) -> int:
    manifest = engine.build_index(args.root, config, index_dir=args.index_dir)
    print(
        f"indexed {manifest['file_count']} files, {manifest['unit_count']} units "
        f"(snapshot {manifest['snapshot_hash'][:12]})"
    )
    if manifest["degraded"]:
        print("warning: embedding provider unavailable; sparse retrieval only")
    return EXIT_OK


def cli_locate(args, config: AppConfig) -> int:
    workspace = _load_workspace(args, config)
    backend = engine.make_backend(config, args.scripted)
    payload = engine.locate(workspace, args.query, backend, config, top_k=args.top_k)
    if args.trace:
        _write_trace(args.trace, payload)
    if args.json:
        print(json.dumps(engine.locate_view(payload), indent=2, sort_keys=True))
        return EXIT_OK
    print(f"query: {payload['query']}")
    print(
        f"terminal: {payload['terminal_reason']}  rounds: {payload['rounds']}  "
        f"confidence: {payload['confidence']:.1f}  budget: {payload['budget']}"
    )
    for rank, entry in enumerate(payload["files"], start=1):
        print(f"{rank:>3}  {entry['score']:.4f}  {entry['path']}")
    pack = payload["pack"]
    print(f"pack: {len(pack['units'])} units, {pack['total_lines']} lines (budget {pack['budget']})")
    for unit in pack["units"]:
        marker = " [truncated]" if unit["truncated"] else ""
        print(f"  {unit['unit']}  {unit['span'][0]}-{unit['span'][1]} ({unit['lines']} lines){marker}")
    if pack["omitted"]:
        print(f"omitted: {len(pack['omitted'])} candidates over budget")
    return EXIT_OK


def cli_query(args, config: AppConfig) -> int:
    workspace = _load_workspace(args, config)
    hits = engine.retrieval_only(workspace, args.query, config, args.top_k)
    if args.json:
        print(json.dumps(hits, indent=2))
    else:
        for hit in hits:
            print(f"{hit['rank']:>3}  {hit['rel']:.4f}  {hit['unit']}")
    return EXIT_OK


def cli_answer(args, config: AppConfig) -> int:
    workspace = _load_workspace(args, config)
    backend = engine.make_backend(config, args.scripted)
    payload = engine.answer(workspace, args.query, backend, config)
    if args.trace:
        _write_trace(args.trace, payload)
    if args.json:
        print(json.dumps(payload, indent=2, sort_keys=True))
    else:
        print(payload["answer"])
    return EXIT_OK


def cli_stats(args, config: AppConfig) -> int:
    workspace = _load_workspace(args, config)
    stats = engine.workspace_stats(workspace)
    if args.json:
        print(json.dumps(stats, indent=2, sort_keys=True))
    else:
        for key, value in sorted(stats.items()):
            print(f"{key}: {value}")
    return EXIT_OK


def cli_serve(args, config: AppConfig) -> int:
    from .service import serve

    backend = engine.make_backend(config, args.scripted)
    serve(
        args.root,
        config,
        backend,
        host=args.host,
        port=args.port,
        index_dir=args.index_dir,
        allow_stale=args.allow_stale,
    )
    return EXIT_OK


_COMMANDS = {
    "index": cli_index,
    "locate": cli_locate,
    "query": cli_query,
    "answer": cli_answer,
    "stats": cli_stats,
    "serve": cli_serve,
}


def run(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        config = load_config(args.config)
        return _COMMANDS[args.command](args, config)
    except RootNotFound as exc:
        print(f"error: root not readable: {exc}", file=sys.stderr)
        return EXIT_BAD_ROOT
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_BAD_ROOT
    except (IndexMissing, StaleIndex, IndexCorrupt) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_BAD_INDEX
    except CodeScoutError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_FAILURE


def main() -> None:
    sys.exit(run())
