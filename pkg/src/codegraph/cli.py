"""Command-line tool: index repositories, inspect snapshots, query, chat, serve.

Exit codes: 0 success, 1 usage error, 2 runtime error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

from .agent import (
    AgentConfig,
    BackendError,
    ConfigError,
    HttpChatBackend,
    ProtocolError,
    ScriptedChatBackend,
    Session,
    send_message,
)
from .graph_store import SnapshotError, load_snapshot, save_snapshot
from .indexer import IndexConfig, IndexingError, index_repository
from .query_engine import ExecutionCaps, QueryError, execute, parse_query, render_result
from .service import ServiceState, create_app

DEFAULT_SNAPSHOT_DIR = "codegraph_snapshot"


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):  # argparse would sys.exit(2); we want exit 1
        raise UsageError(message)


def _build_parser() -> _Parser:
    parser = _Parser(prog="codegraph", description=__doc__)
    sub = parser.add_subparsers(dest="command", metavar="command")

    p_index = sub.add_parser("index", help="index a repository into a snapshot")
    p_index.add_argument("path", help="repository root")
    p_index.add_argument("--out", default=DEFAULT_SNAPSHOT_DIR, help="snapshot directory")
    p_index.add_argument("--exclude", action="append", default=[], metavar="GLOB")
    p_index.add_argument("--include", action="append", default=[], metavar="GLOB")
    p_index.add_argument("--exclude-tests", action="store_true")
    p_index.add_argument("--follow-symlinks", action="store_true")
    p_index.add_argument("--max-files", type=int, default=50_000)

    p_stats = sub.add_parser("stats", help="print snapshot statistics")
    p_stats.add_argument("snapshot")

    p_query = sub.add_parser("query", help="run a graph query against a snapshot")
    p_query.add_argument("snapshot")
    p_query.add_argument("cypher")
    p_query.add_argument("--limit", type=int, default=None)

    p_chat = sub.add_parser("chat", help="interactive agent REPL over a snapshot")
    p_chat.add_argument("snapshot")
    p_chat.add_argument("--preset", default="chat")
    p_chat.add_argument("--strategy", choices=["single", "multiple"], default=None)
    p_chat.add_argument("--max-rounds", type=int, default=5)
    p_chat.add_argument(
        "--scripted", metavar="FILE", default=None,
        help="JSON file with canned backend replies (deterministic runs)",
    )

    p_serve = sub.add_parser("serve", help="serve snapshots over HTTP")
    p_serve.add_argument("snapshots", nargs="+")
    p_serve.add_argument("--host", default="127.0.0.1")
    p_serve.add_argument("--port", type=int, default=8745)
    p_serve.add_argument("--ui-dir", default=None, help="static web console assets")
    p_serve.add_argument("--audit-dir", default=None, help="session audit logs (JSONL)")
    p_serve.add_argument("--scripted", metavar="FILE", default=None)

    return parser


def cli_dispatch(argv: list[str]) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        parser.print_usage(sys.stderr)
        return 1
    if not args.command:
        parser.print_help(sys.stderr)
        return 1
    handler = {
        "index": _cmd_index,
        "stats": _cmd_stats,
        "query": _cmd_query,
        "chat": _cmd_chat,
        "serve": _cmd_serve,
    }[args.command]
    try:
        return handler(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (IndexingError, SnapshotError, BackendError, ProtocolError, ConfigError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


def _cmd_index(args) -> int:
    config = IndexConfig(
        include_globs=tuple(args.include) or ("*.py",),
        exclude_globs=tuple(args.exclude),
        exclude_tests=args.exclude_tests,
        follow_symlinks=args.follow_symlinks,
        max_files=args.max_files,
    )
    graph, report = index_repository(args.path, config)
    save_snapshot(graph, args.out)
    print(report.summary())
    print(f"snapshot written to {args.out}")
    return 0


def _cmd_stats(args) -> int:
    handle = load_snapshot(args.snapshot)
    print(f"repo_root: {handle.repo_root}")
    print(f"files: {len(handle.file_hashes)}")
    for label, count in sorted(handle.node_counts().items()):
        print(f"  {label}: {count}")
    for edge_type, count in sorted(handle.edge_counts().items()):
        print(f"  {edge_type}: {count}")
    return 0


def _cmd_query(args) -> int:
    handle = load_snapshot(args.snapshot)
    try:
        ast = parse_query(args.cypher)
    except QueryError as exc:
        print(f"query error (line {exc.line}, column {exc.column}): {exc}", file=sys.stderr)
        return 2
    caps = ExecutionCaps()
    if args.limit:
        caps.max_rows = min(caps.max_rows, args.limit)
    table = execute(ast, handle, caps)
    print(render_result(table))
    return 0


def _load_backend(scripted_path: str | None):
    if scripted_path:
        with open(scripted_path, "r", encoding="utf-8") as fh:
            return ScriptedChatBackend(json.load(fh))
    return HttpChatBackend.from_env(os.environ)


def _cmd_chat(args) -> int:
    handle = load_snapshot(args.snapshot)
    backend = _load_backend(args.scripted)
    if backend is None:
        raise UsageError(
            "no chat backend: set CODEGRAPH_BASE_URL and CODEGRAPH_MODEL "
            "(and CODEGRAPH_API_KEY), or pass --scripted FILE"
        )
    config = AgentConfig(
        app_preset=args.preset,
        strategy=args.strategy,
        max_rounds=args.max_rounds,
        temperature=HttpChatBackend.temperature_from_env(os.environ),
    )
    session: Session | None = None
    interactive = sys.stdin.isatty()
    if interactive:
        print(f"codegraph chat ({args.preset}, {config.effective_strategy()} queries). ^D to exit.")
    while True:
        if interactive:
            print("> ", end="", flush=True)
        line = sys.stdin.readline()
        if not line:
            break
        text = line.strip()
        if not text:
            continue
        if session is None:
            session = Session.new(text, config)
        answer = send_message(session, text, handle, backend, config)
        print(answer)
        for query in session.issued_queries:
            print(f"  [{query.status}] {query.nl_query} -> {query.graph_query}")
    return 0


def _cmd_serve(args) -> int:
    state = ServiceState(audit_dir=args.audit_dir)
    state.backend = _load_backend(args.scripted)
    for snapshot_dir in args.snapshots:
        repo_id = os.path.basename(os.path.normpath(snapshot_dir)) or "repo"
        base, n = repo_id, 2
        while repo_id in state.repos:
            repo_id = f"{base}-{n}"
            n += 1
        state.add_repo(repo_id, load_snapshot(snapshot_dir))
        print(f"loaded {snapshot_dir} as {repo_id!r}")
    app = create_app(state, ui_dir=args.ui_dir)

    import uvicorn

    uvicorn.run(app, host=args.host, port=args.port, log_level="warning")
    return 0


def main() -> None:
    sys.exit(cli_dispatch(sys.argv[1:]))


if __name__ == "__main__":
    main()
