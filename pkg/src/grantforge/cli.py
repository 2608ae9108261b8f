"""Operator command line: ingest, query, stats, serve.

Exit codes are stable: 0 success, 1 configuration or IO error, 2 pipeline
error. All results go to stdout, diagnostics to stderr. Each command loads
the snapshot fresh and saves it back when it mutated the index, so the CLI
composes with a separately running service that owns its own live index.
"""

from __future__ import annotations

import argparse
import json
import sys
from datetime import date, datetime, timezone

from .config import AppConfig, load_config, resolve_config_path
from .index import SearchFilters
from .ingest import PipelineError, due_for_refresh, run_source
from .runtime import Runtime, build_runtime

__all__ = ["main"]

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_PIPELINE = 2


def _fail(message: str) -> int:
    print(f"error: {message}", file=sys.stderr)
    return EXIT_CONFIG


def _load(config_path: str | None) -> tuple[AppConfig, Runtime]:
    path = resolve_config_path(config_path)
    config = load_config(path)
    return config, build_runtime(config)


def cmd_ingest(args: argparse.Namespace) -> int:
    try:
        config, runtime = _load(args.config)
    except (OSError, ValueError) as exc:
        return _fail(str(exc))
    if not runtime.sources:
        return _fail("no sources configured")
    if runtime.fetcher is None:
        return _fail("no fetcher configured (set fetcher/fixture_root in the config)")

    selected = runtime.sources
    if args.source:
        selected = [s for s in runtime.sources if s.source_id == args.source]
        if not selected:
            return _fail(f"unknown source id: {args.source}")

    now = datetime.now(timezone.utc)
    had_pipeline_error = False
    for source in selected:
        if not args.force and not due_for_refresh(source, now):
            print(f"{source.source_id}: skipped (not due)")
            continue
        try:
            report = run_source(source, runtime.fetcher, runtime.gateway, runtime.index)
        except PipelineError as exc:
            had_pipeline_error = True
            print(f"error: {exc}", file=sys.stderr)
            continue
        print(report.summary_line())
        for warning in report.warnings:
            print(f"  warning: {warning}", file=sys.stderr)

    try:
        runtime.save_snapshot()
        runtime.save_source_state()
    except OSError as exc:
        return _fail(f"cannot save snapshot: {exc}")
    return EXIT_PIPELINE if had_pipeline_error else EXIT_OK


def cmd_query(args: argparse.Namespace) -> int:
    try:
        config, runtime = _load(args.config)
    except (OSError, ValueError) as exc:
        return _fail(str(exc))
    if len(runtime.index) == 0 and not runtime.index.snapshot_exists(config.snapshot_path):
        return _fail(f"snapshot not found at {config.snapshot_path}")

    filters = SearchFilters()
    if args.min_deadline:
        try:
            filters = SearchFilters(min_end_date=date.fromisoformat(args.min_deadline))
        except ValueError:
            return _fail(f"--min-deadline must be ISO format (YYYY-MM-DD): {args.min_deadline}")

    hits = runtime.index.search(args.query, filters, args.limit)
    if args.json:
        for hit in hits:
            record = {
                "id": hit.id,
                "score": round(hit.score, 6),
                "title": hit.opportunity.title,
                "agency": hit.opportunity.agency,
                "end_date": hit.opportunity.end_date.isoformat() if hit.opportunity.end_date else None,
                "url": hit.opportunity.url,
            }
            print(json.dumps(record, ensure_ascii=False, separators=(",", ":")))
        return EXIT_OK
    if not hits:
        print("no results")
        return EXIT_OK
    for rank, hit in enumerate(hits, start=1):
        deadline = hit.opportunity.end_date.isoformat() if hit.opportunity.end_date else "-"
        print(
            f"{rank:>2}. [{hit.score:8.4f}] {hit.opportunity.title}  "
            f"({hit.opportunity.agency}, due {deadline})  {hit.opportunity.url}"
        )
    return EXIT_OK


def cmd_stats(args: argparse.Namespace) -> int:
    try:
        config, runtime = _load(args.config)
    except (OSError, ValueError) as exc:
        return _fail(str(exc))
    if not runtime.index.snapshot_exists(config.snapshot_path):
        return _fail(f"snapshot not found at {config.snapshot_path}")
    stats = runtime.index.stats()
    print(f"doc_count: {stats.doc_count}")
    for agency, count in stats.per_agency_counts.items():
        print(f"  {agency}: {count}")
    return EXIT_OK


def cmd_serve(args: argparse.Namespace) -> int:
    try:
        config, runtime = _load(args.config)
    except (OSError, ValueError) as exc:
        return _fail(str(exc))
    import uvicorn

    from .service import create_app

    app = create_app(runtime)
    port = args.port if args.port is not None else config.port
    try:
        uvicorn.run(app, host="127.0.0.1", port=port, log_level="warning")
    except (OSError, SystemExit) as exc:
        if isinstance(exc, SystemExit) and not exc.code:
            return EXIT_OK
        return _fail(f"cannot serve on port {port}: {exc}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="grantforge", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_ingest = sub.add_parser("ingest", help="run ingestion for every due source")
    p_ingest.add_argument("--config", help="path to the JSON config file")
    p_ingest.add_argument("--source", help="only this source id")
    p_ingest.add_argument("--force", action="store_true", help="ignore the refresh schedule")
    p_ingest.set_defaults(func=cmd_ingest)

    p_query = sub.add_parser("query", help="search the snapshot index")
    p_query.add_argument("--config", help="path to the JSON config file")
    p_query.add_argument("query", help="keyword query text")
    p_query.add_argument("--min-deadline", help="only opportunities due on/after this date")
    p_query.add_argument("--limit", type=int, default=10)
    p_query.add_argument("--json", action="store_true", help="JSONL output")
    p_query.set_defaults(func=cmd_query)

    p_stats = sub.add_parser("stats", help="per-agency corpus counts")
    p_stats.add_argument("--config", help="path to the JSON config file")
    p_stats.set_defaults(func=cmd_stats)

    p_serve = sub.add_parser("serve", help="run the HTTP service")
    p_serve.add_argument("--config", help="path to the JSON config file")
    p_serve.add_argument("--port", type=int, help="override the configured port")
    p_serve.set_defaults(func=cmd_serve)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    code = args.func(args)
    if argv is None:
        sys.exit(code)
    return code
