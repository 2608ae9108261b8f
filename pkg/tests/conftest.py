"""Shared fixtures: the bundled corpus, config writers, SSE parsing."""

from __future__ import annotations

import json
import re
from datetime import date, datetime, timezone
from pathlib import Path

import pytest

from grantforge.corpus import SourceDescriptor, SourceKind, load_sources, validate
from grantforge.gateway import ScriptedGateway
from grantforge.index import UnifiedIndex
from grantforge.ingest import FixtureFetcher, run_source

CORPUS_DIR = Path(__file__).resolve().parent / "fixtures" / "corpus"

FIXED_NOW = datetime(2026, 8, 10, 12, 0, 0, tzinfo=timezone.utc)
FIXED_TODAY = date(2026, 8, 10)


def fixed_clock() -> datetime:
    return FIXED_NOW


@pytest.fixture(scope="session")
def ground_truth() -> dict:
    with open(CORPUS_DIR / "ground_truth.json", encoding="utf-8") as fh:
        return json.load(fh)


@pytest.fixture()
def corpus_gateway() -> ScriptedGateway:
    return ScriptedGateway.from_file(CORPUS_DIR / "gateway.json")


@pytest.fixture()
def corpus_fetcher() -> FixtureFetcher:
    return FixtureFetcher(CORPUS_DIR / "pages", clock=fixed_clock)


def build_corpus_index(gateway: ScriptedGateway | None = None) -> UnifiedIndex:
    """Fresh index holding the whole bundled corpus (in-process ingest)."""
    gateway = gateway or ScriptedGateway.from_file(CORPUS_DIR / "gateway.json")
    fetcher = FixtureFetcher(CORPUS_DIR / "pages", clock=fixed_clock)
    index = UnifiedIndex()
    for source in load_sources(CORPUS_DIR / "sources.json"):
        run_source(source, fetcher, gateway, index, clock=fixed_clock)
    return index


@pytest.fixture()
def corpus_index() -> UnifiedIndex:
    return build_corpus_index()


def write_corpus_config(tmp_path: Path, **overrides) -> Path:
    """Config file pointing at the bundled corpus, snapshot under tmp_path."""
    config = {
        "snapshot": str(tmp_path / "index"),
        "sources": str(CORPUS_DIR / "sources.json"),
        "fetcher": "fixture",
        "fixture_root": str(CORPUS_DIR / "pages"),
        "gateway": {"mode": "scripted", "script_path": str(CORPUS_DIR / "gateway.json")},
        "web_search": {"mode": "fixture", "fixture_path": str(CORPUS_DIR / "web.json")},
        "scheduler": {"enabled": False},
    }
    config.update(overrides)
    path = tmp_path / "config.json"
    path.write_text(json.dumps(config, indent=2), encoding="utf-8")
    return path


def make_source(source_id="src", kind=SourceKind.FIXTURE, root="https://example.org/", agency="NSF", **kw):
    return SourceDescriptor(source_id=source_id, kind=kind, root=root, agency_label=agency, **kw)


def make_opportunity(
    title="Ocean AI Institute",
    url="https://a.gov/x",
    description="",
    end_date: str | None = None,
    amount: str | None = None,
    agency="NSF",
    kind=SourceKind.FEDERAL_PORTAL,
):
    draft = {"title": title, "url": url, "description": description}
    if end_date:
        draft["end_date"] = end_date
    if amount:
        draft["funding_amount"] = amount
    source = make_source(agency=agency, kind=kind)
    return validate(draft, source, fetched_at=FIXED_NOW)


_FRAME_RE = re.compile(r"event: (?P<kind>[a-z_]+)\ndata: (?P<data>.*?)\n\n", re.DOTALL)


def parse_sse(raw: str) -> list[tuple[str, dict]]:
    """Split an SSE body into (event-kind, payload) pairs, in wire order."""
    frames = []
    for m in _FRAME_RE.finditer(raw):
        frames.append((m.group("kind"), json.loads(m.group("data"))))
    return frames
