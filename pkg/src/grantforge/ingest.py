"""Aggregation pipeline: fetch configured sources, extract records, upsert.

Federal-portal and fixture sources are a flat list of opportunity pages; a
foundation source is crawled from its domain root (breadth-first, depth 2,
max 200 URLs) and the gateway ranks the ten pages most likely to carry grant
information. Extraction goes through the gateway's field-extraction purpose;
per-page failures become warnings or rejection counts, never abort a run.

Refresh cadence is 14 days per source by default; the scheduler is a plain
polling loop that re-ingests whatever is due each tick.
"""

from __future__ import annotations

import logging
import re
import threading
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Callable, Protocol
from urllib.parse import quote, unquote, urljoin, urlsplit

from .corpus import SourceDescriptor, SourceKind, ValidationError, validate
from .gateway import (
    Gateway,
    GatewayError,
    request_field_extraction,
    request_url_ranking,
)
from .index import INSERTED, UPDATED, UnifiedIndex

__all__ = [
    "PageFetch",
    "IngestReport",
    "FetchError",
    "ExtractError",
    "PipelineError",
    "Fetcher",
    "FixtureFetcher",
    "HttpFetcher",
    "enumerate_candidate_urls",
    "select_grant_pages",
    "extract_record",
    "run_source",
    "due_for_refresh",
    "RefreshScheduler",
    "CRAWL_DEPTH",
    "CRAWL_MAX_URLS",
    "MAX_GRANT_PAGES",
]

logger = logging.getLogger(__name__)

CRAWL_DEPTH = 2
CRAWL_MAX_URLS = 200
MAX_GRANT_PAGES = 10
GRANT_URL_KEYWORDS = ("grant", "funding", "award", "apply", "rfp")

_HREF_RE = re.compile(r"""href\s*=\s*["']([^"'#]+)["']""", re.IGNORECASE)


class FetchError(Exception):
    pass


class PipelineError(Exception):
    pass


class ExtractError(Exception):
    UNPARSEABLE_REPLY = "UnparseableReply"

    def __init__(self, reason: str = UNPARSEABLE_REPLY, detail: str = ""):
        self.reason = reason
        super().__init__(f"{reason}: {detail}" if detail else reason)


@dataclass(frozen=True)
class PageFetch:
    url: str
    body: str
    retrieved_at: datetime
    ok: bool

    def __post_init__(self) -> None:
        if not self.ok and self.body:
            raise ValueError("failed fetch must carry an empty body")


@dataclass
class IngestReport:
    source_id: str
    pages_seen: int = 0
    records_extracted: int = 0
    records_rejected: int = 0
    records_new: int = 0
    records_updated: int = 0
    records_unchanged: int = 0
    warnings: list[str] = field(default_factory=list)

    def check(self) -> None:
        assert self.records_extracted == (
            self.records_new + self.records_updated + self.records_unchanged
        )

    def summary_line(self) -> str:
        return (
            f"{self.source_id}: pages_seen={self.pages_seen} "
            f"extracted={self.records_extracted} rejected={self.records_rejected} "
            f"new={self.records_new} updated={self.records_updated} "
            f"unchanged={self.records_unchanged} warnings={len(self.warnings)}"
        )


class Fetcher(Protocol):
    def fetch(self, url: str) -> PageFetch: ...

    def links(self, url: str) -> list[str]: ...

    def pages_for(self, source: SourceDescriptor) -> list[str]: ...


def _utcnow() -> datetime:
    return datetime.now(timezone.utc)


class FixtureFetcher:
    """Serves pages from a fixture directory tree.

    Layout: one subdirectory per source_id, one file per URL with the URL
    percent-encoded as its filename, plus an optional ``links.json`` giving
    the out-link adjacency used by foundation enumeration.
    """

    def __init__(self, root_dir: str | Path, clock: Callable[[], datetime] = _utcnow):
        self.root_dir = Path(root_dir)
        self.clock = clock
        if not self.root_dir.is_dir():
            raise FetchError(f"fixture root {self.root_dir} is not a directory")
        self._files: dict[str, Path] = {}
        self._links: dict[str, list[str]] = {}
        self._by_source: dict[str, list[str]] = {}
        import json

        for source_dir in sorted(p for p in self.root_dir.iterdir() if p.is_dir()):
            urls: list[str] = []
            for entry in sorted(source_dir.iterdir()):
                if entry.name == "links.json":
                    with open(entry, "r", encoding="utf-8") as fh:
                        self._links.update(json.load(fh))
                    continue
                if entry.is_file():
                    url = unquote(entry.name)
                    self._files[url] = entry
                    urls.append(url)
            self._by_source[source_dir.name] = sorted(urls)

    @staticmethod
    def filename_for(url: str) -> str:
        return quote(url, safe="")

    def fetch(self, url: str) -> PageFetch:
        path = self._files.get(url)
        if path is None:
            return PageFetch(url=url, body="", retrieved_at=self.clock(), ok=False)
        return PageFetch(
            url=url,
            body=path.read_text(encoding="utf-8"),
            retrieved_at=self.clock(),
            ok=True,
        )

    def links(self, url: str) -> list[str]:
        return list(self._links.get(url, []))

    def pages_for(self, source: SourceDescriptor) -> list[str]:
        return list(self._by_source.get(source.source_id, []))


class HttpFetcher:
    """Plain HTTP GET with a timeout; link discovery parses hrefs from HTML."""

    def __init__(self, timeout_s: float = 20.0, clock: Callable[[], datetime] = _utcnow):
        self.timeout_s = timeout_s
        self.clock = clock

    def fetch(self, url: str) -> PageFetch:
        import httpx

        try:
            resp = httpx.get(url, timeout=self.timeout_s, follow_redirects=True)
        except httpx.HTTPError as exc:
            raise FetchError(f"{url}: {exc}") from exc
        if resp.status_code != 200:
            return PageFetch(url=url, body="", retrieved_at=self.clock(), ok=False)
        return PageFetch(url=url, body=resp.text, retrieved_at=self.clock(), ok=True)

    def links(self, url: str) -> list[str]:
        try:
            page = self.fetch(url)
        except FetchError:
            return []
        if not page.ok:
            return []
        return [urljoin(url, href) for href in _HREF_RE.findall(page.body)]

    def pages_for(self, source: SourceDescriptor) -> list[str]:
        return [source.root]


def _same_domain(url: str, root: str) -> bool:
    return urlsplit(url).netloc == urlsplit(root).netloc


def _strip_fragment(url: str) -> str:
    return url.split("#", 1)[0]


def enumerate_candidate_urls(root: str, fetcher: Fetcher) -> list[str]:
    """Breadth-first same-domain crawl from a foundation root.

    Pages up to one hop from the root are expanded; URLs discovered two hops
    out are collected but not followed. Per-page out-links are visited in
    lexicographic order; the walk stops at 200 URLs.
    """
    root_page = fetcher.fetch(root)
    if not root_page.ok:
        raise FetchError(f"root fetch failed: {root}")

    seen: list[str] = [root]
    seen_set = {root}
    frontier = [(root, 0)]
    while frontier:
        url, depth = frontier.pop(0)
        if depth >= CRAWL_DEPTH:
            continue
        for target in sorted(set(_strip_fragment(t) for t in fetcher.links(url))):
            if not target or target in seen_set:
                continue
            if not _same_domain(target, root):
                continue
            if len(seen) >= CRAWL_MAX_URLS:
                return seen
            seen.append(target)
            seen_set.add(target)
            frontier.append((target, depth + 1))
    return seen


def _heuristic_rank(urls: list[str]) -> list[str]:
    def rank(url: str) -> tuple[int, int, str]:
        lowered = url.lower()
        keyword_hit = 0 if any(k in lowered for k in GRANT_URL_KEYWORDS) else 1
        depth = len([seg for seg in urlsplit(url).path.split("/") if seg])
        return (keyword_hit, depth, url)

    return sorted(urls, key=rank)


def select_grant_pages(urls: list[str], gateway: Gateway) -> list[str]:
    """Ask the gateway to rank candidate URLs; keep at most the top ten.

    A malformed or missing ranking degrades to a fixed heuristic: URLs
    mentioning grant-like keywords first, then shallower paths.
    """
    if not urls:
        raise ValueError("urls must be non-empty")
    ranked: list[str] | None = None
    try:
        reply = request_url_ranking(gateway, urls)
        if isinstance(reply.structured, list):
            allowed = set(urls)
            ordered = [u for u in reply.structured if u in allowed]
            deduped: list[str] = []
            for u in ordered:
                if u not in deduped:
                    deduped.append(u)
            ranked = deduped or None
    except GatewayError as exc:
        logger.info("url ranking degraded to heuristic: %s", exc)
    if ranked is None:
        ranked = _heuristic_rank(urls)
    return ranked[:MAX_GRANT_PAGES]


def extract_record(page: PageFetch, source: SourceDescriptor, gateway: Gateway) -> dict[str, str]:
    """Run the schema-extraction prompt over a page body; returns a raw field map."""
    if not page.ok:
        raise ValueError("extract_record requires a successful fetch")
    reply = request_field_extraction(gateway, page.body)
    if not isinstance(reply.structured, dict):
        raise ExtractError(ExtractError.UNPARSEABLE_REPLY, page.url)
    draft = {k: v for k, v in reply.structured.items()}
    for key in ("title", "description", "url", "end_date"):
        draft.setdefault(key, "")
    if not draft["url"]:
        draft["url"] = page.url
    return draft


def due_for_refresh(source: SourceDescriptor, now: datetime) -> bool:
    if source.last_refreshed is None:
        return True
    elapsed_days = (now - source.last_refreshed).total_seconds() / 86400.0
    return elapsed_days >= source.refresh_interval_days


def run_source(
    source: SourceDescriptor,
    fetcher: Fetcher,
    gateway: Gateway,
    index: UnifiedIndex,
    *,
    clock: Callable[[], datetime] = _utcnow,
) -> IngestReport:
    """Full ingest of one source: page list -> extract -> validate -> upsert.

    Per-page errors accumulate as warnings or rejections; only total fetcher
    unavailability raises :class:`PipelineError`.
    """
    report = IngestReport(source_id=source.source_id)

    if source.kind is SourceKind.FOUNDATION:
        try:
            candidates = enumerate_candidate_urls(source.root, fetcher)
        except FetchError as exc:
            report.warnings.append(f"source skipped this cycle: {exc}")
            return report
        pages = select_grant_pages(candidates, gateway)
    else:
        try:
            pages = fetcher.pages_for(source)
        except Exception as exc:
            raise PipelineError(f"{source.source_id}: cannot list pages: {exc}") from exc

    fetch_failures = 0
    for url in pages:
        report.pages_seen += 1
        try:
            page = fetcher.fetch(url)
        except FetchError as exc:
            fetch_failures += 1
            report.warnings.append(f"fetch failed: {exc}")
            continue
        if not page.ok:
            report.warnings.append(f"fetch failed: {url}")
            continue
        try:
            draft = extract_record(page, source, gateway)
        except (ExtractError, GatewayError) as exc:
            report.records_rejected += 1
            report.warnings.append(f"extraction rejected {url}: {exc}")
            continue
        try:
            opp = validate(draft, source, fetched_at=page.retrieved_at)
        except ValidationError as exc:
            report.records_rejected += 1
            report.warnings.append(f"validation rejected {url}: {exc}")
            continue
        outcome = index.upsert(opp)
        report.records_extracted += 1
        if outcome == INSERTED:
            report.records_new += 1
        elif outcome == UPDATED:
            report.records_updated += 1
        else:
            report.records_unchanged += 1

    if pages and fetch_failures == len(pages):
        raise PipelineError(f"{source.source_id}: fetcher unavailable for every page")

    source.last_refreshed = clock()
    report.check()
    return report


class RefreshScheduler:
    """Polling loop: every tick, re-ingest each source that is due."""

    def __init__(
        self,
        sources: list[SourceDescriptor],
        fetcher: Fetcher,
        gateway: Gateway,
        index: UnifiedIndex,
        *,
        tick_seconds: float = 3600.0,
        clock: Callable[[], datetime] = _utcnow,
        after_cycle: Callable[[list[IngestReport]], None] | None = None,
    ):
        self.sources = sources
        self.fetcher = fetcher
        self.gateway = gateway
        self.index = index
        self.tick_seconds = tick_seconds
        self.clock = clock
        self.after_cycle = after_cycle
        self._stop = threading.Event()
        self._thread: threading.Thread | None = None

    def run_due_once(self) -> list[IngestReport]:
        reports: list[IngestReport] = []
        for source in self.sources:
            if not due_for_refresh(source, self.clock()):
                continue
            try:
                reports.append(
                    run_source(source, self.fetcher, self.gateway, self.index, clock=self.clock)
                )
            except PipelineError as exc:
                logger.error("scheduler: %s", exc)
        if reports and self.after_cycle is not None:
            self.after_cycle(reports)
        return reports

    def _loop(self) -> None:
        while not self._stop.is_set():
            self.run_due_once()
            self._stop.wait(self.tick_seconds)

    def start(self) -> None:
        if self._thread is not None:
            return
        self._thread = threading.Thread(target=self._loop, name="grantforge-refresh", daemon=True)
        self._thread.start()

    def stop(self) -> None:
        self._stop.set()
        if self._thread is not None:
            self._thread.join(timeout=5)
            self._thread = None
