"""Second agent tool: public-web lookup for recent or out-of-index opportunities.

The fixture backend is a JSON map from normalized query (index tokenizer,
space-joined) to result arrays, so tests are fully deterministic. Web hits
carry score 0 and rank after any index hit; a deadline is only ever attached
when the snippet itself contains explicit deadline text with an ISO date.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass
from datetime import date
from pathlib import Path
from urllib.parse import urlsplit

from .index import tokenize

__all__ = [
    "WebResult",
    "SearchError",
    "WebSearch",
    "FixtureWebSearch",
    "HttpWebSearch",
    "UnavailableWebSearch",
    "normalize_query",
    "deadline_from_snippet",
    "to_result_card",
]

WEB_AGENCY_LABEL = "(web)"

_DEADLINE_RE = re.compile(r"deadline[^0-9]{0,20}(\d{4}-\d{2}-\d{2})", re.IGNORECASE)


class SearchError(Exception):
    UNAVAILABLE = "Unavailable"

    def __init__(self, reason: str = UNAVAILABLE, detail: str = ""):
        self.reason = reason
        super().__init__(f"{reason}: {detail}" if detail else reason)


@dataclass(frozen=True)
class WebResult:
    title: str
    snippet: str
    url: str
    published_at: date | None = None

    def __post_init__(self) -> None:
        parts = urlsplit(self.url)
        if parts.scheme not in ("http", "https") or not parts.netloc:
            raise ValueError(f"web result url must be absolute: {self.url!r}")


def normalize_query(query: str) -> str:
    return " ".join(tokenize(query))


class WebSearch:
    def search(self, query: str, limit: int = 10) -> list[WebResult]:
        raise NotImplementedError


class FixtureWebSearch(WebSearch):
    """Deterministic lookup keyed by normalized query; unknown keys yield []."""

    def __init__(self, table: dict[str, list[WebResult]] | None = None):
        self._table = dict(table or {})

    @classmethod
    def from_file(cls, path: str | Path) -> "FixtureWebSearch":
        with open(path, "r", encoding="utf-8") as fh:
            raw = json.load(fh)
        table: dict[str, list[WebResult]] = {}
        for key, items in raw.items():
            table[key] = [
                WebResult(
                    title=str(item["title"]),
                    snippet=str(item.get("snippet") or ""),
                    url=str(item["url"]),
                    published_at=date.fromisoformat(item["published_at"])
                    if item.get("published_at")
                    else None,
                )
                for item in items
            ]
        return cls(table)

    def add(self, query: str, results: list[WebResult]) -> str:
        key = normalize_query(query)
        self._table[key] = list(results)
        return key

    def search(self, query: str, limit: int = 10) -> list[WebResult]:
        if not query.strip():
            raise ValueError("query must be non-empty")
        results = self._table.get(normalize_query(query), [])
        return results[:limit]


class UnavailableWebSearch(WebSearch):
    """Always raises; used to exercise the degradation path."""

    def search(self, query: str, limit: int = 10) -> list[WebResult]:
        raise SearchError(SearchError.UNAVAILABLE, "backend offline")


class HttpWebSearch(WebSearch):
    """Live provider seam: JSON GET ``?q=...&limit=N`` answered by a result array."""

    def __init__(self, endpoint: str, timeout_s: float = 15.0):
        self.endpoint = endpoint
        self.timeout_s = timeout_s

    def search(self, query: str, limit: int = 10) -> list[WebResult]:
        import httpx

        if not query.strip():
            raise ValueError("query must be non-empty")
        try:
            resp = httpx.get(
                self.endpoint, params={"q": query, "limit": limit}, timeout=self.timeout_s
            )
        except httpx.HTTPError as exc:
            raise SearchError(SearchError.UNAVAILABLE, str(exc)) from exc
        if resp.status_code != 200:
            raise SearchError(SearchError.UNAVAILABLE, f"HTTP {resp.status_code}")
        try:
            items = resp.json()
        except ValueError as exc:
            raise SearchError(SearchError.UNAVAILABLE, f"bad body: {exc}") from exc
        results = []
        for item in items[:limit]:
            try:
                results.append(
                    WebResult(
                        title=str(item["title"]),
                        snippet=str(item.get("snippet") or ""),
                        url=str(item["url"]),
                        published_at=date.fromisoformat(item["published_at"])
                        if item.get("published_at")
                        else None,
                    )
                )
            except (KeyError, ValueError):
                continue
        return results


def deadline_from_snippet(snippet: str) -> date | None:
    """Explicit "deadline ... YYYY-MM-DD" text only; never inferred otherwise."""
    m = _DEADLINE_RE.search(snippet)
    if not m:
        return None
    try:
        return date.fromisoformat(m.group(1))
    except ValueError:
        return None


def to_result_card(result: WebResult):
    """Convert a web hit to the shared result-card shape (web provenance, score 0)."""
    from .agent import ResultCard

    return ResultCard(
        title=result.title,
        agency=WEB_AGENCY_LABEL,
        deadline=deadline_from_snippet(result.snippet),
        url=result.url,
        provenance="web",
        score=0.0,
        id=None,
    )
