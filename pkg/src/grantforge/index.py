"""Embedded keyword index over opportunity records.

Search is field-weighted BM25 (k1=1.2, b=0.75, title weight 3.0, description
weight 1.0) with the always-positive IDF variant ln((N-df+0.5)/(df+0.5) + 1).
Documents failing the structured filters are excluded before ranking, so
df/avg-length/N are computed over the eligible subset at query time.

Persistence is a two-file snapshot: ``<name>.records.jsonl`` holding the
canonical records sorted by id, plus ``<name>.meta.json``. Postings are
derived state and are rebuilt on load, never serialized.

Concurrency: a single re-entrant lock serializes writers; readers observe
either the pre- or post-state of any upsert, never a torn state.
"""

from __future__ import annotations

import json
import logging
import math
import re
import threading
from dataclasses import dataclass
from datetime import date, datetime, timezone
from pathlib import Path

from .corpus import Opportunity, record_from_json_line, record_to_json_line, rfc3339

__all__ = [
    "tokenize",
    "SearchFilters",
    "Hit",
    "IndexStats",
    "UnifiedIndex",
    "INSERTED",
    "UPDATED",
    "UNCHANGED",
    "SNAPSHOT_FORMAT_VERSION",
]

logger = logging.getLogger(__name__)

K1 = 1.2
B = 0.75
TITLE_WEIGHT = 3.0
DESCRIPTION_WEIGHT = 1.0
MIN_TOKEN_LEN = 2
SNAPSHOT_FORMAT_VERSION = 1

_SPLIT_RE = re.compile(r"[^0-9a-z]+")


def tokenize(text: str) -> list[str]:
    """Case-fold, split on non-alphanumeric runs, drop tokens shorter than 2."""
    return [t for t in _SPLIT_RE.split(text.casefold()) if len(t) >= MIN_TOKEN_LEN]


@dataclass(frozen=True)
class SearchFilters:
    min_end_date: date | None = None
    max_end_date: date | None = None
    agencies: frozenset[str] | None = None
    include_undated: bool = True

    def __post_init__(self) -> None:
        if self.min_end_date and self.max_end_date and self.min_end_date > self.max_end_date:
            raise ValueError("min_end_date must be <= max_end_date")
        if self.agencies is not None and not isinstance(self.agencies, frozenset):
            object.__setattr__(self, "agencies", frozenset(self.agencies))

    def accepts(self, opp: Opportunity) -> bool:
        if self.agencies is not None and opp.agency not in self.agencies:
            return False
        if opp.end_date is None:
            if not self.include_undated:
                return False
            return True
        if self.min_end_date and opp.end_date < self.min_end_date:
            return False
        if self.max_end_date and opp.end_date > self.max_end_date:
            return False
        return True


@dataclass(frozen=True)
class Hit:
    id: str
    score: float
    opportunity: Opportunity


@dataclass(frozen=True)
class IndexStats:
    doc_count: int
    per_agency_counts: dict[str, int]
    last_modified: datetime | None


@dataclass
class _IndexedDoc:
    id: str
    title_tokens: list[str]
    desc_tokens: list[str]
    title_freqs: dict[str, int]
    desc_freqs: dict[str, int]
    stored: Opportunity


INSERTED = "inserted"
UPDATED = "updated"
UNCHANGED = "unchanged"


def _count(tokens: list[str]) -> dict[str, int]:
    freqs: dict[str, int] = {}
    for t in tokens:
        freqs[t] = freqs.get(t, 0) + 1
    return freqs


class UnifiedIndex:
    """In-process inverted index keyed by record id."""

    def __init__(self) -> None:
        self._docs: dict[str, _IndexedDoc] = {}
        self._title_postings: dict[str, set[str]] = {}
        self._desc_postings: dict[str, set[str]] = {}
        self._lock = threading.RLock()
        self._last_modified: datetime | None = None
        self._dirty = False
        self.last_load_warnings: list[str] = []

    # -- mutation -------------------------------------------------------

    def upsert(self, opp: Opportunity) -> str:
        with self._lock:
            existing = self._docs.get(opp.id)
            if existing is not None and existing.stored.content_equal(opp):
                return UNCHANGED
            if existing is not None:
                self._unlink(existing)
            self._link(opp)
            self._touch()
            return UPDATED if existing is not None else INSERTED

    def remove(self, doc_id: str) -> bool:
        with self._lock:
            doc = self._docs.get(doc_id)
            if doc is None:
                return False
            self._unlink(doc)
            self._touch()
            return True

    def _link(self, opp: Opportunity) -> None:
        title_tokens = tokenize(opp.title)
        desc_tokens = tokenize(opp.description)
        doc = _IndexedDoc(
            id=opp.id,
            title_tokens=title_tokens,
            desc_tokens=desc_tokens,
            title_freqs=_count(title_tokens),
            desc_freqs=_count(desc_tokens),
            stored=opp,
        )
        self._docs[opp.id] = doc
        for term in doc.title_freqs:
            self._title_postings.setdefault(term, set()).add(opp.id)
        for term in doc.desc_freqs:
            self._desc_postings.setdefault(term, set()).add(opp.id)

    def _unlink(self, doc: _IndexedDoc) -> None:
        for term in doc.title_freqs:
            ids = self._title_postings.get(term)
            if ids is not None:
                ids.discard(doc.id)
                if not ids:
                    del self._title_postings[term]
        for term in doc.desc_freqs:
            ids = self._desc_postings.get(term)
            if ids is not None:
                ids.discard(doc.id)
                if not ids:
                    del self._desc_postings[term]
        del self._docs[doc.id]

    def _touch(self) -> None:
        self._last_modified = datetime.now(timezone.utc)
        self._dirty = True

    # -- lookup ---------------------------------------------------------

    def get(self, doc_id: str) -> Opportunity | None:
        with self._lock:
            doc = self._docs.get(doc_id)
            return doc.stored if doc else None

    def __len__(self) -> int:
        return len(self._docs)

    @property
    def dirty(self) -> bool:
        return self._dirty

    def all_records(self) -> list[Opportunity]:
        with self._lock:
            return [self._docs[i].stored for i in sorted(self._docs)]

    def stats(self) -> IndexStats:
        with self._lock:
            counts: dict[str, int] = {}
            for doc in self._docs.values():
                counts[doc.stored.agency] = counts.get(doc.stored.agency, 0) + 1
            return IndexStats(
                doc_count=len(self._docs),
                per_agency_counts=dict(sorted(counts.items())),
                last_modified=self._last_modified,
            )

    # -- search ---------------------------------------------------------

    def search(self, query: str, filters: SearchFilters | None = None, limit: int = 10) -> list[Hit]:
        if limit < 1:
            raise ValueError("limit must be >= 1")
        filters = filters or SearchFilters()
        terms = tokenize(query)
        with self._lock:
            eligible = {i: d for i, d in self._docs.items() if filters.accepts(d.stored)}
            if not eligible or not terms:
                return []

            n = len(eligible)
            title_avg = sum(len(d.title_tokens) for d in eligible.values()) / n
            desc_avg = sum(len(d.desc_tokens) for d in eligible.values()) / n

            scores: dict[str, float] = {}
            for term in terms:
                self._accumulate(
                    term, eligible, self._title_postings, "title_freqs", "title_tokens",
                    title_avg, TITLE_WEIGHT, n, scores,
                )
                self._accumulate(
                    term, eligible, self._desc_postings, "desc_freqs", "desc_tokens",
                    desc_avg, DESCRIPTION_WEIGHT, n, scores,
                )

            ranked = sorted(
                ((doc_id, s) for doc_id, s in scores.items() if s > 0.0),
                key=lambda pair: (-pair[1], pair[0]),
            )
            return [
                Hit(id=doc_id, score=score, opportunity=eligible[doc_id].stored)
                for doc_id, score in ranked[:limit]
            ]

    def _accumulate(
        self,
        term: str,
        eligible: dict[str, _IndexedDoc],
        postings: dict[str, set[str]],
        freq_attr: str,
        tokens_attr: str,
        avg_len: float,
        weight: float,
        n: int,
        scores: dict[str, float],
    ) -> None:
        if avg_len == 0.0:
            return
        candidates = postings.get(term)
        if not candidates:
            return
        matching = sorted(i for i in candidates if i in eligible)
        df = len(matching)
        if df == 0:
            return
        idf = math.log((n - df + 0.5) / (df + 0.5) + 1.0)
        for doc_id in matching:
            doc = eligible[doc_id]
            tf = getattr(doc, freq_attr)[term]
            doc_len = len(getattr(doc, tokens_attr))
            denom = tf + K1 * (1.0 - B + B * doc_len / avg_len)
            scores[doc_id] = scores.get(doc_id, 0.0) + weight * idf * (tf * (K1 + 1.0)) / denom

    # -- persistence ------------------------------------------------------

    def save_snapshot(self, base_path: str | Path) -> int:
        base = Path(base_path)
        records_path = base.with_name(base.name + ".records.jsonl")
        meta_path = base.with_name(base.name + ".meta.json")
        with self._lock:
            records = self.all_records()
            base.parent.mkdir(parents=True, exist_ok=True)
            tmp = records_path.with_suffix(".tmp")
            with open(tmp, "w", encoding="utf-8") as fh:
                for opp in records:
                    fh.write(record_to_json_line(opp))
                    fh.write("\n")
            tmp.replace(records_path)
            meta = {
                "format_version": SNAPSHOT_FORMAT_VERSION,
                "doc_count": len(records),
                "saved_at": rfc3339(datetime.now(timezone.utc)),
            }
            with open(meta_path, "w", encoding="utf-8") as fh:
                json.dump(meta, fh, indent=2)
                fh.write("\n")
            self._dirty = False
            return len(records)

    def load_snapshot(self, base_path: str | Path) -> int:
        base = Path(base_path)
        records_path = base.with_name(base.name + ".records.jsonl")
        warnings: list[str] = []
        loaded: list[Opportunity] = []
        with open(records_path, "r", encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, start=1):
                line = line.strip()
                if not line:
                    continue
                try:
                    loaded.append(record_from_json_line(line))
                except (ValueError, KeyError) as exc:
                    msg = f"line {lineno} skipped: {exc}"
                    warnings.append(msg)
                    logger.warning("snapshot %s: %s", records_path, msg)
        with self._lock:
            self._docs.clear()
            self._title_postings.clear()
            self._desc_postings.clear()
            for opp in loaded:
                self._link(opp)
            self._last_modified = datetime.now(timezone.utc)
            self._dirty = False
            self.last_load_warnings = warnings
            return len(self._docs)

    @staticmethod
    def snapshot_exists(base_path: str | Path) -> bool:
        base = Path(base_path)
        return base.with_name(base.name + ".records.jsonl").exists()
