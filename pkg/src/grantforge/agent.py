"""ReAct loop over the unified index and the web tool.

Per turn the policy is fixed: search the index first, escalate to web search
only when index hits are sparse (< 3) or the message asked about very recent
postings, then respond. Every step is pushed to the caller's event sink in
order — thought, tool calls and results, one result card at a time, summary,
done — so transports can stream them as they happen.

Sessions accumulate constraints across turns without touching the base
keywords; only a document upload replaces the keyword set.
"""

from __future__ import annotations

import calendar
import itertools
import logging
import re
import threading
import uuid
from dataclasses import dataclass, field, replace
from datetime import date, datetime, timezone
from enum import Enum
from typing import Callable, Union

from .corpus import normalize_url
from .gateway import (
    EmptyDocument,
    Gateway,
    GatewayError,
    extract_keywords,
    fallback_keywords,
    request_summary,
)
from .index import Hit, SearchFilters, UnifiedIndex, tokenize
from .websearch import SearchError, WebResult, WebSearch, to_result_card

__all__ = [
    "SPARSITY_K",
    "RECENCY_PHRASES",
    "EventKind",
    "AgentEvent",
    "ResultCard",
    "QueryPlan",
    "SessionState",
    "CallSearchIndex",
    "CallWebSearch",
    "Respond",
    "AgentAction",
    "TurnStep",
    "TurnOutcome",
    "PolicyError",
    "plan_next",
    "merge_rank",
    "Agent",
]

logger = logging.getLogger(__name__)

SPARSITY_K = 3
DEFAULT_RESULT_LIMIT = 10
WEB_QUERY_SUFFIX = " funding opportunity"
RECENCY_PHRASES = ("last week", "recently posted", "this week", "just announced")
FEDERAL_AGENCY_LABELS = frozenset(
    {"NSF", "NIH", "DOE", "DOD", "DARPA", "USDA", "NIFA", "NOAA", "NASA", "EPA"}
)

_MONTH_WORDS = {
    "one": 1, "two": 2, "three": 3, "four": 4, "five": 5, "six": 6,
    "seven": 7, "eight": 8, "nine": 9, "ten": 10, "eleven": 11, "twelve": 12,
}
_DEADLINE_RE = re.compile(r"more than\s+([a-z]+|\d+)\s+months?\s+away", re.IGNORECASE)


class PolicyError(Exception):
    pass


class EventKind(str, Enum):
    THOUGHT = "thought"
    TOOL_CALL = "tool_call"
    TOOL_RESULT = "tool_result"
    RESULT_ITEM = "result_item"
    SUMMARY = "summary"
    ERROR = "error"
    DONE = "done"


@dataclass(frozen=True)
class AgentEvent:
    seq: int
    kind: EventKind
    payload: dict

    def data(self) -> dict:
        return {"seq": self.seq, **self.payload}


@dataclass(frozen=True)
class ResultCard:
    title: str
    agency: str
    deadline: date | None
    url: str
    provenance: str  # "index" | "web"
    score: float
    id: str | None = None

    def to_dict(self) -> dict:
        return {
            "title": self.title,
            "agency": self.agency,
            "deadline": self.deadline.isoformat() if self.deadline else None,
            "url": self.url,
            "provenance": self.provenance,
            "score": self.score,
            "id": self.id,
        }


@dataclass
class QueryPlan:
    keywords: list[str] = field(default_factory=list)
    filters: SearchFilters = field(default_factory=SearchFilters)
    recency_requested: bool = False
    free_text: str = ""


@dataclass
class SessionState:
    session_id: str = field(default_factory=lambda: uuid.uuid4().hex)
    plan: QueryPlan = field(default_factory=QueryPlan)
    turn_count: int = 0
    last_hits: list[ResultCard] = field(default_factory=list)
    transcript: list[tuple[str, str]] = field(default_factory=list)
    uploaded_keywords: list[str] | None = None
    turn_lock: threading.Lock = field(default_factory=threading.Lock, repr=False)


@dataclass(frozen=True)
class CallSearchIndex:
    query: str
    filters: SearchFilters


@dataclass(frozen=True)
class CallWebSearch:
    query: str


@dataclass(frozen=True)
class Respond:
    summary: str = ""


AgentAction = Union[CallSearchIndex, CallWebSearch, Respond]


@dataclass(frozen=True)
class TurnStep:
    action: AgentAction
    observation_count: int


@dataclass(frozen=True)
class TurnOutcome:
    cards: list[ResultCard]
    summary: str


def plan_next(plan: QueryPlan, history: list[TurnStep]) -> AgentAction:
    """Fixed tool policy: index first, web only on sparsity or recency, then respond."""
    if not plan.keywords:
        raise PolicyError("plan has no keywords")
    index_steps = [s for s in history if isinstance(s.action, CallSearchIndex)]
    if not index_steps:
        return CallSearchIndex(query=" ".join(plan.keywords), filters=plan.filters)
    web_called = any(isinstance(s.action, CallWebSearch) for s in history)
    index_hits = index_steps[0].observation_count
    if (index_hits < SPARSITY_K or plan.recency_requested) and not web_called:
        return CallWebSearch(query=" ".join(plan.keywords) + WEB_QUERY_SUFFIX)
    return Respond()


def merge_rank(index_hits: list[Hit], web_results: list[WebResult], limit: int) -> list[ResultCard]:
    """Index cards in score order, then web cards in provider order.

    Duplicate URLs (after normalization) keep the index version; the merged
    list is truncated to ``limit``.
    """
    cards: list[ResultCard] = []
    seen_urls: set[str] = set()
    for hit in sorted(index_hits, key=lambda h: (-h.score, h.id)):
        key = normalize_url(hit.opportunity.url)
        if key in seen_urls:
            continue
        seen_urls.add(key)
        cards.append(
            ResultCard(
                title=hit.opportunity.title,
                agency=hit.opportunity.agency,
                deadline=hit.opportunity.end_date,
                url=hit.opportunity.url,
                provenance="index",
                score=hit.score,
                id=hit.id,
            )
        )
    for result in web_results:
        key = normalize_url(result.url)
        if key in seen_urls:
            continue
        seen_urls.add(key)
        cards.append(to_result_card(result))
    return cards[:limit]


def add_months(base: date, months: int) -> date:
    month_index = base.month - 1 + months
    year = base.year + month_index // 12
    month = month_index % 12 + 1
    day = min(base.day, calendar.monthrange(year, month)[1])
    return date(year, month, day)


def _utcnow() -> datetime:
    return datetime.now(timezone.utc)


class Agent:
    """Session driver binding the index, the web tool and the gateway."""

    def __init__(
        self,
        index: UnifiedIndex,
        web: WebSearch,
        gateway: Gateway,
        *,
        clock: Callable[[], datetime] = _utcnow,
        result_limit: int = DEFAULT_RESULT_LIMIT,
    ):
        self.index = index
        self.web = web
        self.gateway = gateway
        self.clock = clock
        self.result_limit = result_limit

    # -- session updates ---------------------------------------------------

    def known_agencies(self) -> set[str]:
        labels = set(FEDERAL_AGENCY_LABELS)
        labels.update(self.index.stats().per_agency_counts.keys())
        return labels

    def interpret_message(self, state: SessionState, user_text: str) -> QueryPlan:
        """Fold one user message into the session's query plan.

        The first message seeds the keywords; every later message only adds
        constraints (relative deadline, agency mentions, recency phrases) and
        never touches the keywords. Unparsed intent stays in ``free_text``.
        """
        if not user_text.strip():
            raise ValueError("user_text must be non-empty")
        plan = state.plan
        plan.free_text = user_text
        plan.recency_requested = False

        if not plan.keywords:
            plan.keywords = extract_keywords(user_text, self.gateway)

        lowered = user_text.lower()

        m = _DEADLINE_RE.search(lowered)
        if m:
            token = m.group(1)
            months = _MONTH_WORDS.get(token) or (int(token) if token.isdigit() else None)
            if months:
                today = self.clock().date()
                plan.filters = replace(plan.filters, min_end_date=add_months(today, months))

        mentioned = {
            label
            for label in self.known_agencies()
            if re.search(rf"\b{re.escape(label.lower())}\b", lowered)
        }
        if mentioned:
            current = set(plan.filters.agencies or ())
            plan.filters = replace(plan.filters, agencies=frozenset(current | mentioned))

        if any(phrase in lowered for phrase in RECENCY_PHRASES):
            plan.recency_requested = True

        return plan

    def ingest_document(self, state: SessionState, document_text: str) -> SessionState:
        """An uploaded document becomes the session's research description."""
        if not document_text.strip():
            raise EmptyDocument("document text is empty")
        keywords = extract_keywords(document_text, self.gateway)
        state.uploaded_keywords = list(keywords)
        state.plan.keywords = list(keywords)
        return state

    # -- the turn ----------------------------------------------------------

    def run_turn(
        self,
        state: SessionState,
        user_text: str | None = None,
        *,
        document_text: str | None = None,
        sink: Callable[[AgentEvent], None],
    ) -> TurnOutcome:
        """Run one full turn, emitting the ordered event stream into ``sink``.

        Tool failures emit ``error`` events; the turn always terminates with
        exactly one ``done``.
        """
        with state.turn_lock:
            return self._run_turn_locked(state, user_text, document_text, sink)

    def _run_turn_locked(
        self,
        state: SessionState,
        user_text: str | None,
        document_text: str | None,
        sink: Callable[[AgentEvent], None],
    ) -> TurnOutcome:
        if user_text is None and document_text is None:
            raise ValueError("a turn needs a message or a document")
        seq = itertools.count()

        def emit(kind: EventKind, payload: dict) -> None:
            sink(AgentEvent(seq=next(seq), kind=kind, payload=payload))

        if document_text is not None:
            self.ingest_document(state, document_text)
        if user_text is not None:
            self.interpret_message(state, user_text)
            state.transcript.append(("user", user_text))

        plan = state.plan
        if not plan.keywords:
            emit(EventKind.ERROR, {"tool": None, "message": "no keywords could be derived"})
            summary = "I could not derive search keywords from that message. Try describing the research topic in a few content words."
            emit(EventKind.SUMMARY, {"text": summary, "suggestions": []})
            emit(EventKind.DONE, {"cards": 0})
            state.turn_count += 1
            return TurnOutcome(cards=[], summary=summary)

        emit(
            EventKind.THOUGHT,
            {
                "text": self._describe_plan(plan),
                "keywords": list(plan.keywords),
                "recency": plan.recency_requested,
                "filters": _filters_dict(plan.filters),
            },
        )

        history: list[TurnStep] = []
        index_hits: list[Hit] = []
        web_results: list[WebResult] = []
        cards: list[ResultCard] = []
        emitted_urls: set[str] = set()

        def emit_new_cards(ranked: list[ResultCard]) -> None:
            for card in ranked:
                key = normalize_url(card.url)
                if key in emitted_urls:
                    continue
                emitted_urls.add(key)
                emit(EventKind.RESULT_ITEM, card.to_dict())

        while True:
            action = plan_next(plan, history)
            if isinstance(action, CallSearchIndex):
                emit(
                    EventKind.TOOL_CALL,
                    {
                        "tool": "search_index",
                        "query": action.query,
                        "filters": _filters_dict(action.filters),
                    },
                )
                index_hits = self.index.search(action.query, action.filters, self.result_limit)
                emit(EventKind.TOOL_RESULT, {"tool": "search_index", "count": len(index_hits)})
                cards = merge_rank(index_hits, web_results, self.result_limit)
                emit_new_cards(cards)
                history.append(TurnStep(action=action, observation_count=len(index_hits)))
            elif isinstance(action, CallWebSearch):
                emit(EventKind.TOOL_CALL, {"tool": "web_search", "query": action.query, "filters": None})
                try:
                    web_results = self.web.search(action.query, self.result_limit)
                except SearchError as exc:
                    web_results = []
                    emit(EventKind.ERROR, {"tool": "web_search", "message": str(exc)})
                else:
                    emit(EventKind.TOOL_RESULT, {"tool": "web_search", "count": len(web_results)})
                cards = merge_rank(index_hits, web_results, self.result_limit)
                emit_new_cards(cards)
                history.append(TurnStep(action=action, observation_count=len(web_results)))
            else:
                break

        summary, suggestions = self._summarize(plan, cards)
        emit(EventKind.SUMMARY, {"text": summary, "suggestions": suggestions})
        emit(EventKind.DONE, {"cards": len(cards)})

        state.last_hits = list(cards)
        state.turn_count += 1
        state.transcript.append(("agent", summary))
        return TurnOutcome(cards=cards, summary=summary)

    # -- helpers -------------------------------------------------------------

    @staticmethod
    def _describe_plan(plan: QueryPlan) -> str:
        bits = [f"Searching the index for: {' '.join(plan.keywords)}"]
        f = plan.filters
        if f.min_end_date:
            bits.append(f"deadline on or after {f.min_end_date.isoformat()}")
        if f.max_end_date:
            bits.append(f"deadline on or before {f.max_end_date.isoformat()}")
        if f.agencies:
            bits.append("agencies: " + ", ".join(sorted(f.agencies)))
        if plan.recency_requested:
            bits.append("will also check the web for very recent postings")
        return "; ".join(bits)

    def _suggest_alternatives(self, plan: QueryPlan) -> list[str]:
        source_text = plan.free_text or " ".join(plan.keywords)
        existing = {t for kw in plan.keywords for t in tokenize(kw)}
        candidates = [t for t in fallback_keywords(source_text) if t not in existing]
        return candidates[:3]

    def _summarize(self, plan: QueryPlan, cards: list[ResultCard]) -> tuple[str, list[str]]:
        if not cards:
            suggestions = self._suggest_alternatives(plan)
            text = "No matching opportunities found."
            if suggestions:
                text += " Consider refining with: " + ", ".join(suggestions) + "."
            return text, suggestions
        try:
            reply = request_summary(self.gateway, plan.free_text, [_card_context(c) for c in cards])
            return reply.text, []
        except GatewayError:
            lines = [f"Found {len(cards)} opportunities:"]
            for rank, card in enumerate(cards, start=1):
                deadline = card.deadline.isoformat() if card.deadline else "no deadline listed"
                lines.append(f"{rank}. {card.title} ({card.agency}, {deadline}) {card.url}")
            return "\n".join(lines), []


def _card_context(card: ResultCard) -> str:
    deadline = card.deadline.isoformat() if card.deadline else "undated"
    return f"{card.title} | {card.agency} | {deadline} | {card.url}"


def _filters_dict(filters: SearchFilters) -> dict:
    return {
        "min_end_date": filters.min_end_date.isoformat() if filters.min_end_date else None,
        "max_end_date": filters.max_end_date.isoformat() if filters.max_end_date else None,
        "agencies": sorted(filters.agencies) if filters.agencies else None,
        "include_undated": filters.include_undated,
    }
