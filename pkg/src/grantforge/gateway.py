"""Single abstraction over all language-model calls.

Every model request in the system goes through :class:`Gateway.complete`;
no other module builds one. Two backends: a scripted table for deterministic
tests (fixture file: JSON map of request digest -> reply text, digest over
prompt + context) and an HTTP backend for live use.

Replies are parsed under a per-purpose line grammar: ``key: value`` lines for
field extraction, one URL per line for ranking, one keyword per line for
keyword extraction. ``CompletionReply.structured`` is set only when that
parse succeeds.
"""

from __future__ import annotations

import hashlib
import json
import logging
import re
from dataclasses import dataclass
from enum import Enum
from pathlib import Path

from .index import tokenize

__all__ = [
    "Purpose",
    "CompletionRequest",
    "CompletionReply",
    "GatewayError",
    "EmptyDocument",
    "Gateway",
    "ScriptedGateway",
    "HttpGateway",
    "script_key",
    "extract_keywords",
    "fallback_keywords",
    "request_field_extraction",
    "request_url_ranking",
    "request_summary",
    "EXTRACT_FIELDS_PROMPT",
    "KEYWORD_PROMPT",
    "SUMMARY_PROMPT",
    "build_rank_urls_prompt",
    "FUNCTION_WORDS",
]

logger = logging.getLogger(__name__)

MAX_KEYWORDS = 10
FALLBACK_KEYWORD_COUNT = 8
FALLBACK_MIN_TOKEN_LEN = 4

EXTRACT_FIELDS_PROMPT = (
    "Extract the funding opportunity from the page text. Reply with one "
    "'key: value' line per field, using the keys title, description, url, "
    "end_date, funding_amount."
)
KEYWORD_PROMPT = (
    "Extract the domain-specific research keywords from the document. "
    "Reply with one keyword or short phrase per line, most important first."
)
SUMMARY_PROMPT = (
    "Summarize the funding opportunities below for the researcher in a short "
    "paragraph, naming the strongest matches first."
)
RANK_URLS_PROMPT_HEADER = (
    "Rank the URLs below by how likely each is to contain grant opportunity "
    "information. Reply with one URL per line, most likely first."
)

# Fixed 50-entry function-word list used by the deterministic keyword fallback.
FUNCTION_WORDS = frozenset(
    """
    that this with from have will which their about would there been more
    when where them than then some such only also into over after before
    between through during under each other must shall should could these
    those your they what were does while because upon very most many both
    """.split()
)
assert len(FUNCTION_WORDS) == 50


class Purpose(str, Enum):
    EXTRACT_FIELDS = "extract_fields"
    RANK_URLS = "rank_urls"
    EXTRACT_KEYWORDS = "extract_keywords"
    SUMMARIZE = "summarize"
    PLAN = "plan"


class GatewayError(Exception):
    NO_SCRIPT = "NoScript"
    TIMEOUT = "Timeout"
    BAD_STATUS = "BadStatus"

    def __init__(self, reason: str, detail: str = ""):
        self.reason = reason
        super().__init__(f"{reason}: {detail}" if detail else reason)


class EmptyDocument(Exception):
    pass


@dataclass(frozen=True)
class CompletionRequest:
    purpose: Purpose
    prompt: str
    context_documents: tuple[str, ...] = ()
    max_reply_tokens: int = 512

    def __post_init__(self) -> None:
        if not self.prompt:
            raise ValueError("prompt must be non-empty")
        if self.max_reply_tokens < 1:
            raise ValueError("max_reply_tokens must be positive")
        if not isinstance(self.context_documents, tuple):
            object.__setattr__(self, "context_documents", tuple(self.context_documents))


@dataclass(frozen=True)
class CompletionReply:
    text: str
    structured: dict | list | None
    backend_id: str


def script_key(prompt: str, context_documents: tuple[str, ...] | list[str]) -> str:
    """Digest a request's prompt + context into the scripted-table lookup key."""
    h = hashlib.sha256()
    h.update(prompt.encode("utf-8"))
    for doc in context_documents:
        h.update(b"\x00")
        h.update(doc.encode("utf-8"))
    return h.hexdigest()[:32]


def build_rank_urls_prompt(urls: list[str]) -> str:
    return RANK_URLS_PROMPT_HEADER + "\n" + "\n".join(urls)


_FIELD_LINE_RE = re.compile(r"^\s*([A-Za-z_]+)\s*:\s*(.*)$")
_BULLET_RE = re.compile(r"^\s*(?:[-*•]|\d+[.)])\s*")
_KNOWN_FIELD_KEYS = {"title", "description", "url", "end_date", "funding_amount", "agency"}


def parse_structured(purpose: Purpose, text: str) -> dict | list | None:
    """Apply the purpose's reply grammar; None when the reply doesn't conform."""
    if purpose is Purpose.EXTRACT_FIELDS:
        fields: dict[str, str] = {}
        for line in text.splitlines():
            m = _FIELD_LINE_RE.match(line)
            if m and m.group(1).lower() in _KNOWN_FIELD_KEYS:
                fields[m.group(1).lower()] = m.group(2).strip()
        return fields or None
    if purpose is Purpose.RANK_URLS:
        urls: list[str] = []
        for line in text.splitlines():
            candidate = _BULLET_RE.sub("", line).strip()
            if candidate and " " not in candidate and ("://" in candidate or candidate.startswith("/")):
                urls.append(candidate)
        return urls or None
    if purpose is Purpose.EXTRACT_KEYWORDS:
        keywords: list[str] = []
        for line in text.splitlines():
            candidate = _BULLET_RE.sub("", line).strip()
            if candidate:
                keywords.append(candidate)
        return keywords or None
    return None


class Gateway:
    """Backend interface; subclasses implement :meth:`_complete_text`."""

    backend_id = "abstract"

    def complete(self, req: CompletionRequest) -> CompletionReply:
        text = self._complete_text(req)
        return CompletionReply(
            text=text,
            structured=parse_structured(req.purpose, text),
            backend_id=self.backend_id,
        )

    def _complete_text(self, req: CompletionRequest) -> str:
        raise NotImplementedError


class ScriptedGateway(Gateway):
    """Deterministic fixture-backed gateway.

    Unknown request keys raise ``GatewayError(NoScript)``: tests enumerate
    every call they expect. The table is read-only after load.
    """

    backend_id = "scripted"

    def __init__(self, table: dict[str, str] | None = None):
        self._table = dict(table or {})
        self.call_count = 0

    @classmethod
    def from_file(cls, path: str | Path) -> "ScriptedGateway":
        with open(path, "r", encoding="utf-8") as fh:
            table = json.load(fh)
        if not isinstance(table, dict):
            raise ValueError("scripted gateway fixture must be a JSON object")
        return cls(table)

    def script(self, prompt: str, context_documents: list[str] | tuple[str, ...], reply: str) -> str:
        """Register a reply; returns the computed key (for fixture authoring)."""
        key = script_key(prompt, tuple(context_documents))
        self._table[key] = reply
        return key

    def to_table(self) -> dict[str, str]:
        return dict(self._table)

    def _complete_text(self, req: CompletionRequest) -> str:
        self.call_count += 1
        key = script_key(req.prompt, req.context_documents)
        try:
            return self._table[key]
        except KeyError:
            raise GatewayError(GatewayError.NO_SCRIPT, f"{req.purpose.value}:{key}") from None


class HttpGateway(Gateway):
    """Single-request HTTP backend with timeout and one retry.

    Provider shape is a plain JSON POST ``{model, purpose, prompt, context,
    max_tokens}`` answered by ``{"text": ...}``; endpoint, token and model
    come from the gateway config block. ``transport`` exists for tests.
    """

    backend_id = "http"

    def __init__(
        self,
        endpoint: str,
        auth_token: str = "",
        model: str = "",
        timeout_s: float = 30.0,
        transport=None,
    ):
        import httpx

        self.endpoint = endpoint
        self.auth_token = auth_token
        self.model = model
        self.timeout_s = timeout_s
        self._client = httpx.Client(timeout=timeout_s, transport=transport)

    def _complete_text(self, req: CompletionRequest) -> str:
        import httpx

        payload = {
            "model": self.model,
            "purpose": req.purpose.value,
            "prompt": req.prompt,
            "context": list(req.context_documents),
            "max_tokens": req.max_reply_tokens,
        }
        headers = {}
        if self.auth_token:
            headers["Authorization"] = f"Bearer {self.auth_token}"
        last_error: GatewayError | None = None
        for _ in range(2):
            try:
                resp = self._client.post(self.endpoint, json=payload, headers=headers)
            except httpx.TimeoutException as exc:
                last_error = GatewayError(GatewayError.TIMEOUT, str(exc))
                continue
            except httpx.HTTPError as exc:
                last_error = GatewayError(GatewayError.BAD_STATUS, str(exc))
                continue
            if resp.status_code != 200:
                last_error = GatewayError(GatewayError.BAD_STATUS, f"HTTP {resp.status_code}")
                continue
            try:
                return str(resp.json()["text"])
            except (KeyError, ValueError) as exc:
                last_error = GatewayError(GatewayError.BAD_STATUS, f"bad body: {exc}")
                continue
        assert last_error is not None
        raise last_error


def request_field_extraction(gateway: "Gateway", page_body: str) -> CompletionReply:
    """Schema-extraction call over one page body. The only entry point for it."""
    return gateway.complete(
        CompletionRequest(
            purpose=Purpose.EXTRACT_FIELDS,
            prompt=EXTRACT_FIELDS_PROMPT,
            context_documents=(page_body,),
            max_reply_tokens=512,
        )
    )


def request_url_ranking(gateway: "Gateway", urls: list[str]) -> CompletionReply:
    return gateway.complete(
        CompletionRequest(
            purpose=Purpose.RANK_URLS,
            prompt=build_rank_urls_prompt(urls),
            max_reply_tokens=512,
        )
    )


def request_summary(gateway: "Gateway", question: str, card_lines: list[str]) -> CompletionReply:
    return gateway.complete(
        CompletionRequest(
            purpose=Purpose.SUMMARIZE,
            prompt=SUMMARY_PROMPT + "\n" + question,
            context_documents=tuple(card_lines),
            max_reply_tokens=512,
        )
    )


def fallback_keywords(document_text: str) -> list[str]:
    """Deterministic extractor: frequency-ranked content tokens, top 8.

    Tokens shorter than 4 chars and the fixed function-word list are dropped;
    ties break alphabetically.
    """
    counts: dict[str, int] = {}
    for token in tokenize(document_text):
        if len(token) < FALLBACK_MIN_TOKEN_LEN or token in FUNCTION_WORDS:
            continue
        counts[token] = counts.get(token, 0) + 1
    ranked = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))
    return [token for token, _ in ranked[:FALLBACK_KEYWORD_COUNT]]


def extract_keywords(document_text: str, gateway: Gateway) -> list[str]:
    """Keyword list for a research description, via the gateway when possible."""
    if not document_text.strip():
        raise EmptyDocument("document text is empty")
    try:
        reply = gateway.complete(
            CompletionRequest(
                purpose=Purpose.EXTRACT_KEYWORDS,
                prompt=KEYWORD_PROMPT,
                context_documents=(document_text,),
                max_reply_tokens=256,
            )
        )
    except GatewayError as exc:
        logger.info("keyword extraction degraded to fallback: %s", exc)
        return fallback_keywords(document_text)
    keywords = reply.structured if isinstance(reply.structured, list) else None
    if not keywords:
        return fallback_keywords(document_text)
    seen: set[str] = set()
    unique: list[str] = []
    for kw in keywords:
        if kw not in seen:
            seen.add(kw)
            unique.append(kw)
    return unique[:MAX_KEYWORDS]
