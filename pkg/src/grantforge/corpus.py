"""Canonical opportunity records: schema, tolerant validation, identity, lifecycle.

Every record flowing through the system is normalized into :class:`Opportunity`.
Validation degrades gracefully: malformed optional fields become warnings on
the record, only an unusable title or URL rejects it. Record identity is a
recomputable digest of the normalized title and URL (SHA-256, hex-truncated to
32 chars / 128 bits), so re-ingesting the same page is idempotent.

The canonical interchange format is JSONL: one object per line with exactly
the Opportunity field names, timestamps in RFC 3339.
"""

from __future__ import annotations

import hashlib
import json
import re
from dataclasses import dataclass
from datetime import date, datetime, timezone
from enum import Enum
from urllib.parse import urlsplit, urlunsplit

__all__ = [
    "SourceKind",
    "Opportunity",
    "SourceDescriptor",
    "OpportunityStatus",
    "ValidationError",
    "validate",
    "dedup_key",
    "status_of",
    "normalize_title",
    "normalize_url",
    "parse_flexible_date",
    "parse_funding_amount",
    "record_to_dict",
    "record_to_json_line",
    "record_from_dict",
    "record_from_json_line",
    "draft_from",
    "rfc3339",
    "source_to_dict",
    "source_from_dict",
    "load_sources",
]

DEFAULT_REFRESH_INTERVAL_DAYS = 14

_WS_RE = re.compile(r"\s+")
_AMOUNT_RE = re.compile(r"\$?\s*(\d[\d,]*)")
_DATE_FORMATS = ("%B %d, %Y", "%b %d, %Y", "%m/%d/%Y")


class SourceKind(str, Enum):
    FEDERAL_PORTAL = "federal_portal"
    FOUNDATION = "foundation"
    FIXTURE = "fixture"


class OpportunityStatus(str, Enum):
    OPEN = "open"
    EXPIRED = "expired"
    UNDATED = "undated"


class ValidationError(Exception):
    """A draft record is unusable. ``reason`` is ``MissingTitle`` or ``InvalidUrl``."""

    MISSING_TITLE = "MissingTitle"
    INVALID_URL = "InvalidUrl"

    def __init__(self, reason: str, detail: str = ""):
        self.reason = reason
        super().__init__(f"{reason}: {detail}" if detail else reason)


@dataclass(frozen=True)
class Opportunity:
    """One normalized funding opportunity."""

    id: str
    title: str
    description: str
    url: str
    agency: str
    source_kind: SourceKind
    end_date: date | None
    funding_amount: int | None
    fetched_at: datetime
    warnings: tuple[str, ...] = ()

    def content_equal(self, other: "Opportunity") -> bool:
        """Equality on everything except fetch provenance (``fetched_at``)."""
        return (
            self.id == other.id
            and self.title == other.title
            and self.description == other.description
            and self.url == other.url
            and self.agency == other.agency
            and self.source_kind == other.source_kind
            and self.end_date == other.end_date
            and self.funding_amount == other.funding_amount
            and self.warnings == other.warnings
        )


@dataclass
class SourceDescriptor:
    """One ingestable origin plus its refresh state."""

    source_id: str
    kind: SourceKind
    root: str
    agency_label: str
    last_refreshed: datetime | None = None
    refresh_interval_days: int = DEFAULT_REFRESH_INTERVAL_DAYS

    def __post_init__(self) -> None:
        if isinstance(self.kind, str) and not isinstance(self.kind, SourceKind):
            self.kind = SourceKind(self.kind)
        if self.refresh_interval_days < 1:
            raise ValueError("refresh_interval_days must be >= 1")
        if self.kind is SourceKind.FOUNDATION:
            parts = urlsplit(self.root)
            if parts.scheme not in ("http", "https") or not parts.netloc:
                raise ValueError("foundation root must be a domain-level URL")


def normalize_title(title: str) -> str:
    return _WS_RE.sub(" ", title).strip().casefold()


def normalize_url(url: str) -> str:
    """Lowercase the scheme, strip the fragment and any trailing slash."""
    parts = urlsplit(url)
    path = parts.path.rstrip("/") if parts.path != "/" else ""
    normalized = urlunsplit((parts.scheme.lower(), parts.netloc, path, parts.query, ""))
    return normalized.rstrip("/")


def dedup_key(title: str, url: str) -> str:
    """Stable 128-bit identity for a record: SHA-256 of the normalized pair, truncated."""
    material = normalize_title(title) + "\n" + normalize_url(url)
    return hashlib.sha256(material.encode("utf-8")).hexdigest()[:32]


def status_of(opp: Opportunity, now: date) -> OpportunityStatus:
    if opp.end_date is None:
        return OpportunityStatus.UNDATED
    if opp.end_date < now:
        return OpportunityStatus.EXPIRED
    return OpportunityStatus.OPEN


def parse_flexible_date(raw: str) -> date | None:
    """Accept ISO-8601, "Month DD, YYYY" and "MM/DD/YYYY"; anything else is None."""
    text = raw.strip()
    if not text:
        return None
    try:
        return date.fromisoformat(text)
    except ValueError:
        pass
    for fmt in _DATE_FORMATS:
        try:
            return datetime.strptime(text, fmt).date()
        except ValueError:
            continue
    return None


def parse_funding_amount(raw: str) -> int | None:
    """Pull dollar figures out of free text; ranges resolve to the lower bound."""
    amounts = [int(m.group(1).replace(",", "")) for m in _AMOUNT_RE.finditer(raw)]
    if not amounts:
        return None
    return min(amounts)


def _parse_timestamp(raw: str) -> datetime | None:
    try:
        ts = datetime.fromisoformat(raw.replace("Z", "+00:00"))
    except ValueError:
        return None
    if ts.tzinfo is None:
        ts = ts.replace(tzinfo=timezone.utc)
    return ts.astimezone(timezone.utc)


def validate(
    draft: dict[str, str | None],
    source: SourceDescriptor,
    *,
    fetched_at: datetime | None = None,
) -> Opportunity:
    """Normalize a raw field map into an Opportunity.

    Missing or unparseable optional fields (description, end_date,
    funding_amount) degrade into warnings; a missing title or a non-absolute
    URL raises :class:`ValidationError`.
    """
    warnings: list[str] = []

    raw_title = (draft.get("title") or "").strip()
    title = _WS_RE.sub(" ", raw_title)
    if not title:
        raise ValidationError(ValidationError.MISSING_TITLE)

    url = (draft.get("url") or "").strip()
    parts = urlsplit(url)
    if parts.scheme not in ("http", "https") or not parts.netloc:
        raise ValidationError(ValidationError.INVALID_URL, url or "<missing>")

    description = (draft.get("description") or "").strip()

    end_date: date | None = None
    raw_end = (draft.get("end_date") or "").strip()
    if raw_end:
        end_date = parse_flexible_date(raw_end)
        if end_date is None:
            warnings.append("end_date unparseable")

    funding_amount: int | None = None
    raw_amount = (draft.get("funding_amount") or "").strip()
    if raw_amount:
        funding_amount = parse_funding_amount(raw_amount)
        if funding_amount is None:
            warnings.append("funding_amount unparseable")

    ts = fetched_at
    raw_fetched = (draft.get("fetched_at") or "").strip()
    if ts is None and raw_fetched:
        ts = _parse_timestamp(raw_fetched)
    if ts is None:
        ts = datetime.now(timezone.utc)

    return Opportunity(
        id=dedup_key(title, url),
        title=title,
        description=description,
        url=url,
        agency=source.agency_label,
        source_kind=source.kind,
        end_date=end_date,
        funding_amount=funding_amount,
        fetched_at=ts.astimezone(timezone.utc),
        warnings=tuple(warnings),
    )


def draft_from(opp: Opportunity) -> dict[str, str]:
    """Re-extract the raw field map of a record (validate is idempotent over this)."""
    draft = {
        "title": opp.title,
        "description": opp.description,
        "url": opp.url,
        "fetched_at": rfc3339(opp.fetched_at),
    }
    if opp.end_date is not None:
        draft["end_date"] = opp.end_date.isoformat()
    if opp.funding_amount is not None:
        draft["funding_amount"] = str(opp.funding_amount)
    return draft


def rfc3339(ts: datetime) -> str:
    return ts.astimezone(timezone.utc).isoformat().replace("+00:00", "Z")


# Canonical JSONL interchange. Field order is fixed; one object per line.

def record_to_dict(opp: Opportunity) -> dict:
    return {
        "id": opp.id,
        "title": opp.title,
        "description": opp.description,
        "url": opp.url,
        "agency": opp.agency,
        "source_kind": opp.source_kind.value,
        "end_date": opp.end_date.isoformat() if opp.end_date else None,
        "funding_amount": opp.funding_amount,
        "fetched_at": rfc3339(opp.fetched_at),
        "warnings": list(opp.warnings),
    }


def record_to_json_line(opp: Opportunity) -> str:
    return json.dumps(record_to_dict(opp), ensure_ascii=False, separators=(",", ":"))


def record_from_dict(data: dict) -> Opportunity:
    ts = _parse_timestamp(str(data["fetched_at"]))
    if ts is None:
        raise ValueError(f"bad fetched_at: {data.get('fetched_at')!r}")
    raw_end = data.get("end_date")
    opp = Opportunity(
        id=str(data["id"]),
        title=str(data["title"]),
        description=str(data.get("description") or ""),
        url=str(data["url"]),
        agency=str(data["agency"]),
        source_kind=SourceKind(data["source_kind"]),
        end_date=date.fromisoformat(raw_end) if raw_end else None,
        funding_amount=int(data["funding_amount"]) if data.get("funding_amount") is not None else None,
        fetched_at=ts,
        warnings=tuple(data.get("warnings") or ()),
    )
    if opp.id != dedup_key(opp.title, opp.url):
        raise ValueError(f"id {opp.id} does not match dedup_key of record")
    if not opp.title.strip():
        raise ValueError("empty title")
    return opp


def record_from_json_line(line: str) -> Opportunity:
    data = json.loads(line)
    if not isinstance(data, dict):
        raise ValueError("record line is not a JSON object")
    return record_from_dict(data)


def load_sources(path) -> list[SourceDescriptor]:
    """Read a source configuration file (JSON array of SourceDescriptor objects)."""
    with open(path, "r", encoding="utf-8") as fh:
        raw = json.load(fh)
    if not isinstance(raw, list):
        raise ValueError("source config must be a JSON array")
    try:
        return [source_from_dict(item) for item in raw]
    except KeyError as exc:
        raise ValueError(f"source entry missing required field {exc}") from exc


def source_to_dict(source: SourceDescriptor) -> dict:
    return {
        "source_id": source.source_id,
        "kind": source.kind.value,
        "root": source.root,
        "agency_label": source.agency_label,
        "last_refreshed": rfc3339(source.last_refreshed) if source.last_refreshed else None,
        "refresh_interval_days": source.refresh_interval_days,
    }


def source_from_dict(data: dict) -> SourceDescriptor:
    raw_ts = data.get("last_refreshed")
    ts = _parse_timestamp(str(raw_ts)) if raw_ts else None
    return SourceDescriptor(
        source_id=str(data["source_id"]),
        kind=SourceKind(data["kind"]),
        root=str(data["root"]),
        agency_label=str(data["agency_label"]),
        last_refreshed=ts,
        refresh_interval_days=int(data.get("refresh_interval_days", DEFAULT_REFRESH_INTERVAL_DAYS)),
    )
