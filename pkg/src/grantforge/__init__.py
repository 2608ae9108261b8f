"""grantforge: federated research-funding discovery.

An aggregation pipeline normalizes heterogeneous grant sources into one
persisted keyword index; a streaming ReAct agent answers natural-language and
document-grounded queries over it, escalating to web search only when index
results are sparse or the user asked about very recent postings.
"""

from .agent import Agent, AgentEvent, EventKind, ResultCard, SessionState
from .corpus import Opportunity, SourceDescriptor, SourceKind, dedup_key, status_of, validate
from .gateway import Gateway, HttpGateway, ScriptedGateway, extract_keywords
from .index import Hit, SearchFilters, UnifiedIndex, tokenize
from .ingest import FixtureFetcher, HttpFetcher, IngestReport, RefreshScheduler, run_source
from .websearch import FixtureWebSearch, WebResult, to_result_card

__version__ = "0.1.0"

__all__ = [
    "Agent",
    "AgentEvent",
    "EventKind",
    "ResultCard",
    "SessionState",
    "Opportunity",
    "SourceDescriptor",
    "SourceKind",
    "dedup_key",
    "status_of",
    "validate",
    "Gateway",
    "HttpGateway",
    "ScriptedGateway",
    "extract_keywords",
    "Hit",
    "SearchFilters",
    "UnifiedIndex",
    "tokenize",
    "FixtureFetcher",
    "HttpFetcher",
    "IngestReport",
    "RefreshScheduler",
    "run_source",
    "FixtureWebSearch",
    "WebResult",
    "to_result_card",
    "__version__",
]
