"""Wires a configured process: index, gateway, web tool, fetcher, sources."""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field as dc_field
from datetime import datetime
from pathlib import Path

from .agent import Agent
from .config import AppConfig
from .corpus import SourceDescriptor, load_sources, rfc3339
from .gateway import Gateway, HttpGateway, ScriptedGateway
from .index import UnifiedIndex
from .ingest import Fetcher, FixtureFetcher, HttpFetcher
from .websearch import FixtureWebSearch, HttpWebSearch, WebSearch

__all__ = ["Runtime", "build_runtime"]

logger = logging.getLogger(__name__)


@dataclass
class Runtime:
    config: AppConfig
    index: UnifiedIndex
    gateway: Gateway
    web: WebSearch
    agent: Agent
    fetcher: Fetcher | None = None
    sources: list[SourceDescriptor] = dc_field(default_factory=list)

    def save_snapshot(self) -> int:
        return self.index.save_snapshot(self.config.snapshot_path)

    def save_if_dirty(self) -> bool:
        if not self.index.dirty:
            return False
        self.save_snapshot()
        self.save_source_state()
        return True

    def load_source_state(self) -> None:
        path = self.config.source_state_path
        if not path.exists():
            return
        with open(path, "r", encoding="utf-8") as fh:
            state = json.load(fh)
        for source in self.sources:
            raw = state.get(source.source_id)
            if raw:
                source.last_refreshed = datetime.fromisoformat(raw.replace("Z", "+00:00"))

    def save_source_state(self) -> None:
        if not self.sources:
            return
        path = self.config.source_state_path
        path.parent.mkdir(parents=True, exist_ok=True)
        state = {
            s.source_id: rfc3339(s.last_refreshed)
            for s in self.sources
            if s.last_refreshed is not None
        }
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(state, fh, indent=2, sort_keys=True)
            fh.write("\n")


def _build_gateway(config: AppConfig) -> Gateway:
    gc = config.gateway
    if gc.mode == "scripted":
        path = config.resolve(gc.script_path)
        if path is None:
            return ScriptedGateway()
        return ScriptedGateway.from_file(path)
    if gc.mode == "http":
        if not gc.endpoint:
            raise ValueError("gateway.endpoint required for http mode")
        return HttpGateway(gc.endpoint, gc.auth_token, gc.model, gc.timeout_s)
    raise ValueError(f"unknown gateway mode: {gc.mode!r}")


def _build_web(config: AppConfig) -> WebSearch:
    wc = config.web_search
    if wc.mode == "fixture":
        path = config.resolve(wc.fixture_path)
        if path is None:
            return FixtureWebSearch()
        return FixtureWebSearch.from_file(path)
    if wc.mode == "http":
        if not wc.endpoint:
            raise ValueError("web_search.endpoint required for http mode")
        return HttpWebSearch(wc.endpoint, wc.timeout_s)
    raise ValueError(f"unknown web_search mode: {wc.mode!r}")


def _build_fetcher(config: AppConfig) -> Fetcher | None:
    if config.fetcher == "http":
        return HttpFetcher()
    if config.fetcher == "fixture":
        root = config.resolve(config.fixture_root)
        if root is None:
            return None
        return FixtureFetcher(root)
    raise ValueError(f"unknown fetcher mode: {config.fetcher!r}")


def build_runtime(config: AppConfig, *, load_snapshot: bool = True) -> Runtime:
    index = UnifiedIndex()
    if load_snapshot and UnifiedIndex.snapshot_exists(config.snapshot_path):
        count = index.load_snapshot(config.snapshot_path)
        logger.info("loaded snapshot with %d records", count)

    gateway = _build_gateway(config)
    web = _build_web(config)
    agent = Agent(index, web, gateway, result_limit=config.result_limit)

    sources: list[SourceDescriptor] = []
    sources_path = config.resolve(config.sources)
    if sources_path is not None and Path(sources_path).exists():
        sources = load_sources(sources_path)

    runtime = Runtime(
        config=config,
        index=index,
        gateway=gateway,
        web=web,
        agent=agent,
        fetcher=_build_fetcher(config),
        sources=sources,
    )
    runtime.load_source_state()
    return runtime
