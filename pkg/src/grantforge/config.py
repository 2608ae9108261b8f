"""Process configuration: one JSON file, given by --config or GRANTFORGE_CONFIG.

Relative paths inside the file resolve against the file's own directory, so a
config can ship next to its fixtures.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from pathlib import Path

__all__ = ["AppConfig", "GatewayConfig", "WebSearchConfig", "SchedulerConfig", "load_config", "CONFIG_ENV_VAR"]

CONFIG_ENV_VAR = "GRANTFORGE_CONFIG"


@dataclass
class GatewayConfig:
    mode: str = "scripted"  # "scripted" | "http"
    script_path: str | None = None
    endpoint: str | None = None
    auth_token: str = ""
    model: str = ""
    timeout_s: float = 30.0


@dataclass
class WebSearchConfig:
    mode: str = "fixture"  # "fixture" | "http"
    fixture_path: str | None = None
    endpoint: str | None = None
    timeout_s: float = 15.0


@dataclass
class SchedulerConfig:
    enabled: bool = False
    tick_seconds: float = 3600.0


@dataclass
class AppConfig:
    snapshot: str
    port: int = 8080
    sources: str | None = None
    fetcher: str = "fixture"  # "fixture" | "http"
    fixture_root: str | None = None
    gateway: GatewayConfig = field(default_factory=GatewayConfig)
    web_search: WebSearchConfig = field(default_factory=WebSearchConfig)
    scheduler: SchedulerConfig = field(default_factory=SchedulerConfig)
    session_ttl_minutes: float = 120.0
    result_limit: int = 10
    ui_root: str | None = None
    config_dir: Path = field(default_factory=Path.cwd)

    def resolve(self, path: str | None) -> Path | None:
        if path is None:
            return None
        p = Path(path)
        return p if p.is_absolute() else (self.config_dir / p)

    @property
    def snapshot_path(self) -> Path:
        resolved = self.resolve(self.snapshot)
        assert resolved is not None
        return resolved

    @property
    def source_state_path(self) -> Path:
        base = self.snapshot_path
        return base.with_name(base.name + ".sources.json")


def resolve_config_path(explicit: str | None) -> Path:
    if explicit:
        return Path(explicit)
    env = os.environ.get(CONFIG_ENV_VAR)
    if env:
        return Path(env)
    raise FileNotFoundError(f"no --config given and {CONFIG_ENV_VAR} is not set")


def load_config(path: str | Path) -> AppConfig:
    path = Path(path)
    with open(path, "r", encoding="utf-8") as fh:
        raw = json.load(fh)
    if not isinstance(raw, dict):
        raise ValueError("config must be a JSON object")
    if "snapshot" not in raw:
        raise ValueError("config is missing required key 'snapshot'")

    try:
        gateway = GatewayConfig(**raw.get("gateway", {}))
        web_search = WebSearchConfig(**raw.get("web_search", {}))
        scheduler = SchedulerConfig(**raw.get("scheduler", {}))
    except TypeError as exc:
        raise ValueError(f"bad config block: {exc}") from exc
    return AppConfig(
        snapshot=str(raw["snapshot"]),
        port=int(raw.get("port", 8080)),
        sources=raw.get("sources"),
        fetcher=str(raw.get("fetcher", "fixture")),
        fixture_root=raw.get("fixture_root"),
        gateway=gateway,
        web_search=web_search,
        scheduler=scheduler,
        session_ttl_minutes=float(raw.get("session_ttl_minutes", 120.0)),
        result_limit=int(raw.get("result_limit", 10)),
        ui_root=raw.get("ui_root"),
        config_dir=path.resolve().parent,
    )
