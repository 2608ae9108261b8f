"""Operator CLI: exit codes, report lines, query output, serve lifecycle."""

from __future__ import annotations

import json
import os
import signal
import socket
import subprocess
import sys
import time
from pathlib import Path

import httpx
import pytest

from grantforge.cli import main

from conftest import build_corpus_index, write_corpus_config
from oracle_bm25 import oracle_search


def run_cli(args: list[str]) -> int:
    return main(args)


def free_port() -> int:
    with socket.socket() as sock:
        sock.bind(("127.0.0.1", 0))
        return sock.getsockname()[1]


class TestIngestCommand:
    def test_fixture_ingest_reports_and_exit_zero(self, tmp_path, capsys, ground_truth):
        config = write_corpus_config(tmp_path)
        assert run_cli(["ingest", "--config", str(config), "--force"]) == 0
        out = capsys.readouterr().out
        for source_id, count in ground_truth["per_source"].items():
            assert f"{source_id}: pages_seen=" in out
            assert f"new={count}" in out

    def test_rerun_without_force_skips(self, tmp_path, capsys):
        config = write_corpus_config(tmp_path)
        run_cli(["ingest", "--config", str(config), "--force"])
        capsys.readouterr()
        assert run_cli(["ingest", "--config", str(config)]) == 0
        out = capsys.readouterr().out
        assert out.count("skipped (not due)") == 10

    def test_single_source_selection(self, tmp_path, capsys):
        config = write_corpus_config(tmp_path)
        assert run_cli(["ingest", "--config", str(config), "--source", "nsf-portal"]) == 0
        out = capsys.readouterr().out
        assert "nsf-portal" in out and "found-alpha" not in out

    def test_unknown_source_is_config_error(self, tmp_path):
        config = write_corpus_config(tmp_path)
        assert run_cli(["ingest", "--config", str(config), "--source", "nope"]) == 1

    def test_unreadable_config_exit_one(self, tmp_path):
        assert run_cli(["ingest", "--config", str(tmp_path / "missing.json")]) == 1

    def test_malformed_config_exit_one(self, tmp_path):
        bad = tmp_path / "bad.json"
        bad.write_text("{not json")
        assert run_cli(["ingest", "--config", str(bad)]) == 1

    def test_malformed_sources_exit_one(self, tmp_path):
        sources = tmp_path / "sources.json"
        sources.write_text('[{"kind": "fixture"}]')  # missing required fields
        config = write_corpus_config(tmp_path, sources=str(sources))
        assert run_cli(["ingest", "--config", str(config), "--force"]) == 1

    def test_refresh_state_persisted(self, tmp_path):
        config = write_corpus_config(tmp_path)
        run_cli(["ingest", "--config", str(config), "--force"])
        state = json.loads((tmp_path / "index.sources.json").read_text())
        assert set(state) == {
            "found-alpha", "found-beta", "found-gamma", "found-delta", "found-epsilon",
            "nsf-portal", "nih-portal", "doe-portal", "darpa-portal", "noaa-portal",
        }

    def test_env_var_config_fallback(self, tmp_path, monkeypatch, capsys):
        config = write_corpus_config(tmp_path)
        monkeypatch.setenv("GRANTFORGE_CONFIG", str(config))
        assert run_cli(["ingest", "--force"]) == 0
        assert "nsf-portal" in capsys.readouterr().out


class TestQueryCommand:
    @pytest.fixture()
    def snapshot_config(self, tmp_path) -> Path:
        config = write_corpus_config(tmp_path)
        run_cli(["ingest", "--config", str(config), "--force"])
        return config

    def test_order_matches_oracle(self, snapshot_config, capsys):
        # Independent ranking of the snapshot corpus via the brute-force scorer.
        docs = [(o.id, o.title, o.description) for o in build_corpus_index().all_records()]
        expected = [doc_id for doc_id, _ in oracle_search(docs, "climate adaptation irrigation")][:10]
        assert run_cli([
            "query", "--config", str(snapshot_config), "climate adaptation irrigation", "--json"
        ]) == 0
        lines = [json.loads(l) for l in capsys.readouterr().out.strip().splitlines()]
        assert [row["id"] for row in lines] == expected

    def test_limit_one(self, snapshot_config, capsys):
        assert run_cli(["query", "--config", str(snapshot_config), "climate", "--limit", "1"]) == 0
        out = capsys.readouterr().out.strip().splitlines()
        assert len(out) == 1

    def test_min_deadline_filters(self, snapshot_config, capsys):
        run_cli([
            "query", "--config", str(snapshot_config), "climate adaptation irrigation",
            "--min-deadline", "2030-01-01", "--json",
        ])
        rows = [json.loads(l) for l in capsys.readouterr().out.strip().splitlines()]
        assert rows
        for row in rows:
            assert row["end_date"] is None or row["end_date"] >= "2030-01-01"

    def test_zero_hits_exit_zero(self, snapshot_config, capsys):
        assert run_cli(["query", "--config", str(snapshot_config), "zzzzunknown"]) == 0
        assert "no results" in capsys.readouterr().out

    def test_json_output_is_stable(self, snapshot_config, capsys):
        run_cli(["query", "--config", str(snapshot_config), "climate", "--json"])
        first = capsys.readouterr().out
        run_cli(["query", "--config", str(snapshot_config), "climate", "--json"])
        second = capsys.readouterr().out
        assert first == second
        for line in first.strip().splitlines():
            json.loads(line)

    def test_missing_snapshot_exit_one(self, tmp_path):
        config = write_corpus_config(tmp_path)
        assert run_cli(["query", "--config", str(config), "climate"]) == 1

    def test_bad_min_deadline_exit_one(self, snapshot_config):
        assert run_cli([
            "query", "--config", str(snapshot_config), "climate", "--min-deadline", "next week"
        ]) == 1


class TestStatsCommand:
    def test_post_ingest_counts_match_ground_truth(self, tmp_path, capsys, ground_truth):
        config = write_corpus_config(tmp_path)
        run_cli(["ingest", "--config", str(config), "--force"])
        capsys.readouterr()
        assert run_cli(["stats", "--config", str(config)]) == 0
        out = capsys.readouterr().out
        assert f"doc_count: {ground_truth['total_records']}" in out
        for agency, count in ground_truth["per_agency"].items():
            assert f"{agency}: {count}" in out

    def test_missing_snapshot_exit_one(self, tmp_path):
        config = write_corpus_config(tmp_path)
        assert run_cli(["stats", "--config", str(config)]) == 1


class TestServeCommand:
    def start_server(self, config: Path, port: int) -> subprocess.Popen:
        env = dict(os.environ, PYTHONPATH=str(Path(__file__).resolve().parent.parent / "src"))
        return subprocess.Popen(
            [sys.executable, "-m", "grantforge", "serve", "--config", str(config), "--port", str(port)],
            stdout=subprocess.PIPE,
            stderr=subprocess.PIPE,
            env=env,
        )

    def wait_healthy(self, port: int, timeout: float = 15.0) -> dict:
        deadline = time.time() + timeout
        while time.time() < deadline:
            try:
                resp = httpx.get(f"http://127.0.0.1:{port}/v1/healthz", timeout=1.0)
                if resp.status_code == 200:
                    return resp.json()
            except httpx.HTTPError:
                time.sleep(0.1)
        raise TimeoutError("server never became healthy")

    def test_serve_health_and_clean_shutdown_saves_snapshot(self, tmp_path):
        config = write_corpus_config(
            tmp_path, scheduler={"enabled": True, "tick_seconds": 3600}
        )
        port = free_port()
        proc = self.start_server(config, port)
        try:
            body = self.wait_healthy(port)
            # Scheduler ingested the fixture corpus into the live index.
            deadline = time.time() + 15
            while body["doc_count"] < 60 and time.time() < deadline:
                time.sleep(0.2)
                body = httpx.get(f"http://127.0.0.1:{port}/v1/healthz", timeout=1.0).json()
            assert body["doc_count"] == 60
        finally:
            proc.send_signal(signal.SIGINT)
            proc.wait(timeout=15)
        assert (tmp_path / "index.records.jsonl").exists()
        lines = (tmp_path / "index.records.jsonl").read_text().strip().splitlines()
        assert len(lines) == 60

    def test_port_in_use_exit_one(self, tmp_path):
        config = write_corpus_config(tmp_path)
        port = free_port()
        blocker = socket.socket()
        blocker.bind(("127.0.0.1", port))
        blocker.listen(1)
        try:
            proc = self.start_server(config, port)
            rc = proc.wait(timeout=30)
            assert rc == 1
        finally:
            blocker.close()
