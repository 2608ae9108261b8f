"""Ingestion pipeline: crawl, page selection, extraction, source runs, cadence."""

from __future__ import annotations

from datetime import timedelta

import pytest
from hypothesis import given, strategies as st

from grantforge.corpus import SourceDescriptor, SourceKind
from grantforge.gateway import EXTRACT_FIELDS_PROMPT, ScriptedGateway, build_rank_urls_prompt
from grantforge.index import UnifiedIndex
from grantforge.ingest import (
    CRAWL_MAX_URLS,
    MAX_GRANT_PAGES,
    FetchError,
    FixtureFetcher,
    PageFetch,
    PipelineError,
    RefreshScheduler,
    due_for_refresh,
    enumerate_candidate_urls,
    extract_record,
    run_source,
    select_grant_pages,
)

from conftest import FIXED_NOW, fixed_clock, make_source

SITE = "https://site.example.org"


class GraphFetcher:
    """Protocol stub: link graph plus optional page bodies."""

    def __init__(self, graph: dict[str, list[str]], down: set[str] | None = None):
        self.graph = graph
        self.down = down or set()

    def fetch(self, url: str) -> PageFetch:
        if url in self.down:
            return PageFetch(url=url, body="", retrieved_at=FIXED_NOW, ok=False)
        return PageFetch(url=url, body=f"<html>{url}</html>", retrieved_at=FIXED_NOW, ok=True)

    def links(self, url: str) -> list[str]:
        return list(self.graph.get(url, []))

    def pages_for(self, source: SourceDescriptor) -> list[str]:
        return []


class TestEnumerate:
    def test_no_outlinks_returns_root_only(self):
        fetcher = GraphFetcher({SITE: []})
        assert enumerate_candidate_urls(SITE, fetcher) == [SITE]

    def test_twelve_internal_three_external_golden(self):
        # Hand-walked BFS: root expands to a,b,c; a to d,e,f,l; b to g,h;
        # c to i,j,k. External links are dropped; depth-2 URLs are collected
        # but not expanded.
        graph = {
            SITE: [f"{SITE}/c", f"{SITE}/a", f"{SITE}/b", "https://other.example.com/1"],
            f"{SITE}/a": [f"{SITE}/l", f"{SITE}/d", f"{SITE}/e", f"{SITE}/f"],
            f"{SITE}/b": [f"{SITE}/h", f"{SITE}/g", "https://other.example.com/2"],
            f"{SITE}/c": [f"{SITE}/k", f"{SITE}/i", f"{SITE}/j", "https://other.example.com/3"],
        }
        expected = [SITE] + [f"{SITE}/{p}" for p in ["a", "b", "c", "d", "e", "f", "l", "g", "h", "i", "j", "k"]]
        assert enumerate_candidate_urls(SITE, GraphFetcher(graph)) == expected

    def test_depth_two_urls_not_expanded(self):
        graph = {
            SITE: [f"{SITE}/a"],
            f"{SITE}/a": [f"{SITE}/b"],
            f"{SITE}/b": [f"{SITE}/too-deep"],
        }
        urls = enumerate_candidate_urls(SITE, GraphFetcher(graph))
        assert f"{SITE}/b" in urls
        assert f"{SITE}/too-deep" not in urls

    def test_root_failure_raises(self):
        with pytest.raises(FetchError):
            enumerate_candidate_urls(SITE, GraphFetcher({}, down={SITE}))

    def test_url_cap(self):
        graph = {SITE: [f"{SITE}/p{i:04d}" for i in range(400)]}
        urls = enumerate_candidate_urls(SITE, GraphFetcher(graph))
        assert len(urls) == CRAWL_MAX_URLS

    def test_fragments_stripped_and_deduped(self):
        graph = {SITE: [f"{SITE}/a#x", f"{SITE}/a#y", f"{SITE}/a"]}
        assert enumerate_candidate_urls(SITE, GraphFetcher(graph)) == [SITE, f"{SITE}/a"]


class TestSelectGrantPages:
    def test_scripted_rank_order(self):
        urls = [f"{SITE}/{p}" for p in ("a", "b", "c", "d")]
        want = [urls[2], urls[0], urls[3], urls[1]]
        gw = ScriptedGateway()
        gw.script(build_rank_urls_prompt(urls), (), "\n".join(want))
        assert select_grant_pages(urls, gw) == want

    def test_truncates_to_ten(self):
        urls = [f"{SITE}/p{i:02d}" for i in range(25)]
        gw = ScriptedGateway()
        gw.script(build_rank_urls_prompt(urls), (), "\n".join(urls))
        assert select_grant_pages(urls, gw) == urls[:MAX_GRANT_PAGES]

    def test_garbage_reply_falls_back_to_heuristic(self):
        urls = ["/about", "/grants/open", "/contact"]
        gw = ScriptedGateway()
        gw.script(build_rank_urls_prompt(urls), (), "sorry, I cannot rank those today")
        assert select_grant_pages(urls, gw) == ["/grants/open", "/about", "/contact"]

    def test_noscript_falls_back(self):
        urls = [f"{SITE}/apply", f"{SITE}/news"]
        assert select_grant_pages(urls, ScriptedGateway())[0] == f"{SITE}/apply"

    def test_ranked_urls_outside_input_dropped(self):
        urls = [f"{SITE}/a", f"{SITE}/b"]
        gw = ScriptedGateway()
        gw.script(build_rank_urls_prompt(urls), (), f"{SITE}/evil\n{SITE}/b\n{SITE}/a")
        assert select_grant_pages(urls, gw) == [f"{SITE}/b", f"{SITE}/a"]

    def test_empty_input_rejected(self):
        with pytest.raises(ValueError):
            select_grant_pages([], ScriptedGateway())

    @given(
        st.lists(
            st.text(st.sampled_from("abcdefg/"), min_size=1, max_size=10).map(lambda p: f"{SITE}/{p}"),
            min_size=1,
            max_size=40,
        )
    )
    def test_output_subset_and_capped(self, urls):
        out = select_grant_pages(urls, ScriptedGateway())
        assert len(out) <= MAX_GRANT_PAGES
        assert set(out) <= set(urls)


class TestExtractRecord:
    PAGE = PageFetch(
        url=f"{SITE}/grants/ai", body="<html><h1>AI Institutes</h1></html>",
        retrieved_at=FIXED_NOW, ok=True,
    )

    def test_scripted_reply_parsed(self):
        gw = ScriptedGateway()
        gw.script(
            EXTRACT_FIELDS_PROMPT,
            (self.PAGE.body,),
            "title: AI Institutes\nurl: https://nsf.gov/ai\nend_date: 2026-05-20\n",
        )
        draft = extract_record(self.PAGE, make_source(), gw)
        assert draft["title"] == "AI Institutes"
        assert draft["url"] == "https://nsf.gov/ai"
        assert draft["end_date"] == "2026-05-20"

    def test_missing_url_defaults_to_page(self):
        gw = ScriptedGateway()
        gw.script(EXTRACT_FIELDS_PROMPT, (self.PAGE.body,), "title: AI Institutes\n")
        draft = extract_record(self.PAGE, make_source(), gw)
        assert draft["url"] == self.PAGE.url

    def test_prose_reply_rejected(self):
        from grantforge.ingest import ExtractError

        gw = ScriptedGateway()
        gw.script(EXTRACT_FIELDS_PROMPT, (self.PAGE.body,), "this page has no grant on it")
        with pytest.raises(ExtractError):
            extract_record(self.PAGE, make_source(), gw)

    def test_failed_page_is_precondition_violation(self):
        bad = PageFetch(url=f"{SITE}/x", body="", retrieved_at=FIXED_NOW, ok=False)
        with pytest.raises(ValueError):
            extract_record(bad, make_source(), ScriptedGateway())


def build_mini_source(tmp_path, n_pages=5, broken_title: set[int] = frozenset()):
    """Tiny federal-style fixture source with scripted extraction replies."""
    pages_dir = tmp_path / "pages" / "mini"
    pages_dir.mkdir(parents=True, exist_ok=True)
    gw = ScriptedGateway()
    for i in range(n_pages):
        url = f"https://mini.example.gov/opps/p{i}"
        body = f"<html><body><h1>Program {i}</h1><p>desc {i}</p></body></html>\n"
        (pages_dir / FixtureFetcher.filename_for(url)).write_text(body, encoding="utf-8")
        if i in broken_title:
            reply = f"url: {url}\ndescription: page without a usable title\n"
        else:
            reply = f"title: Program {i}\nurl: {url}\ndescription: desc {i}\nend_date: 2030-01-15\n"
        gw.script(EXTRACT_FIELDS_PROMPT, (body,), reply)
    source = SourceDescriptor("mini", SourceKind.FEDERAL_PORTAL, "https://mini.example.gov", "NSF")
    fetcher = FixtureFetcher(tmp_path / "pages", clock=fixed_clock)
    return source, fetcher, gw


class TestRunSource:
    def test_fresh_ingest(self, tmp_path):
        source, fetcher, gw = build_mini_source(tmp_path)
        index = UnifiedIndex()
        report = run_source(source, fetcher, gw, index, clock=fixed_clock)
        assert (report.pages_seen, report.records_extracted, report.records_new) == (5, 5, 5)
        assert report.records_rejected == 0
        assert source.last_refreshed == FIXED_NOW
        assert len(index) == 5

    def test_rerun_is_idempotent(self, tmp_path):
        source, fetcher, gw = build_mini_source(tmp_path)
        index = UnifiedIndex()
        run_source(source, fetcher, gw, index, clock=fixed_clock)
        second = run_source(source, fetcher, gw, index, clock=fixed_clock)
        assert (second.records_new, second.records_updated, second.records_unchanged) == (0, 0, 5)

    def test_rerun_snapshot_bytes_identical(self, tmp_path):
        source, fetcher, gw = build_mini_source(tmp_path)
        index = UnifiedIndex()
        run_source(source, fetcher, gw, index, clock=fixed_clock)
        index.save_snapshot(tmp_path / "one")
        run_source(source, fetcher, gw, index, clock=fixed_clock)
        index.save_snapshot(tmp_path / "two")
        assert (tmp_path / "one.records.jsonl").read_bytes() == (tmp_path / "two.records.jsonl").read_bytes()

    def test_byte_identical_reports_for_identical_inputs(self, tmp_path):
        source_a, fetcher, gw = build_mini_source(tmp_path)
        report_a = run_source(source_a, fetcher, gw, UnifiedIndex(), clock=fixed_clock)
        source_b = SourceDescriptor("mini", SourceKind.FEDERAL_PORTAL, "https://mini.example.gov", "NSF")
        report_b = run_source(source_b, fetcher, gw, UnifiedIndex(), clock=fixed_clock)
        assert report_a == report_b

    def test_missing_title_counts_rejected(self, tmp_path):
        source, fetcher, gw = build_mini_source(tmp_path, broken_title={2})
        report = run_source(source, fetcher, gw, UnifiedIndex(), clock=fixed_clock)
        assert (report.records_extracted, report.records_rejected) == (4, 1)

    def test_noscript_extraction_counts_rejected_and_run_completes(self, tmp_path):
        source, fetcher, _ = build_mini_source(tmp_path)
        empty_gateway = ScriptedGateway()
        report = run_source(source, fetcher, empty_gateway, UnifiedIndex(), clock=fixed_clock)
        assert report.records_rejected == 5
        assert report.records_extracted == 0
        assert report.pages_seen == 5

    def test_conservation(self, tmp_path):
        source, fetcher, gw = build_mini_source(tmp_path, broken_title={0, 3})
        report = run_source(source, fetcher, gw, UnifiedIndex(), clock=fixed_clock)
        assert report.pages_seen >= report.records_extracted + report.records_rejected

    def test_foundation_root_failure_is_soft_skip(self):
        source = SourceDescriptor("fdn", SourceKind.FOUNDATION, SITE, "Foundation")
        fetcher = GraphFetcher({}, down={SITE})
        report = run_source(source, fetcher, ScriptedGateway(), UnifiedIndex(), clock=fixed_clock)
        assert report.pages_seen == 0
        assert any("skipped" in w for w in report.warnings)
        assert source.last_refreshed is None

    def test_total_fetch_failure_raises_pipeline_error(self, tmp_path):
        class DeadFetcher:
            def fetch(self, url):
                raise FetchError("connection refused")

            def links(self, url):
                return []

            def pages_for(self, source):
                return ["https://mini.example.gov/opps/p0"]

        source = SourceDescriptor("mini", SourceKind.FEDERAL_PORTAL, "https://mini.example.gov", "NSF")
        with pytest.raises(PipelineError):
            run_source(source, DeadFetcher(), ScriptedGateway(), UnifiedIndex(), clock=fixed_clock)

    def test_foundation_end_to_end_ingest(self, corpus_fetcher, corpus_gateway):
        source = SourceDescriptor(
            "found-alpha", SourceKind.FOUNDATION, "https://alpha-foundation.example.org/", "Foundation"
        )
        index = UnifiedIndex()
        report = run_source(source, corpus_fetcher, corpus_gateway, index, clock=fixed_clock)
        assert report.records_new == 9
        assert report.records_rejected == 0


class TestRefreshCadence:
    def test_never_refreshed_is_due(self):
        assert due_for_refresh(make_source(), FIXED_NOW) is True

    def test_overdue(self):
        src = make_source(last_refreshed=FIXED_NOW - timedelta(days=15))
        assert due_for_refresh(src, FIXED_NOW) is True

    def test_recent_not_due(self):
        src = make_source(last_refreshed=FIXED_NOW - timedelta(days=1))
        assert due_for_refresh(src, FIXED_NOW) is False

    def test_exact_interval_is_due(self):
        src = make_source(last_refreshed=FIXED_NOW - timedelta(days=14))
        assert due_for_refresh(src, FIXED_NOW) is True

    def test_custom_interval(self):
        src = make_source(last_refreshed=FIXED_NOW - timedelta(days=2), refresh_interval_days=1)
        assert due_for_refresh(src, FIXED_NOW) is True

    def test_interval_must_be_positive(self):
        with pytest.raises(ValueError):
            make_source(refresh_interval_days=0)


class TestScheduler:
    def test_runs_due_sources_once_then_skips(self, tmp_path):
        source, fetcher, gw = build_mini_source(tmp_path)
        index = UnifiedIndex()
        cycles: list[int] = []
        scheduler = RefreshScheduler(
            [source], fetcher, gw, index, tick_seconds=0.01, clock=fixed_clock,
            after_cycle=lambda reports: cycles.append(len(reports)),
        )
        first = scheduler.run_due_once()
        assert len(first) == 1 and first[0].records_new == 5
        second = scheduler.run_due_once()
        assert second == []
        assert cycles == [1]

    def test_thread_start_stop(self, tmp_path):
        source, fetcher, gw = build_mini_source(tmp_path)
        index = UnifiedIndex()
        scheduler = RefreshScheduler([source], fetcher, gw, index, tick_seconds=0.01, clock=fixed_clock)
        scheduler.start()
        scheduler.stop()
        assert scheduler._thread is None
        assert len(index) == 5  # first loop iteration ingested before stop

    def test_due_again_after_clock_advance(self, tmp_path):
        source, fetcher, gw = build_mini_source(tmp_path)
        now = {"t": FIXED_NOW}
        scheduler = RefreshScheduler(
            [source], fetcher, gw, UnifiedIndex(), tick_seconds=0.01, clock=lambda: now["t"]
        )
        assert len(scheduler.run_due_once()) == 1
        now["t"] = FIXED_NOW + timedelta(days=14)
        assert len(scheduler.run_due_once()) == 1


class TestFixtureFetcher:
    def test_missing_root_raises(self, tmp_path):
        with pytest.raises(FetchError):
            FixtureFetcher(tmp_path / "missing")

    def test_unknown_url_is_failed_fetch(self, corpus_fetcher):
        page = corpus_fetcher.fetch("https://nowhere.example.org/x")
        assert page.ok is False and page.body == ""

    def test_filename_round_trip(self):
        url = "https://a.gov/x?y=1&z=2"
        from urllib.parse import unquote

        assert unquote(FixtureFetcher.filename_for(url)) == url
