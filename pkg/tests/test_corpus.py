"""Corpus ingestion, query construction and validation."""

import json

import pytest

from citerec.corpus import (SLOT_MARKER, CitationQuery, Corpus, PaperRecord,
                            build_queries, load_contexts, load_papers,
                            validate_corpus, write_papers)
from citerec.errors import DuplicateIdError, ParseError, ValidationError

from conftest import make_paper


def write_lines(path, rows):
    with open(path, "w", encoding="utf-8") as fh:
        for row in rows:
            fh.write(json.dumps(row) + "\n")


class TestLoadPapers:
    def test_three_well_formed_lines(self, tmp_path):
        path = tmp_path / "papers.jsonl"
        write_lines(path, [
            {"id": "P1", "title": "t1", "abstract": "a1", "references": ["P2"]},
            {"id": "P2", "title": "t2", "abstract": "a2", "references": []},
            {"id": "P3", "title": "t3", "abstract": "a3", "references": ["P1", "P2"], "year": 2021},
        ])
        papers = load_papers(path)
        assert len(papers) == 3
        assert papers["P3"].references == {"P1", "P2"}
        assert papers["P3"].year == 2021
        assert papers["P2"].year is None

    def test_duplicate_id_is_an_error(self, tmp_path):
        path = tmp_path / "papers.jsonl"
        write_lines(path, [
            {"id": "P1", "title": "a", "abstract": "", "references": []},
            {"id": "P2", "title": "b", "abstract": "", "references": []},
            {"id": "P1", "title": "c", "abstract": "", "references": []},
        ])
        with pytest.raises(DuplicateIdError, match="P1"):
            load_papers(path)

    def test_empty_file_warns_and_returns_empty(self, tmp_path, caplog):
        path = tmp_path / "papers.jsonl"
        path.write_text("")
        with caplog.at_level("WARNING"):
            papers = load_papers(path)
        assert papers == {}
        assert any("empty" in r.message for r in caplog.records)

    def test_parse_error_carries_line_number(self, tmp_path):
        path = tmp_path / "papers.jsonl"
        path.write_text('{"id": "P1", "references": []}\nnot json\n')
        with pytest.raises(ParseError) as err:
            load_papers(path)
        assert err.value.line_no == 2

    def test_self_reference_dropped_with_warning(self, tmp_path, caplog):
        path = tmp_path / "papers.jsonl"
        write_lines(path, [{"id": "P1", "title": "", "abstract": "",
                            "references": ["P1", "P2"]}])
        with caplog.at_level("WARNING"):
            papers = load_papers(path)
        assert papers["P1"].references == {"P2"}

    def test_order_independent(self, tmp_path):
        rows = [
            {"id": "P1", "title": "a", "abstract": "x", "references": ["P2"]},
            {"id": "P2", "title": "b", "abstract": "y", "references": []},
            {"id": "P3", "title": "c", "abstract": "z", "references": ["P1"]},
        ]
        p1, p2 = tmp_path / "a.jsonl", tmp_path / "b.jsonl"
        write_lines(p1, rows)
        write_lines(p2, list(reversed(rows)))
        assert load_papers(p1) == load_papers(p2)


class TestPaperRecord:
    def test_empty_id_rejected(self):
        with pytest.raises(ValidationError):
            PaperRecord(id="", title="", abstract="", references=frozenset())

    def test_self_reference_rejected(self):
        with pytest.raises(ValidationError):
            make_paper("P1", refs=["P1"])


class TestBuildQueries:
    def test_leave_one_out_profile(self, tmp_path):
        papers = {p.id: p for p in [
            make_paper("P1", refs=["A", "B", "C"]),
            make_paper("A"), make_paper("B"), make_paper("C"),
        ]}
        path = tmp_path / "ctx.jsonl"
        write_lines(path, [{"query_id": "q1", "citing_id": "P1",
                            "context": "some context", "cited_id": "B"}])
        queries, dropped = build_queries(papers, load_contexts(path))
        assert dropped == 0
        assert queries[0].profile == {"A", "C"}
        assert queries[0].gold_id == "B"

    def test_empty_profile_query_is_kept(self, tmp_path):
        papers = {p.id: p for p in [make_paper("P2", refs=["B"]),
                                    make_paper("B")]}
        path = tmp_path / "ctx.jsonl"
        write_lines(path, [{"query_id": "q1", "citing_id": "P2",
                            "context": "ctx", "cited_id": "B"}])
        queries, dropped = build_queries(papers, load_contexts(path))
        assert len(queries) == 1 and dropped == 0
        assert queries[0].profile == frozenset()

    def test_unresolvable_gold_dropped_and_counted(self, tmp_path):
        papers = {p.id: p for p in [make_paper("P1", refs=["GONE"])]}
        path = tmp_path / "ctx.jsonl"
        write_lines(path, [{"query_id": "q1", "citing_id": "P1",
                            "context": "ctx", "cited_id": "GONE"}])
        queries, dropped = build_queries(papers, load_contexts(path))
        assert queries == [] and dropped == 1

    def test_unknown_citing_paper_is_an_error(self, tmp_path):
        path = tmp_path / "ctx.jsonl"
        write_lines(path, [{"query_id": "q1", "citing_id": "NOPE",
                            "context": "ctx", "cited_id": "B"}])
        with pytest.raises(ValidationError, match="NOPE"):
            build_queries({}, load_contexts(path))

    def test_unknown_mode_rejected(self):
        with pytest.raises(ValidationError):
            build_queries({}, [], mode="all-pairs")

    def test_split_context_joined_with_marker(self, tmp_path):
        papers = {p.id: p for p in [make_paper("P1", refs=["B"]),
                                    make_paper("B")]}
        path = tmp_path / "ctx.jsonl"
        write_lines(path, [{"query_id": "q1", "citing_id": "P1",
                            "text_before": "before part",
                            "text_after": "after part", "cited_id": "B"}])
        queries, _ = build_queries(papers, load_contexts(path))
        assert queries[0].context == f"before part {SLOT_MARKER} after part"


class TestCitationQueryInvariants:
    def test_gold_in_profile_rejected(self):
        with pytest.raises(ValidationError):
            CitationQuery(query_id="q", citing_id="P", context="c",
                          profile=frozenset({"B"}), gold_id="B")

    def test_empty_context_rejected(self):
        with pytest.raises(ValidationError):
            CitationQuery(query_id="q", citing_id="P", context="",
                          profile=frozenset(), gold_id="B")


class TestValidation:
    def test_dangling_references_flagged(self):
        corpus = Corpus(papers={p.id: p for p in [
            make_paper("P1", refs=["P2", "MISSING"]), make_paper("P2")]})
        report = validate_corpus(corpus)
        assert report.dangling_references == {"P1": ["MISSING"]}
        assert report.n_dangling == 1

    def test_write_then_load_round_trip(self, tmp_path):
        papers = {p.id: p for p in [
            make_paper("P1", refs=["P2"], abstract="alpha"),
            make_paper("P2", abstract="beta")]}
        path = tmp_path / "papers.jsonl"
        write_papers(papers, path)
        assert load_papers(path) == papers
