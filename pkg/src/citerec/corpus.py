"""Paper and citation-context data model plus line-delimited ingestion.

Papers and contexts arrive as JSON lines. Queries are built leave-one-out:
the citing paper's known references minus the held-out gold target form the
query's citation profile.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field

from .errors import DuplicateIdError, ParseError, ValidationError
from .intent import IntentLabel

log = logging.getLogger(__name__)

# Joins text_before / text_after context halves around the citation slot.
SLOT_MARKER = "[CITE]"


@dataclass(frozen=True)
class PaperRecord:
    """One paper: identifier, texts and outgoing reference ids.

    References may point outside the corpus (dangling); validation reports
    them and the candidate pool excludes them, but they still count toward
    collaborative-filtering denominators.
    """

    id: str
    title: str
    abstract: str
    references: frozenset[str]
    year: int | None = None

    def __post_init__(self):
        if not self.id:
            raise ValidationError("paper id must be non-empty")
        if self.id in self.references:
            raise ValidationError(f"paper {self.id!r} references itself")


@dataclass(frozen=True)
class CitationQuery:
    """One citation slot, leave-one-out: gold is held out of the profile."""

    query_id: str
    citing_id: str
    context: str
    profile: frozenset[str]
    gold_id: str
    intent: IntentLabel | None = None

    def __post_init__(self):
        if not self.context:
            raise ValidationError(f"query {self.query_id!r} has empty context")
        if self.gold_id in self.profile:
            raise ValidationError(
                f"query {self.query_id!r}: gold {self.gold_id!r} in profile")
        if self.citing_id in self.profile:
            raise ValidationError(
                f"query {self.query_id!r}: citing paper in its own profile")


@dataclass(frozen=True)
class ContextRecord:
    """Raw parsed contexts-file row, before query construction."""

    query_id: str
    citing_id: str
    context: str
    cited_id: str
    intent: IntentLabel | None = None


@dataclass
class Corpus:
    papers: dict[str, PaperRecord]
    queries: list[CitationQuery] = field(default_factory=list)


def _parse_json_line(path, line_no: int, line: str) -> dict:
    try:
        obj = json.loads(line)
    except json.JSONDecodeError as exc:
        raise ParseError(path, line_no, f"invalid JSON: {exc.msg}") from exc
    if not isinstance(obj, dict):
        raise ParseError(path, line_no, "record is not a JSON object")
    return obj


def load_papers(path) -> dict[str, PaperRecord]:
    """Parse a papers file (one JSON object per line) into an id -> record map.

    Duplicate ids are an error. Self-references are dropped with a warning.
    An empty file yields an empty map with a warning.
    """
    papers: dict[str, PaperRecord] = {}
    first_line: dict[str, int] = {}
    n_lines = 0
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            n_lines += 1
            obj = _parse_json_line(path, line_no, line)
            try:
                pid = str(obj["id"])
            except KeyError:
                raise ParseError(path, line_no, "missing field 'id'") from None
            if pid in papers:
                raise DuplicateIdError(pid, first_line[pid], line_no)
            refs = obj.get("references", [])
            if not isinstance(refs, list):
                raise ParseError(path, line_no, "'references' must be an array")
            refs = [str(r) for r in refs]
            if pid in refs:
                log.warning("paper %r lists itself as a reference; dropped", pid)
                refs = [r for r in refs if r != pid]
            year = obj.get("year")
            papers[pid] = PaperRecord(
                id=pid,
                title=str(obj.get("title", "")),
                abstract=str(obj.get("abstract", "")),
                references=frozenset(refs),
                year=int(year) if year is not None else None,
            )
            first_line[pid] = line_no
    if n_lines == 0:
        log.warning("papers file %s is empty", path)
    return papers


def load_contexts(path) -> list[ContextRecord]:
    """Parse a contexts file. Accepts either a single 'context' field or a
    text_before / text_after pair, joined around the slot marker."""
    records = []
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            obj = _parse_json_line(path, line_no, line)
            for key in ("query_id", "citing_id", "cited_id"):
                if key not in obj:
                    raise ParseError(path, line_no, f"missing field {key!r}")
            if "context" in obj:
                context = str(obj["context"])
            elif "text_before" in obj or "text_after" in obj:
                before = str(obj.get("text_before", "")).strip()
                after = str(obj.get("text_after", "")).strip()
                context = f"{before} {SLOT_MARKER} {after}".strip()
            else:
                raise ParseError(path, line_no,
                                 "need 'context' or text_before/text_after")
            intent = obj.get("intent")
            records.append(ContextRecord(
                query_id=str(obj["query_id"]),
                citing_id=str(obj["citing_id"]),
                context=context,
                cited_id=str(obj["cited_id"]),
                intent=IntentLabel.from_string(intent) if intent else None,
            ))
    if not records:
        log.warning("contexts file %s is empty", path)
    return records


def build_queries(papers: dict[str, PaperRecord], contexts,
                  mode: str = "leave-one-out"):
    """Turn context records into queries.

    profile = references(citing) minus the gold id. Contexts whose gold does
    not resolve in the corpus are dropped and counted; a context naming an
    unknown citing paper is an error.

    Returns (queries, dropped_count).
    """
    if mode != "leave-one-out":
        raise ValidationError(f"unknown query construction mode {mode!r}")
    queries = []
    dropped = 0
    for rec in contexts:
        if rec.citing_id not in papers:
            raise ValidationError(
                f"context {rec.query_id!r} names unknown citing paper "
                f"{rec.citing_id!r}")
        if rec.cited_id not in papers:
            dropped += 1
            continue
        refs = papers[rec.citing_id].references
        queries.append(CitationQuery(
            query_id=rec.query_id,
            citing_id=rec.citing_id,
            context=rec.context,
            profile=frozenset(refs - {rec.cited_id}),
            gold_id=rec.cited_id,
            intent=rec.intent,
        ))
    if dropped:
        log.warning("dropped %d queries with unresolvable gold ids", dropped)
    return queries, dropped


def load_corpus(papers_path, contexts_path=None) -> Corpus:
    papers = load_papers(papers_path)
    queries: list[CitationQuery] = []
    if contexts_path is not None:
        contexts = load_contexts(contexts_path)
        queries, _ = build_queries(papers, contexts)
    return Corpus(papers=papers, queries=queries)


@dataclass
class CorpusReport:
    n_papers: int
    n_queries: int
    dangling_references: dict[str, list[str]]

    @property
    def n_dangling(self) -> int:
        return sum(len(v) for v in self.dangling_references.values())


def validate_corpus(corpus: Corpus) -> CorpusReport:
    """Flag references that do not resolve within the corpus."""
    dangling: dict[str, list[str]] = {}
    for pid in sorted(corpus.papers):
        missing = sorted(r for r in corpus.papers[pid].references
                         if r not in corpus.papers)
        if missing:
            dangling[pid] = missing
    return CorpusReport(
        n_papers=len(corpus.papers),
        n_queries=len(corpus.queries),
        dangling_references=dangling,
    )


def paper_to_json(paper: PaperRecord) -> str:
    obj = {
        "id": paper.id,
        "title": paper.title,
        "abstract": paper.abstract,
        "references": sorted(paper.references),
    }
    if paper.year is not None:
        obj["year"] = paper.year
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def write_papers(papers, path) -> None:
    """Write papers as JSON lines, sorted by id for byte-stable output."""
    if isinstance(papers, dict):
        papers = [papers[pid] for pid in sorted(papers)]
    with open(path, "w", encoding="utf-8") as fh:
        for paper in papers:
            fh.write(paper_to_json(paper) + "\n")


def context_to_json(rec: ContextRecord) -> str:
    obj = {
        "query_id": rec.query_id,
        "citing_id": rec.citing_id,
        "context": rec.context,
        "cited_id": rec.cited_id,
    }
    if rec.intent is not None:
        obj["intent"] = rec.intent.value
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def write_contexts(records, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(context_to_json(rec) + "\n")
