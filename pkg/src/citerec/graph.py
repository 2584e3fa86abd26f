"""Citation network and the two collaborative-filtering recall scorers.

ScCF votes through citing-side similarity: any paper whose reference set
overlaps the query profile casts a vote, weighted by cosine over binary
reference vectors, for everything it cites. CsCF scores candidates by
cosine over binary citer vectors against each profile member.

Both scorers accept an ``exclude`` id so the query's own citing paper can
be removed from the network per query, which keeps leave-one-out
evaluation honest (its reference list contains the gold edge).
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

from .corpus import Corpus

log = logging.getLogger(__name__)

ALGORITHMS = ("sccf", "cscf", "blended")


@dataclass(frozen=True)
class CitationGraph:
    """Directed citation adjacency with forward and inverse views.

    ``citers`` is the exact transpose of ``refs``. Reference lists keep
    dangling ids (targets outside the corpus); ``nodes`` holds only real
    papers, so dangling ids inflate denominators but never become
    candidates.
    """

    nodes: frozenset[str]
    refs: dict[str, tuple[str, ...]]
    citers: dict[str, tuple[str, ...]]

    def n_edges(self) -> int:
        return sum(len(v) for v in self.refs.values())


def build_graph(corpus) -> CitationGraph:
    """Build the graph from a Corpus or an id -> PaperRecord mapping."""
    papers = corpus.papers if isinstance(corpus, Corpus) else corpus
    refs: dict[str, tuple[str, ...]] = {}
    citers_acc: dict[str, list[str]] = {}
    for pid in sorted(papers):
        out = papers[pid].references
        if pid in out:
            # PaperRecord forbids this, but tolerate raw mappings.
            log.warning("dropping self-citation on %r", pid)
            out = out - {pid}
        ordered = tuple(sorted(out))
        refs[pid] = ordered
        for target in ordered:
            citers_acc.setdefault(target, []).append(pid)
    citers = {t: tuple(sorted(v)) for t, v in citers_acc.items()}
    return CitationGraph(nodes=frozenset(papers), refs=refs, citers=citers)


@dataclass(frozen=True)
class CfScores:
    """Sparse candidate scores; absent candidates implicitly score 0."""

    scores: dict[str, float]
    algorithm: str

    def __post_init__(self):
        if self.algorithm not in ALGORITHMS:
            raise ValueError(f"unknown CF algorithm {self.algorithm!r}")
        bad = [k for k, v in self.scores.items() if v < 0]
        if bad:
            raise ValueError(f"negative CF scores for {bad[:3]}")

    def ranking(self) -> list[tuple[str, float]]:
        return sorted(self.scores.items(), key=lambda kv: (-kv[1], kv[0]))


def sccf_scores(profile, graph: CitationGraph,
                exclude: str | None = None) -> CfScores:
    """Citing-side CF.

    score(c) = sum over voters A (papers sharing at least one reference
    with the profile, A != exclude) of
    |refs(A) & profile| / sqrt(|refs(A)| * |profile|), for each c in
    refs(A) that is a corpus paper outside the profile.
    """
    profile = frozenset(profile)
    scores: dict[str, float] = {}
    if not profile:
        return CfScores(scores={}, algorithm="sccf")
    voters: set[str] = set()
    for p in profile:
        voters.update(graph.citers.get(p, ()))
    voters.discard(exclude)
    for voter in sorted(voters):
        voter_refs = graph.refs.get(voter, ())
        overlap = sum(1 for r in voter_refs if r in profile)
        if overlap == 0 or not voter_refs:
            continue
        sim = overlap / math.sqrt(len(voter_refs) * len(profile))
        for cand in voter_refs:
            if cand in profile or cand == exclude or cand not in graph.nodes:
                continue
            scores[cand] = scores.get(cand, 0.0) + sim
    return CfScores(scores=scores, algorithm="sccf")


def cscf_scores(profile, graph: CitationGraph,
                exclude: str | None = None) -> CfScores:
    """Cited-side CF.

    score(e) = sum over profile members x of
    |citers(x) & citers(e)| / sqrt(|citers(x)| * |citers(e)|), with the
    excluded paper removed from every citer set. Terms with an empty citer
    set on either side contribute nothing.
    """
    profile = frozenset(profile)
    scores: dict[str, float] = {}
    if not profile:
        return CfScores(scores={}, algorithm="cscf")

    profile_citers: dict[str, frozenset[str]] = {}
    candidates: set[str] = set()
    for x in profile:
        cx = frozenset(c for c in graph.citers.get(x, ()) if c != exclude)
        profile_citers[x] = cx
        for citer in cx:
            for e in graph.refs.get(citer, ()):
                if e not in profile and e != exclude and e in graph.nodes:
                    candidates.add(e)

    for e in sorted(candidates):
        ce = frozenset(c for c in graph.citers.get(e, ()) if c != exclude)
        if not ce:
            continue
        total = 0.0
        for x in sorted(profile):
            cx = profile_citers[x]
            if not cx:
                continue
            inter = len(cx & ce)
            if inter:
                total += inter / math.sqrt(len(cx) * len(ce))
        if total > 0.0:
            scores[e] = total
    return CfScores(scores=scores, algorithm="cscf")


def _max_normalize(scores: dict[str, float]) -> dict[str, float]:
    # Scores are nonnegative and sparse (absent = 0), so min-max over the
    # candidate space reduces to dividing by the max.
    if not scores:
        return {}
    top = max(scores.values())
    if top <= 0.0:
        return dict(scores)
    return {k: v / top for k, v in scores.items()}


def cf_blend(sccf: CfScores, cscf: CfScores, alpha: float) -> CfScores:
    """Blend the two signals: alpha * norm(sccf) + (1 - alpha) * norm(cscf).

    Each side is max-normalized to [0, 1] first so neither scale dominates.
    Candidates whose blended score is zero are dropped.
    """
    if not 0.0 <= alpha <= 1.0:
        raise ValueError(f"alpha must be in [0, 1], got {alpha}")
    if sccf.algorithm != "sccf" or cscf.algorithm != "cscf":
        raise ValueError("cf_blend expects (sccf, cscf) score sets")
    ns = _max_normalize(sccf.scores)
    nc = _max_normalize(cscf.scores)
    blended: dict[str, float] = {}
    for cand in sorted(set(ns) | set(nc)):
        value = alpha * ns.get(cand, 0.0) + (1.0 - alpha) * nc.get(cand, 0.0)
        if value > 0.0:
            blended[cand] = value
    return CfScores(scores=blended, algorithm="blended")
