"""Ranking metrics (MRR, R@K) and the pipeline evaluation harness.

Rank is 1-based. A gold paper missing from a (truncated) list contributes
0 to MRR and counts as a miss for every K, the standard convention for
prefetch evaluation at finite depth.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .corpus import Corpus
from .errors import ValidationError
from .rerank import RerankModel, rerank_list
from .retrieval import DocumentIndex, FusionWeights, RankedList, recall


def reciprocal_rank(ranked: RankedList, gold_id: str) -> float:
    rank = ranked.rank_of(gold_id)
    return 0.0 if rank is None else 1.0 / rank


def mrr(ranked_with_golds) -> float:
    """Mean reciprocal rank over (RankedList, gold id) pairs."""
    pairs = list(ranked_with_golds)
    if not pairs:
        raise ValidationError("mrr needs at least one query")
    return sum(reciprocal_rank(r, g) for r, g in pairs) / len(pairs)


def recall_at_k(ranked_with_golds, k: int) -> float:
    """Fraction of queries whose gold appears in the top k."""
    if k < 1:
        raise ValidationError("k must be >= 1")
    pairs = list(ranked_with_golds)
    if not pairs:
        raise ValidationError("recall_at_k needs at least one query")
    hits = 0
    for ranked, gold in pairs:
        rank = ranked.rank_of(gold)
        if rank is not None and rank <= k:
            hits += 1
    return hits / len(pairs)


@dataclass
class EvalResult:
    """Metrics plus the per-query gold ranks for auditing."""

    mrr: float
    recall_at: dict[int, float]
    query_count: int
    ranks: dict[str, int | None]

    def table(self) -> str:
        ks = sorted(self.recall_at)
        header = ["MRR"] + [f"R@{k}" for k in ks]
        values = [f"{self.mrr:.4f}"] + [f"{self.recall_at[k]:.4f}" for k in ks]
        width = max(len(h) for h in header + values) + 2
        return ("".join(h.rjust(width) for h in header) + "\n"
                + "".join(v.rjust(width) for v in values))


def evaluate_rankings(rankings: dict[str, RankedList], golds: dict[str, str],
                      k_values) -> EvalResult:
    """Score already-computed rankings against their gold ids."""
    if not rankings:
        raise ValidationError("nothing to evaluate")
    ranks: dict[str, int | None] = {}
    for qid in sorted(rankings):
        ranks[qid] = rankings[qid].rank_of(golds[qid])
    n = len(ranks)
    mrr_value = sum(0.0 if r is None else 1.0 / r
                    for r in ranks.values()) / n
    recall_at = {}
    for k in sorted(set(int(k) for k in k_values)):
        if k < 1:
            raise ValidationError("k must be >= 1")
        recall_at[k] = sum(1 for r in ranks.values()
                           if r is not None and r <= k) / n
    return EvalResult(mrr=mrr_value, recall_at=recall_at, query_count=n,
                      ranks=ranks)


def evaluate_pipeline(corpus: Corpus, index: DocumentIndex,
                      fusion: FusionWeights, k_values,
                      rerank_model: RerankModel | None = None,
                      rerank_depth: int = 100,
                      cf_alpha: float = 0.5,
                      threads: int = 1) -> EvalResult:
    """Run recall (and optionally reranking) over the corpus queries and
    score the final lists.

    Per-query work is independent, so threads > 1 parallelizes it without
    changing any score; aggregation always walks queries in sorted order.
    """
    k_values = sorted(set(int(k) for k in k_values))
    if not k_values:
        raise ValidationError("need at least one K value")
    depth = max(k_values + [rerank_depth if rerank_model else 1])

    def run_query(q):
        ranked = recall(q, index, fusion, k=depth, cf_alpha=cf_alpha)
        if rerank_model is not None and len(ranked) > 0:
            ranked = rerank_list(ranked, q, rerank_model, rerank_depth,
                                 index.papers)
        return ranked

    queries = sorted(corpus.queries, key=lambda q: q.query_id)
    if threads > 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(run_query, queries))
    else:
        results = [run_query(q) for q in queries]
    rankings = {q.query_id: r for q, r in zip(queries, results)}
    golds = {q.query_id: q.gold_id for q in queries}
    return evaluate_rankings(rankings, golds, k_values)


def paired_bootstrap(ranks_a, ranks_b, n_resamples: int = 2000,
                     seed: int = 0) -> dict:
    """Paired bootstrap over per-query reciprocal ranks.

    ranks_a / ranks_b map query id to a 1-based rank or None, as produced
    in EvalResult.ranks. Returns the observed MRR delta (a - b) and the
    fraction of resamples where system a does not beat system b.
    """
    qids = sorted(ranks_a)
    if sorted(ranks_b) != qids:
        raise ValidationError("paired bootstrap needs matching query sets")
    if not qids:
        raise ValidationError("paired bootstrap needs at least one query")
    rr_a = np.array([0.0 if ranks_a[q] is None else 1.0 / ranks_a[q]
                     for q in qids])
    rr_b = np.array([0.0 if ranks_b[q] is None else 1.0 / ranks_b[q]
                     for q in qids])
    observed = float(rr_a.mean() - rr_b.mean())
    rng = np.random.default_rng(seed)
    n = len(qids)
    worse = 0
    for _ in range(n_resamples):
        idx = rng.integers(0, n, size=n)
        if rr_a[idx].mean() - rr_b[idx].mean() <= 0.0:
            worse += 1
    return {"delta_mrr": observed, "p_worse": worse / n_resamples,
            "n_queries": n, "n_resamples": n_resamples}
