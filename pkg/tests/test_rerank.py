"""Reranker features, scoring, training and the external-scorer boundary."""

import math
import sys

import numpy as np
import pytest

from citerec.errors import SchemaMismatchError, ValidationError
from citerec.intent import IntentLabel
from citerec.rerank import (FEATURE_NAMES, ExternalScorer, RerankInput,
                            RerankModel, build_training_triples, featurize,
                            overlap_f1, rerank_list, rerank_list_external,
                            score_candidate, train_reranker)
from citerec.retrieval import RankedList


def make_input(context="shared words here", candidate="shared words here",
               citing="a citing abstract", intent=IntentLabel.BACKGROUND,
               recall_score=0.5, title=""):
    return RerankInput(citing_abstract=citing, context=context,
                       intent=intent, candidate_abstract=candidate,
                       recall_score=recall_score, candidate_title=title)


class TestFeaturize:
    def test_identical_texts_give_unit_overlap(self):
        phi = featurize(make_input())
        assert phi[1] == pytest.approx(1.0)

    def test_disjoint_texts_give_zero_overlap(self):
        phi = featurize(make_input(context="alpha beta",
                                   candidate="gamma delta"))
        assert phi[1] == 0.0

    def test_method_one_hot(self):
        phi = featurize(make_input(intent=IntentLabel.METHOD))
        assert list(phi[4:7]) == [0.0, 1.0, 0.0]

    def test_interaction_carries_overlap_for_active_intent(self):
        phi = featurize(make_input(intent=IntentLabel.COMPARATIVE))
        assert phi[9] == phi[1]
        assert phi[7] == 0.0 and phi[8] == 0.0

    def test_title_in_context_indicator(self):
        hit = featurize(make_input(context="we build on spectral methods",
                                   title="spectral methods"))
        miss = featurize(make_input(context="we build on other things",
                                    title="spectral methods"))
        assert hit[3] == 1.0 and miss[3] == 0.0

    def test_recall_score_passes_through(self):
        phi = featurize(make_input(recall_score=0.37))
        assert phi[0] == pytest.approx(0.37)

    def test_feature_count_matches_schema(self):
        assert len(featurize(make_input())) == len(FEATURE_NAMES)

    def test_overlap_f1_is_symmetric(self):
        assert overlap_f1("a b c", "b c d") == overlap_f1("b c d", "a b c")

    def test_recall_score_range_enforced(self):
        with pytest.raises(ValidationError):
            make_input(recall_score=1.5)


class TestScoreCandidate:
    def test_zero_model_scores_half(self):
        assert score_candidate(make_input(), RerankModel.zeros()) == \
            pytest.approx(0.5)

    def test_logit_two_hand_value(self):
        # w . phi + b = 2 -> 1 / (1 + e^-2)
        model = RerankModel(weights=np.zeros(len(FEATURE_NAMES)), bias=2.0)
        assert score_candidate(make_input(), model) == \
            pytest.approx(1.0 / (1.0 + math.exp(-2.0)), abs=1e-9)

    def test_monotone_in_recall_score(self):
        w = np.zeros(len(FEATURE_NAMES))
        w[0] = 3.0
        model = RerankModel(weights=w)
        low = score_candidate(make_input(recall_score=0.2), model)
        high = score_candidate(make_input(recall_score=0.9), model)
        assert high > low

    def test_output_strictly_inside_unit_interval(self):
        model = RerankModel(weights=np.full(len(FEATURE_NAMES), 100.0),
                            bias=500.0)
        s = score_candidate(make_input(), model)
        assert 0.0 < s < 1.0

    def test_schema_mismatch_rejected(self):
        model = RerankModel(weights=np.zeros(len(FEATURE_NAMES)),
                            schema_version=99)
        with pytest.raises(SchemaMismatchError):
            score_candidate(make_input(), model)


def separable_triples(rng, n=40):
    """Positives share tokens with the context; negatives never do."""
    triples = []
    for i in range(n):
        cue = f"cue{i} marker{i}"
        pos = make_input(context=f"the context mentions {cue}",
                         candidate=f"analysis of {cue}", recall_score=0.9)
        negs = [make_input(context=f"the context mentions {cue}",
                           candidate=f"unrelated topic {j}",
                           recall_score=float(rng.uniform(0, 0.4)))
                for j in range(4)]
        triples.append((pos, negs))
    return triples


class TestTrainReranker:
    def test_zero_epochs_returns_zero_model(self):
        rng = np.random.default_rng(7)
        result = train_reranker(separable_triples(rng), epochs=0)
        assert np.all(result.model.weights == 0) and result.model.bias == 0

    def test_separable_features_reach_perfect_accuracy(self):
        rng = np.random.default_rng(7)
        triples = separable_triples(rng)
        result = train_reranker(triples, negatives_per_positive=4,
                                epochs=200, seed=7)
        model = result.model
        correct = 0
        total = 0
        for pos, negs in triples:
            correct += score_candidate(pos, model) > 0.5
            correct += sum(score_candidate(n, model) < 0.5 for n in negs)
            total += 1 + len(negs)
        assert correct == total
        assert result.epoch_losses[-1] < result.epoch_losses[0]

    def test_zero_negatives_per_positive_rejected(self):
        rng = np.random.default_rng(7)
        with pytest.raises(ValidationError):
            train_reranker(separable_triples(rng), negatives_per_positive=0)

    def test_empty_training_set_rejected(self):
        with pytest.raises(ValidationError):
            train_reranker([], negatives_per_positive=5)

    def test_training_is_deterministic(self):
        rng = np.random.default_rng(7)
        triples = separable_triples(rng)
        a = train_reranker(triples, epochs=50, seed=3)
        b = train_reranker(triples, epochs=50, seed=3)
        assert a.model.weights.tobytes() == b.model.weights.tobytes()
        assert a.model.bias == b.model.bias


class TestRerankList:
    def make_query(self, small_synth):
        corpus, _ = small_synth
        return corpus, corpus.queries[0]

    def recall_list(self, corpus, q, k=20):
        ids = [pid for pid in sorted(corpus.papers)
               if pid != q.citing_id and pid not in q.profile][:k]
        scores = np.linspace(1.0, 0.5, len(ids))
        return RankedList(entries=tuple(zip(ids, scores.tolist())))

    def test_output_is_permutation_of_head(self, small_synth):
        corpus, q = self.make_query(small_synth)
        ranked = self.recall_list(corpus, q)
        model = RerankModel.zeros()
        out = rerank_list(ranked, q, model, 10, corpus.papers)
        assert sorted(out.ids()) == sorted(ranked.ids()[:10])

    def test_single_entry_keeps_membership(self, small_synth):
        corpus, q = self.make_query(small_synth)
        ranked = self.recall_list(corpus, q, k=5)
        out = rerank_list(ranked, q, RerankModel.zeros(), 1, corpus.papers)
        assert out.ids() == (ranked.ids()[0],)

    def test_monotone_model_preserves_recall_order(self, small_synth):
        corpus, q = self.make_query(small_synth)
        ranked = self.recall_list(corpus, q)
        w = np.zeros(len(FEATURE_NAMES))
        w[0] = 5.0  # recall score through a monotone map
        out = rerank_list(ranked, q, RerankModel(weights=w), 10,
                          corpus.papers)
        assert out.ids() == ranked.ids()[:10]

    def test_deterministic(self, small_synth):
        corpus, q = self.make_query(small_synth)
        ranked = self.recall_list(corpus, q)
        w = np.arange(len(FEATURE_NAMES), dtype=np.float64) / 10.0
        model = RerankModel(weights=w)
        a = rerank_list(ranked, q, model, 15, corpus.papers)
        b = rerank_list(ranked, q, model, 15, corpus.papers)
        assert a.entries == b.entries

    def test_cue_token_lifts_gold_to_rank_one(self, small_synth):
        # On the synthetic corpus the method-intent contexts contain the
        # gold paper's signature tokens, so a reranker trained on cue
        # overlap puts the gold first even when recall buried it.
        corpus, _ = small_synth
        queries = [q for q in corpus.queries
                   if q.intent is IntentLabel.METHOD][:12]
        rng = np.random.default_rng(5)
        triples = []
        for q in queries:
            citing = corpus.papers[q.citing_id]
            gold = corpus.papers[q.gold_id]
            others = [pid for pid in sorted(corpus.papers)
                      if pid not in (q.citing_id, q.gold_id)][:6]
            pos = RerankInput(citing_abstract=citing.abstract,
                              context=q.context, intent=q.intent,
                              candidate_abstract=gold.abstract,
                              recall_score=0.4,
                              candidate_title=gold.title)
            negs = [RerankInput(citing_abstract=citing.abstract,
                                context=q.context, intent=q.intent,
                                candidate_abstract=corpus.papers[p].abstract,
                                recall_score=float(rng.uniform(0.5, 1.0)),
                                candidate_title=corpus.papers[p].title)
                    for p in others]
            triples.append((pos, negs))
        model = train_reranker(triples, negatives_per_positive=6,
                               epochs=300, seed=5).model
        for q in queries[:4]:
            pool = [q.gold_id] + [pid for pid in sorted(corpus.papers)
                                  if pid not in (q.citing_id, q.gold_id)][:6]
            # recall scores deliberately put the gold last
            entries = sorted(zip(pool, np.linspace(0.3, 0.9, len(pool))),
                             key=lambda kv: (-kv[1], kv[0]))
            ranked = RankedList(entries=tuple(
                (pid, float(s)) for pid, s in entries))
            out = rerank_list(ranked, q, model, len(pool), corpus.papers)
            assert out.ids()[0] == q.gold_id

    def test_intent_sensitivity(self):
        w = np.zeros(len(FEATURE_NAMES))
        w[7] = 2.0  # background x overlap interaction only
        model = RerankModel(weights=w)
        base = make_input(intent=IntentLabel.BACKGROUND)
        other = make_input(intent=IntentLabel.METHOD)
        assert score_candidate(base, model) != score_candidate(other, model)

    def test_empty_recall_rejected(self, small_synth):
        corpus, q = self.make_query(small_synth)
        with pytest.raises(ValidationError):
            rerank_list(RankedList(entries=()), q, RerankModel.zeros(), 5,
                        corpus.papers)


class TestBuildTrainingTriples:
    def test_negatives_come_from_requested_ranks(self, small_synth):
        corpus, _ = small_synth
        q = corpus.queries[0]
        ids = [pid for pid in sorted(corpus.papers)
               if pid != q.citing_id and pid not in q.profile]
        # put gold first so negatives start at rank 2
        ordered = [q.gold_id] + [p for p in ids if p != q.gold_id]
        scores = np.linspace(1.0, 0.1, len(ordered))
        rankings = {q.query_id: RankedList(entries=tuple(
            sorted(zip(ordered, scores.tolist()),
                   key=lambda kv: (-kv[1], kv[0]))))}
        triples = build_training_triples([q], rankings, corpus.papers,
                                         negative_rank_lo=2,
                                         negative_rank_hi=5)
        assert len(triples) == 1
        pos, negs = triples[0]
        assert pos.candidate_abstract == corpus.papers[q.gold_id].abstract
        assert len(negs) == 4

    def test_query_without_recalled_gold_skipped(self, small_synth):
        corpus, _ = small_synth
        q = corpus.queries[0]
        others = [pid for pid in sorted(corpus.papers)
                  if pid not in (q.citing_id, q.gold_id)][:5]
        rankings = {q.query_id: RankedList.from_scores(
            {pid: 1.0 - i * 0.1 for i, pid in enumerate(others)})}
        triples = build_training_triples([q], rankings, corpus.papers)
        assert triples == []


ECHO_SCORER = r"""
import json, sys
for line in sys.stdin:
    req = json.loads(line)
    n = len(req["candidate_abstract"])
    print(json.dumps({"score": min(1.0, n / 100.0)}), flush=True)
"""

FLAKY_SCORER = r"""
import json, sys
for line in sys.stdin:
    req = json.loads(line)
    if "poison" in req["candidate_abstract"]:
        print("not json at all", flush=True)
    else:
        print(json.dumps({"score": 0.5}), flush=True)
"""


class TestExternalScorer:
    def test_round_trip_scoring(self):
        with ExternalScorer([sys.executable, "-c", ECHO_SCORER],
                            timeout=10.0) as scorer:
            value = scorer.score(make_input(candidate="x" * 50))
            assert value == pytest.approx(0.5)

    def test_malformed_response_scores_none(self):
        with ExternalScorer([sys.executable, "-c", FLAKY_SCORER],
                            timeout=10.0) as scorer:
            assert scorer.score(make_input(candidate="poison pill")) is None
            assert scorer.score(make_input(candidate="fine")) == 0.5

    def test_failed_candidates_keep_recall_order_at_tail(self, small_synth):
        corpus, _ = small_synth
        q = corpus.queries[0]
        ids = [pid for pid in sorted(corpus.papers)
               if pid != q.citing_id and pid not in q.profile][:6]
        # poison the abstracts of two candidates via a lookup shim
        poisoned = {ids[1], ids[4]}
        papers = {}
        for pid in ids + [q.citing_id, q.gold_id]:
            rec = corpus.papers[pid]
            if pid in poisoned:
                from conftest import make_paper

                rec = make_paper(pid, abstract="poison " + rec.abstract,
                                 title=rec.title)
            papers[pid] = rec
        ranked = RankedList(entries=tuple(
            zip(ids, np.linspace(1.0, 0.5, len(ids)).tolist())))
        with ExternalScorer([sys.executable, "-c", FLAKY_SCORER],
                            timeout=10.0) as scorer:
            out = rerank_list_external(ranked, q, scorer, 6, papers)
        tail = list(out.ids())[-2:]
        assert tail == [pid for pid in ids if pid in poisoned]

    def test_timeout_gives_none(self):
        slow = ("import time, sys\n"
                "sys.stdin.readline()\n"
                "time.sleep(5)\n")
        with ExternalScorer([sys.executable, "-c", slow],
                            timeout=0.3) as scorer:
            assert scorer.score(make_input()) is None
