"""Citation-intent classification and intent-aware reranking.

Trains the three-class intent classifier on a cue-word corpus, then shows
the reranker improving over raw recall, and the contribution of its
intent-interaction features (zeroing them costs accuracy).
"""

from citerec.corpus import Corpus, build_queries
from citerec.encoder import EncoderConfig, init_weights
from citerec.intent import predict_intent, train_intent
from citerec.metrics import evaluate_rankings
from citerec.rerank import build_training_triples, rerank_list, train_reranker
from citerec.retrieval import FusionWeights, build_index, recall
from citerec.synth import SynthSpec, generate, generate_intent_corpus

# Intent classifier ---------------------------------------------------------
sentences = generate_intent_corpus(300, seed=11)
trained = train_intent(sentences, epochs=40, batch_size=64, lr=1e-4,
                       n_buckets=1024, seed=11)
for text in ("outperforms the baseline by a wide margin",
             "we adopt the dataset and tools of prior work",
             "this line of work provides background on retrieval"):
    print(f"{predict_intent(text, trained.model).value:12s} <- {text!r}")

# Intent-aware reranking ----------------------------------------------------
data = generate(SynthSpec(n_papers=120, seed=1))
papers = {p.id: p for p in data.papers}
queries, _ = build_queries(papers, data.contexts)
corpus = Corpus(papers=papers, queries=queries)

config = EncoderConfig(seed=1)
index = build_index(corpus, init_weights(config), config)
fusion = FusionWeights(0.8, 0.2)
rankings = {q.query_id: recall(q, index, fusion, k=100) for q in queries}
golds = {q.query_id: q.gold_id for q in queries}

model = train_reranker(build_training_triples(queries, rankings, papers),
                       negatives_per_positive=5, epochs=200, seed=1).model

raw = evaluate_rankings(rankings, golds, [10])
with_intent = evaluate_rankings(
    {qid: rerank_list(rankings[qid], q, model, 100, papers)
     for qid, q in ((q.query_id, q) for q in queries)}, golds, [10])
zeroed_model = model.without_intent_block()
without_intent = evaluate_rankings(
    {qid: rerank_list(rankings[qid], q, zeroed_model, 100, papers)
     for qid, q in ((q.query_id, q) for q in queries)}, golds, [10])

print(f"\nrecall only     MRR {raw.mrr:.4f}")
print(f"rerank          MRR {with_intent.mrr:.4f}")
print(f"rerank, intent features zeroed   MRR {without_intent.mrr:.4f}")
print("\nIntent matters because the usefulness of context overlap differs")
print("by citation intent; the interaction features let the model weight")
print("it accordingly.")
