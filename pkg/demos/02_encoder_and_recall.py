"""Train the small document encoder and compare recall settings.

Generates a planted-cluster benchmark, trains the encoder with a cosine
triplet objective for a few epochs, then evaluates three recall modes:
encoder only, collaborative filtering only, and the weighted fusion.
"""

import time

from citerec.corpus import Corpus, build_queries
from citerec.encoder import EncoderConfig, train_encoder
from citerec.graph import build_graph
from citerec.metrics import evaluate_pipeline
from citerec.retrieval import FusionWeights, build_index
from citerec.synth import SynthSpec, generate

spec = SynthSpec(n_papers=120, n_clusters=3, seed=42)
data = generate(spec)
papers = {p.id: p for p in data.papers}
queries, _ = build_queries(papers, data.contexts)
corpus = Corpus(papers=papers, queries=queries)
print(f"benchmark: {len(papers)} papers, {len(queries)} citation slots")

config = EncoderConfig(seed=42)
started = time.time()
result = train_encoder(corpus, build_graph(corpus), config, epochs=10)
print(f"trained 10 epochs in {time.time() - started:.1f}s; "
      f"triplet loss {result.epoch_losses[0]:.4f} -> "
      f"{result.epoch_losses[-1]:.4f}")

index = build_index(corpus, result.weights, config)

print(f"\n{'setting':16s} {'MRR':>8s} {'R@10':>8s} {'R@100':>8s}")
for w1, w2, name in [(1.0, 0.0, "encoder only"),
                     (0.0, 1.0, "cf only"),
                     (0.8, 0.2, "fused")]:
    r = evaluate_pipeline(corpus, index, FusionWeights(w1, w2), [10, 100])
    print(f"{name:16s} {r.mrr:8.4f} {r.recall_at[10]:8.4f} "
          f"{r.recall_at[100]:8.4f}")

print("\nThe fused setting should sit at or above the encoder-only row:")
print("the network signal is complementary to the text signal.")
