"""Scoring generated citation sentences with the four-dimension rubric,
plus the generation-side data plumbing.

The rubric weighs purpose-driven articulation, semantic accuracy,
contextual fit and information density (published coefficients
0.35 / 0.25 / 0.25 / 0.20, normalized to a weighted mean). The stub judge
is a deterministic token-overlap heuristic, useful for plumbing tests and
offline runs; a remote chat-completion judge plugs in via environment
variables.
"""

import math
import tempfile
from pathlib import Path

from citerec.citeval import (DEFAULT_WEIGHTS, JudgeRunner, build_judge_prompt,
                             composite_score, stub_judge)
from citerec.genprep import (CotRecord, GenerationRequest, PreferencePair,
                             StubGenerationBackend, build_cot_extraction_prompt,
                             dpo_loss, export_preference_pairs,
                             export_sft_records, generate_citation)
from citerec.intent import IntentLabel

citing = ("we study fast recall for citation recommendation using "
          "citation networks and a small document encoder")
context = "graph based recall methods [CITE] scale to large corpora"
cited = ("a fast partitioning algorithm for large citation graphs with "
         "provable guarantees")

req = GenerationRequest(citing_abstract=citing, context=context,
                        intent=IntentLabel.METHOD, cited_abstract=cited)
sentence = generate_citation(req, StubGenerationBackend())
print(f"stub generation: {sentence!r}")

report = stub_judge(citing, context, IntentLabel.METHOD, cited, sentence)
print("\nrubric scores (stub judge, overlap heuristics):")
for name in ("purpose", "accuracy", "context_fit", "density"):
    print(f"  {name:12s} {getattr(report, name):6.1f}")
print(f"  {'composite':12s} {report.composite:6.1f}")
print(f"weights: {[round(w, 4) for w in DEFAULT_WEIGHTS.as_tuple()]} "
      f"(sum {math.fsum(DEFAULT_WEIGHTS.as_tuple())})")
print(f"composite of equal 90s: {composite_score((90, 90, 90, 90)):.1f}")

runner = JudgeRunner(backend="stub")
runner.score(citing, context, IntentLabel.METHOD, cited, sentence)
print(f"judge accounting: {runner.n_parsed} parsed + {runner.n_failed} "
      f"failed = {runner.n_requests} requests")

prompt = build_judge_prompt(citing, context, IntentLabel.METHOD, cited,
                            sentence)
print(f"\njudge prompt is {len(prompt)} chars; first lines:")
print("\n".join(prompt.splitlines()[:3]))

# Generation-side training files --------------------------------------------
print("\ncot extraction prompt names both fields:",
      all(k in build_cot_extraction_prompt(citing, cited)
          for k in ("themes", "keywords")))

with tempfile.TemporaryDirectory() as tmp:
    sft_path = Path(tmp) / "sft.jsonl"
    cot = CotRecord(themes=("citation graphs",), keywords=("recall",),
                    reasoning="both papers deal with graph-scale recall",
                    citation=sentence)
    sft = export_sft_records([(req, cot)], sft_path)
    pairs_path = Path(tmp) / "pairs.jsonl"
    pairs = export_preference_pairs(
        [PreferencePair(prompt="p", winner="a precise citation",
                        loser="a vague citation")], pairs_path)
    print(f"exported {sft.written} supervised record(s), "
          f"{pairs.written} preference pair(s)")

margins = [0.0, 0.5, 2.0]
print("pairwise preference loss by reward margin:",
      {m: round(dpo_loss([m]), 4) for m in margins})
