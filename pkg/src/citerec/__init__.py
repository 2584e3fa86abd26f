"""citerec: local citation recommendation and citation-quality scoring.

Recall fuses a small trained text encoder with two citation-network
collaborative-filtering signals; a feature reranker with citation-intent
interactions reorders the head of the list; a four-dimension weighted
rubric scores generated citation sentences.
"""

__version__ = "0.1.0"

from .citeval import (CitevalReport, DimensionWeights, build_judge_prompt,
                      composite_score, parse_judge_response, pearson_r,
                      stub_judge)
from .corpus import (CitationQuery, Corpus, PaperRecord, build_queries,
                     load_contexts, load_corpus, load_papers, validate_corpus)
from .encoder import (EncoderConfig, ParagraphInput, embed_document,
                      embed_paragraph, init_weights, multi_head_pool,
                      tokenize, train_encoder)
from .genprep import (CotRecord, GenerationRequest, PreferencePair,
                      build_cot_extraction_prompt, build_generation_prompt,
                      dpo_loss, export_preference_pairs, export_sft_records,
                      generate_citation)
from .graph import CfScores, CitationGraph, build_graph, cf_blend, \
    cscf_scores, sccf_scores
from .intent import (IntentLabel, IntentModel, classify_intent,
                     evaluate_intent, train_intent)
from .metrics import EvalResult, evaluate_pipeline, mrr, recall_at_k
from .persist import load_index, save_index
from .rerank import (RerankInput, RerankModel, featurize, rerank_list,
                     score_candidate, train_reranker)
from .retrieval import (DocumentIndex, FusionWeights, RankedList, build_index,
                        knn, recall)
from .synth import SynthSpec, generate, generate_intent_corpus, write_synth
