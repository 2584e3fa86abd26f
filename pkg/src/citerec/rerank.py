"""Second-stage reranker over the head of the recall list.

The default scorer is a logistic model over cheap text-overlap features
plus the recall score and citation-intent interactions; it maps each
(query, intent, candidate) triple to a similarity in (0, 1). A pluggable
external scorer (line-delimited JSON over a child process) lets a heavier
model take the same inputs and return the same score without code changes.
"""

from __future__ import annotations

import json
import logging
import re
import select
import subprocess
from dataclasses import dataclass

import numpy as np

from .errors import SchemaMismatchError, ValidationError
from .intent import IntentLabel, intent_index
from .retrieval import RankedList

log = logging.getLogger(__name__)

_WORD_RE = re.compile(r"[a-z0-9]+")

FEATURE_SCHEMA_VERSION = 1
FEATURE_NAMES = (
    "recall_score",
    "context_candidate_f1",
    "citing_candidate_f1",
    "title_in_context",
    "intent_background",
    "intent_method",
    "intent_comparative",
    "interact_background",
    "interact_method",
    "interact_comparative",
)
N_FEATURES = len(FEATURE_NAMES)
# One-hot dims plus intent x overlap interactions.
INTENT_BLOCK = slice(4, 10)


@dataclass(frozen=True)
class RerankInput:
    """The reranker's declared inputs plus the first-stage score."""

    citing_abstract: str
    context: str
    intent: IntentLabel
    candidate_abstract: str
    recall_score: float
    candidate_title: str = ""

    def __post_init__(self):
        if not 0.0 <= self.recall_score <= 1.0:
            raise ValidationError("recall_score must lie in [0, 1]")


def _tokens(text: str) -> frozenset[str]:
    return frozenset(_WORD_RE.findall(text.lower()))


def overlap_f1(a: str, b: str) -> float:
    """Set-token F1: 2|A & B| / (|A| + |B|); empty-vs-anything is 0."""
    ta, tb = _tokens(a), _tokens(b)
    if not ta or not tb:
        return 0.0
    inter = len(ta & tb)
    return 2.0 * inter / (len(ta) + len(tb))


def featurize(inp: RerankInput) -> np.ndarray:
    """Fixed-length feature vector; the bias lives in the model."""
    ctx_cand = overlap_f1(inp.context, inp.candidate_abstract)
    phi = np.zeros(N_FEATURES)
    phi[0] = inp.recall_score
    phi[1] = ctx_cand
    phi[2] = overlap_f1(inp.citing_abstract, inp.candidate_abstract)
    title_tokens = _tokens(inp.candidate_title)
    if title_tokens and title_tokens <= _tokens(inp.context):
        phi[3] = 1.0
    k = intent_index(inp.intent)
    phi[4 + k] = 1.0
    phi[7 + k] = ctx_cand
    return phi


@dataclass(frozen=True)
class RerankModel:
    weights: np.ndarray
    bias: float = 0.0
    schema_version: int = FEATURE_SCHEMA_VERSION

    def __post_init__(self):
        if not np.all(np.isfinite(self.weights)) or not np.isfinite(self.bias):
            raise ValidationError("rerank model has non-finite parameters")

    @classmethod
    def zeros(cls) -> "RerankModel":
        return cls(weights=np.zeros(N_FEATURES), bias=0.0)

    def without_intent_block(self) -> "RerankModel":
        """Copy with the intent one-hot and interaction weights zeroed."""
        w = self.weights.copy()
        w[INTENT_BLOCK] = 0.0
        return RerankModel(weights=w, bias=self.bias,
                           schema_version=self.schema_version)


def _sigmoid(x: float) -> float:
    if x >= 0:
        return 1.0 / (1.0 + np.exp(-x))
    e = np.exp(x)
    return e / (1.0 + e)


def score_candidate(inp: RerankInput, model: RerankModel) -> float:
    """sigmoid(w . phi + b), clamped into the open interval (0, 1)."""
    if model.schema_version != FEATURE_SCHEMA_VERSION:
        raise SchemaMismatchError(
            f"model schema v{model.schema_version}, featurizer "
            f"v{FEATURE_SCHEMA_VERSION}")
    z = float(model.weights @ featurize(inp)) + model.bias
    s = _sigmoid(z)
    return float(min(max(s, 1e-12), 1.0 - 1e-12))


@dataclass
class RerankTrainResult:
    model: RerankModel
    epoch_losses: list[float]


def train_reranker(triples, negatives_per_positive: int = 5,
                   epochs: int = 200, lr: float = 2.0,
                   seed: int = 0) -> RerankTrainResult:
    """Binary cross-entropy over gold (label 1) vs sampled negatives (0).

    ``triples`` is a sequence of (positive RerankInput, candidate negative
    RerankInputs); up to ``negatives_per_positive`` negatives are sampled
    per positive. Full-batch gradient descent; epochs=0 returns the
    zero-initialized model.
    """
    triples = list(triples)
    if negatives_per_positive < 1:
        raise ValidationError("negatives_per_positive must be >= 1")
    rng = np.random.default_rng(seed)
    features = []
    labels = []
    for positive, negatives in triples:
        negatives = list(negatives)
        if not negatives:
            continue
        features.append(featurize(positive))
        labels.append(1.0)
        n_take = min(negatives_per_positive, len(negatives))
        for idx in rng.choice(len(negatives), size=n_take, replace=False):
            features.append(featurize(negatives[int(idx)]))
            labels.append(0.0)
    if not any(l == 1.0 for l in labels) or not any(l == 0.0 for l in labels):
        raise ValidationError(
            "training needs at least one positive with one negative")

    x = np.stack(features)
    y = np.asarray(labels)
    w = np.zeros(N_FEATURES)
    b = 0.0
    losses = []
    for _ in range(epochs):
        z = x @ w + b
        p = np.where(z >= 0, 1.0 / (1.0 + np.exp(-z)),
                     np.exp(z) / (1.0 + np.exp(z)))
        eps = 1e-12
        losses.append(float(-np.mean(y * np.log(p + eps)
                                     + (1 - y) * np.log(1 - p + eps))))
        grad = (p - y) / len(y)
        w -= lr * (x.T @ grad)
        b -= lr * float(grad.sum())
    return RerankTrainResult(model=RerankModel(weights=w, bias=b),
                             epoch_losses=losses)


def build_training_triples(queries, recall_lists, papers,
                           negative_rank_lo: int = 2,
                           negative_rank_hi: int = 100):
    """Assemble (positive, negatives) pairs from recall output.

    The positive is the gold paper with its recall score; negatives come
    from recall ranks [lo, hi] excluding the gold. Queries whose gold never
    made the recall list are skipped.
    """
    triples = []
    for q in queries:
        ranked = recall_lists[q.query_id] if isinstance(recall_lists, dict) \
            else recall_lists(q)
        gold_score = None
        negatives = []
        citing_abstract = papers[q.citing_id].abstract
        intent = q.intent if q.intent is not None else IntentLabel.BACKGROUND
        for rank, (pid, score) in enumerate(ranked, start=1):
            if pid == q.gold_id:
                gold_score = score
                continue
            if negative_rank_lo <= rank <= negative_rank_hi:
                cand = papers[pid]
                negatives.append(RerankInput(
                    citing_abstract=citing_abstract,
                    context=q.context,
                    intent=intent,
                    candidate_abstract=cand.abstract,
                    recall_score=score,
                    candidate_title=cand.title,
                ))
        if gold_score is None or not negatives:
            continue
        gold = papers[q.gold_id]
        positive = RerankInput(
            citing_abstract=citing_abstract,
            context=q.context,
            intent=intent,
            candidate_abstract=gold.abstract,
            recall_score=gold_score,
            candidate_title=gold.title,
        )
        triples.append((positive, negatives))
    return triples


def _candidate_input(q, pid, score, papers) -> RerankInput:
    cand = papers[pid]
    return RerankInput(
        citing_abstract=papers[q.citing_id].abstract,
        context=q.context,
        intent=q.intent if q.intent is not None else IntentLabel.BACKGROUND,
        candidate_abstract=cand.abstract,
        recall_score=score,
        candidate_title=cand.title,
    )


def rerank_list(recall: RankedList, query, model: RerankModel, n: int,
                papers) -> RankedList:
    """Rescore the top-n of the recall list and resort it.

    The output is a permutation of the top-n input entries with the
    reranker's scores attached.
    """
    if len(recall) == 0:
        raise ValidationError("cannot rerank an empty recall list")
    head = recall.entries[:n]
    rescored = [(pid, score_candidate(_candidate_input(query, pid, s, papers),
                                      model))
                for pid, s in head]
    return RankedList.from_scores(rescored)


class ExternalScorer:
    """Child-process scorer speaking one JSON object per line.

    Request: {"citing_abstract", "context", "intent", "candidate_abstract"}.
    Response: {"score": float in [0, 1]}. A timeout, a malformed line or an
    out-of-range score makes that candidate's score missing; the caller
    keeps such candidates in recall order at the tail.
    """

    def __init__(self, command, timeout: float = 5.0):
        self.command = list(command)
        self.timeout = timeout
        self._proc = None

    def __enter__(self):
        self._proc = subprocess.Popen(
            self.command, stdin=subprocess.PIPE, stdout=subprocess.PIPE,
            text=True, bufsize=1)
        return self

    def __exit__(self, *exc):
        self.close()

    def close(self):
        if self._proc is not None:
            try:
                self._proc.stdin.close()
            except OSError:
                pass
            self._proc.terminate()
            self._proc.wait(timeout=5)
            self._proc = None

    def score(self, inp: RerankInput) -> float | None:
        if self._proc is None or self._proc.poll() is not None:
            log.warning("external scorer process is not running")
            return None
        request = json.dumps({
            "citing_abstract": inp.citing_abstract,
            "context": inp.context,
            "intent": inp.intent.value,
            "candidate_abstract": inp.candidate_abstract,
        })
        try:
            self._proc.stdin.write(request + "\n")
            self._proc.stdin.flush()
        except (BrokenPipeError, OSError):
            log.warning("external scorer pipe closed")
            return None
        ready, _, _ = select.select([self._proc.stdout], [], [], self.timeout)
        if not ready:
            log.warning("external scorer timed out")
            return None
        line = self._proc.stdout.readline()
        if not line:
            return None
        try:
            obj = json.loads(line)
            score = float(obj["score"])
        except (json.JSONDecodeError, KeyError, TypeError, ValueError):
            log.warning("external scorer returned malformed line: %r",
                        line.strip()[:80])
            return None
        if not 0.0 <= score <= 1.0:
            log.warning("external scorer returned out-of-range score %r",
                        score)
            return None
        return score


def rerank_list_external(recall: RankedList, query, scorer: ExternalScorer,
                         n: int, papers) -> RankedList:
    """Like rerank_list but scored by an external process.

    Candidates with missing scores keep their recall order after all
    scored candidates.
    """
    if len(recall) == 0:
        raise ValidationError("cannot rerank an empty recall list")
    head = recall.entries[:n]
    scored = []
    failed = []
    for pid, s in head:
        value = scorer.score(_candidate_input(query, pid, s, papers))
        if value is None:
            failed.append(pid)
        else:
            scored.append((pid, value))
    ordered = sorted(scored, key=lambda kv: (-kv[1], kv[0]))
    floor = ordered[-1][1] if ordered else 1.0
    # Tail entries get strictly descending scores below the scored floor so
    # the RankedList ordering invariant still holds.
    tail = [(pid, floor - 1e-6 * (i + 1)) for i, pid in enumerate(failed)]
    return RankedList(entries=tuple(ordered + tail))
