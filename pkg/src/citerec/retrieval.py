"""Recall stage: exact cosine search fused with collaborative filtering.

The fused score is s_encoder * w1 + s_cf * w2 with both signals min-max
normalized over the query's candidate pool first; the two raw signals live
on incompatible scales (cosine vs. CF vote sums), so normalization is what
makes the weights meaningful.
"""

from __future__ import annotations

import hashlib
import logging
from dataclasses import dataclass, field

import numpy as np

from .corpus import CitationQuery, Corpus, PaperRecord
from .encoder import (EncoderConfig, embed_paper_document,
                      embed_query_document, weight_spec)
from .errors import ValidationError
from .graph import CitationGraph, build_graph, cf_blend, cscf_scores, sccf_scores

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class FusionWeights:
    """Convex weights for the encoder and CF signals."""

    w1: float = 0.8
    w2: float = 0.2

    def __post_init__(self):
        if self.w1 < 0 or self.w2 < 0:
            raise ValidationError("fusion weights must be non-negative")
        if abs(self.w1 + self.w2 - 1.0) > 1e-9:
            raise ValidationError("fusion weights must sum to 1")


@dataclass(frozen=True)
class RankedList:
    """Ordered (paper id, score) pairs: scores non-increasing, ties broken
    by ascending id, no duplicate ids."""

    entries: tuple[tuple[str, float], ...]

    def __post_init__(self):
        seen = set()
        prev = None
        for pid, score in self.entries:
            if pid in seen:
                raise ValidationError(f"duplicate id {pid!r} in ranking")
            seen.add(pid)
            if prev is not None:
                prev_score, prev_id = prev
                if score > prev_score or (score == prev_score and pid < prev_id):
                    raise ValidationError("ranking order violated")
            prev = (score, pid)

    @classmethod
    def from_scores(cls, pairs, k: int | None = None) -> "RankedList":
        if isinstance(pairs, dict):
            pairs = pairs.items()
        ordered = sorted(pairs, key=lambda kv: (-kv[1], kv[0]))
        if k is not None:
            ordered = ordered[:k]
        return cls(entries=tuple((pid, float(s)) for pid, s in ordered))

    def ids(self) -> tuple[str, ...]:
        return tuple(pid for pid, _ in self.entries)

    def rank_of(self, paper_id: str) -> int | None:
        for rank, (pid, _) in enumerate(self.entries, start=1):
            if pid == paper_id:
                return rank
        return None

    def __len__(self) -> int:
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)


@dataclass
class DocumentIndex:
    """Searchable store: unit-norm document embeddings plus the citation
    graph, the encoder weights that produced them, and the source texts.

    Weights and embeddings are float32, the on-disk precision, so a
    save/load round trip is exact.
    """

    ids: tuple[str, ...]
    embeddings: np.ndarray
    graph: CitationGraph
    papers: dict[str, PaperRecord]
    config: EncoderConfig
    weights: dict[str, np.ndarray]
    config_fingerprint: str = ""
    weights_fingerprint: str = ""
    _row: dict[str, int] = field(default_factory=dict, repr=False)
    _weights64: dict[str, np.ndarray] | None = field(default=None, repr=False)

    def __post_init__(self):
        if len(self.ids) != self.embeddings.shape[0]:
            raise ValidationError("embedding row count != id count")
        self._row = {pid: i for i, pid in enumerate(self.ids)}
        if not self.config_fingerprint:
            self.config_fingerprint = config_fingerprint(self.config)
        if not self.weights_fingerprint:
            self.weights_fingerprint = weights_fingerprint(self.weights)

    def row_of(self, paper_id: str) -> int:
        return self._row[paper_id]

    @property
    def compute_weights(self) -> dict[str, np.ndarray]:
        """float64 view of the stored float32 weights, for encoding."""
        if self._weights64 is None:
            self._weights64 = {k: v.astype(np.float64)
                               for k, v in self.weights.items()}
        return self._weights64


def config_fingerprint(config: EncoderConfig) -> str:
    blob = repr(sorted(vars(config).items())).encode("utf-8")
    return hashlib.sha256(blob).hexdigest()[:16]


def weights_fingerprint(weights: dict[str, np.ndarray]) -> str:
    digest = hashlib.sha256()
    for name in sorted(weights):
        digest.update(name.encode("utf-8"))
        digest.update(np.ascontiguousarray(weights[name],
                                           dtype=np.float32).tobytes())
    return digest.hexdigest()[:16]


def build_index(corpus: Corpus, weights, config: EncoderConfig) -> DocumentIndex:
    """Embed every paper (empty context slot) and assemble the index."""
    expected = {name for name, _ in weight_spec(config)}
    if set(weights) != expected:
        raise ValidationError("weights do not match the encoder config")
    weights32 = {k: np.ascontiguousarray(v, dtype=np.float32)
                 for k, v in weights.items()}
    weights64 = {k: v.astype(np.float64) for k, v in weights32.items()}
    ids = tuple(sorted(corpus.papers))
    rows = np.zeros((len(ids), config.d_model), dtype=np.float32)
    for i, pid in enumerate(ids):
        rows[i] = embed_paper_document(corpus.papers[pid], weights64, config)
    index = DocumentIndex(
        ids=ids,
        embeddings=rows,
        graph=build_graph(corpus),
        papers=dict(corpus.papers),
        config=config,
        weights=weights32,
    )
    index._weights64 = weights64
    return index


def knn(query_vector: np.ndarray, index: DocumentIndex, k: int) -> RankedList:
    """Exact top-k by cosine similarity over the full index."""
    if k < 1:
        raise ValidationError("k must be >= 1")
    if k > len(index.ids):
        log.warning("k=%d exceeds corpus size %d; returning full ranking",
                    k, len(index.ids))
        k = len(index.ids)
    sims = index.embeddings @ np.asarray(query_vector, dtype=np.float64)
    return RankedList.from_scores(zip(index.ids, sims.tolist()), k=k)


def _minmax(values: np.ndarray) -> np.ndarray:
    lo = float(values.min())
    hi = float(values.max())
    if hi - lo <= 0.0:
        return np.zeros_like(values)
    return (values - lo) / (hi - lo)


def recall(query: CitationQuery, index: DocumentIndex,
           fusion: FusionWeights, k: int,
           cf_alpha: float = 0.5) -> RankedList:
    """Fused recall for one query.

    The candidate pool excludes the citing paper and every profile member.
    Encoder cosine and blended CF scores are min-max normalized over the
    pool, combined with the fusion weights, and the top-k is returned.
    """
    if k < 1:
        raise ValidationError("k must be >= 1")
    if query.citing_id not in index.papers:
        raise ValidationError(
            f"query {query.query_id!r} cites unknown paper "
            f"{query.citing_id!r}")
    excluded = set(query.profile) | {query.citing_id}
    pool = [pid for pid in index.ids if pid not in excluded]
    if not pool:
        return RankedList(entries=())

    q_vec = embed_query_document(index.papers[query.citing_id], query.context,
                                 index.compute_weights, index.config)
    pool_rows = np.array([index.row_of(pid) for pid in pool])
    enc = index.embeddings[pool_rows] @ q_vec

    blended = cf_blend(
        sccf_scores(query.profile, index.graph, exclude=query.citing_id),
        cscf_scores(query.profile, index.graph, exclude=query.citing_id),
        cf_alpha,
    )
    cf = np.array([blended.scores.get(pid, 0.0) for pid in pool])

    fused = fusion.w1 * _minmax(enc) + fusion.w2 * _minmax(cf)
    return RankedList.from_scores(zip(pool, fused.tolist()), k=k)
