"""Hierarchical text encoder producing the semantic recall signal.

Two stacked stages, all plain numpy with hand-written gradients:

* a paragraph encoder: hashed token embeddings, fixed sinusoidal positions,
  transformer layers, then multi-head attention pooling to one vector
  (per head j: scalar logits a_j^k, softmax over tokens, value vectors
  v_j^k, weighted sum; heads concatenated, ReLU, output projection);
* a document encoder: the title / abstract / context paragraph vectors get
  learned type embeddings added, pass through further transformer layers
  and a second pooling stage, and are L2-normalized so cosine similarity
  is a dot product.

Training minimizes a cosine triplet hinge with plain SGD. Everything is
seed-deterministic and single-threaded.
"""

from __future__ import annotations

import math
import re
import zlib
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .corpus import Corpus
from .errors import ValidationError

_WORD_RE = re.compile(r"[a-z0-9]+")

# Paragraph roles; the document encoder adds one learned vector per role.
PTYPE_TITLE = 0
PTYPE_ABSTRACT = 1
PTYPE_CONTEXT = 2

EMPTY_TOKEN_ID = 0
_LN_EPS = 1e-5
_NORM_EPS = 1e-12
_FF_MULT = 2  # feed-forward hidden width as a multiple of d_model


@dataclass(frozen=True)
class EncoderConfig:
    d_model: int = 64
    n_heads: int = 4
    n_layers_paragraph: int = 1
    n_layers_document: int = 1
    vocab_buckets: int = 4096
    max_tokens: int = 128
    seed: int = 0
    positional: bool = True

    def __post_init__(self):
        for name in ("d_model", "n_heads", "n_layers_paragraph",
                     "n_layers_document", "vocab_buckets", "max_tokens"):
            if getattr(self, name) < 1:
                raise ValidationError(f"{name} must be >= 1")
        if self.d_model % self.n_heads != 0:
            raise ValidationError("d_model must be divisible by n_heads")

    @property
    def head_dim(self) -> int:
        return self.d_model // self.n_heads

    @property
    def ff_hidden(self) -> int:
        return _FF_MULT * self.d_model


@dataclass(frozen=True)
class ParagraphInput:
    tokens: tuple[int, ...]
    ptype: int

    def __post_init__(self):
        if len(self.tokens) == 0:
            raise ValidationError("paragraph token sequence must be non-empty")
        if self.ptype not in (PTYPE_TITLE, PTYPE_ABSTRACT, PTYPE_CONTEXT):
            raise ValidationError(f"unknown paragraph type {self.ptype}")


def tokenize(text: str, config: EncoderConfig) -> list[int]:
    """Lowercase, split on non-alphanumerics, hash into vocab buckets.

    Bucket 0 is reserved for the empty paragraph; empty text maps to it.
    Output is truncated to ``max_tokens``.
    """
    words = _WORD_RE.findall(text.lower())
    if not words:
        return [EMPTY_TOKEN_ID]
    n_hash = config.vocab_buckets - 1
    ids = [zlib.crc32(w.encode("utf-8")) % n_hash + 1 for w in words]
    return ids[:config.max_tokens]


def paragraph_input(text: str, ptype: int, config: EncoderConfig) -> ParagraphInput:
    return ParagraphInput(tokens=tuple(tokenize(text, config)), ptype=ptype)


def empty_context_paragraph() -> ParagraphInput:
    """Reserved stand-in used when a document has no local context."""
    return ParagraphInput(tokens=(EMPTY_TOKEN_ID,), ptype=PTYPE_CONTEXT)


def document_inputs(title: str, abstract: str, context: str | None,
                    config: EncoderConfig):
    """Build the (title, abstract, context) paragraph triple for a document."""
    ctx = (paragraph_input(context, PTYPE_CONTEXT, config)
           if context is not None else empty_context_paragraph())
    return (paragraph_input(title, PTYPE_TITLE, config),
            paragraph_input(abstract, PTYPE_ABSTRACT, config),
            ctx)


@lru_cache(maxsize=512)
def _positional_encoding(n: int, d: int) -> np.ndarray:
    pos = np.arange(n, dtype=np.float64)[:, None]
    dim = np.arange(d, dtype=np.float64)[None, :]
    angle = pos / np.power(10000.0, (2.0 * (dim // 2)) / d)
    pe = np.where(dim % 2 == 0, np.sin(angle), np.cos(angle))
    pe.setflags(write=False)
    return pe


# ---------------------------------------------------------------------------
# Parameters
# ---------------------------------------------------------------------------

def _layer_param_spec(prefix: str, d: int, f: int):
    return [
        (prefix + "Wq", (d, d)), (prefix + "bq", (d,)),
        (prefix + "Wk", (d, d)), (prefix + "bk", (d,)),
        (prefix + "Wv", (d, d)), (prefix + "bv", (d,)),
        (prefix + "Wo", (d, d)), (prefix + "bo", (d,)),
        (prefix + "ln1_g", (d,)), (prefix + "ln1_b", (d,)),
        (prefix + "ffW1", (d, f)), (prefix + "ffb1", (f,)),
        (prefix + "ffW2", (f, d)), (prefix + "ffb2", (d,)),
        (prefix + "ln2_g", (d,)), (prefix + "ln2_b", (d,)),
    ]


def _pool_param_spec(prefix: str, d: int, h: int):
    return [
        (prefix + "Wa", (d, h)), (prefix + "ba", (h,)),
        (prefix + "Wv", (d, d)), (prefix + "bv", (d,)),
        (prefix + "Wp", (d, d)), (prefix + "bp", (d,)),
    ]


def weight_spec(config: EncoderConfig):
    """Ordered (name, shape) list covering every learned parameter."""
    d, f, h = config.d_model, config.ff_hidden, config.n_heads
    spec = [("tok_emb", (config.vocab_buckets, d)), ("type_emb", (3, d))]
    for i in range(config.n_layers_paragraph):
        spec += _layer_param_spec(f"para{i}.", d, f)
    spec += _pool_param_spec("para_pool.", d, h)
    for i in range(config.n_layers_document):
        spec += _layer_param_spec(f"doc{i}.", d, f)
    spec += _pool_param_spec("doc_pool.", d, h)
    return spec


def init_weights(config: EncoderConfig) -> dict[str, np.ndarray]:
    """Seeded initial weights: gains one, biases zero, matrices Gaussian."""
    rng = np.random.default_rng(config.seed)
    weights = {}
    for name, shape in weight_spec(config):
        leaf = name.rsplit(".", 1)[-1]
        if leaf.endswith("_g"):
            weights[name] = np.ones(shape)
        elif leaf.startswith("b") or leaf.endswith("_b") or leaf.startswith("ffb"):
            weights[name] = np.zeros(shape)
        elif name in ("tok_emb", "type_emb"):
            weights[name] = rng.normal(0.0, 1.0, size=shape)
        else:
            weights[name] = rng.normal(0.0, 0.1, size=shape)
    return weights


def _zero_grads(weights: dict[str, np.ndarray]) -> dict[str, np.ndarray]:
    return {name: np.zeros_like(arr) for name, arr in weights.items()}


# ---------------------------------------------------------------------------
# Building blocks: forward passes return (output, cache)
# ---------------------------------------------------------------------------

def _ln_forward(x, gain, bias):
    mu = x.mean(axis=-1, keepdims=True)
    xm = x - mu
    var = (xm * xm).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + _LN_EPS)
    xhat = xm * inv
    return xhat * gain + bias, (xhat, inv, gain)


def _ln_backward(dout, cache, grads, name):
    xhat, inv, gain = cache
    grads[name + "_g"] += (dout * xhat).sum(axis=0)
    grads[name + "_b"] += dout.sum(axis=0)
    dxhat = dout * gain
    m1 = dxhat.mean(axis=-1, keepdims=True)
    m2 = (dxhat * xhat).mean(axis=-1, keepdims=True)
    return inv * (dxhat - m1 - xhat * m2)


def _attn_forward(x, w, p, n_heads):
    n, d = x.shape
    hd = d // n_heads
    q = x @ w[p + "Wq"] + w[p + "bq"]
    k = x @ w[p + "Wk"] + w[p + "bk"]
    v = x @ w[p + "Wv"] + w[p + "bv"]
    qh = q.reshape(n, n_heads, hd).transpose(1, 0, 2)
    kh = k.reshape(n, n_heads, hd).transpose(1, 0, 2)
    vh = v.reshape(n, n_heads, hd).transpose(1, 0, 2)
    scores = qh @ kh.swapaxes(1, 2) / math.sqrt(hd)
    scores -= scores.max(axis=-1, keepdims=True)
    e = np.exp(scores)
    attn = e / e.sum(axis=-1, keepdims=True)
    oh = attn @ vh
    o = oh.transpose(1, 0, 2).reshape(n, d)
    out = o @ w[p + "Wo"] + w[p + "bo"]
    return out, (x, qh, kh, vh, attn, o)


def _attn_backward(dout, cache, w, p, grads, n_heads):
    x, qh, kh, vh, attn, o = cache
    n, d = x.shape
    hd = d // n_heads
    grads[p + "Wo"] += o.T @ dout
    grads[p + "bo"] += dout.sum(axis=0)
    do = dout @ w[p + "Wo"].T
    doh = do.reshape(n, n_heads, hd).transpose(1, 0, 2)
    dattn = doh @ vh.swapaxes(1, 2)
    dvh = attn.swapaxes(1, 2) @ doh
    dscores = attn * (dattn - (dattn * attn).sum(axis=-1, keepdims=True))
    dscores /= math.sqrt(hd)
    dqh = dscores @ kh
    dkh = dscores.swapaxes(1, 2) @ qh
    dq = dqh.transpose(1, 0, 2).reshape(n, d)
    dk = dkh.transpose(1, 0, 2).reshape(n, d)
    dv = dvh.transpose(1, 0, 2).reshape(n, d)
    grads[p + "Wq"] += x.T @ dq
    grads[p + "bq"] += dq.sum(axis=0)
    grads[p + "Wk"] += x.T @ dk
    grads[p + "bk"] += dk.sum(axis=0)
    grads[p + "Wv"] += x.T @ dv
    grads[p + "bv"] += dv.sum(axis=0)
    return dq @ w[p + "Wq"].T + dk @ w[p + "Wk"].T + dv @ w[p + "Wv"].T


def _ffn_forward(x, w, p):
    pre = x @ w[p + "ffW1"] + w[p + "ffb1"]
    r = np.maximum(pre, 0.0)
    out = r @ w[p + "ffW2"] + w[p + "ffb2"]
    return out, (x, pre > 0, r)


def _ffn_backward(dout, cache, w, p, grads):
    x, mask, r = cache
    grads[p + "ffW2"] += r.T @ dout
    grads[p + "ffb2"] += dout.sum(axis=0)
    dr = dout @ w[p + "ffW2"].T
    dpre = dr * mask
    grads[p + "ffW1"] += x.T @ dpre
    grads[p + "ffb1"] += dpre.sum(axis=0)
    return dpre @ w[p + "ffW1"].T


def _layer_forward(x, w, p, n_heads):
    attn_out, attn_cache = _attn_forward(x, w, p, n_heads)
    h1, ln1_cache = _ln_forward(x + attn_out, w[p + "ln1_g"], w[p + "ln1_b"])
    ff_out, ff_cache = _ffn_forward(h1, w, p)
    out, ln2_cache = _ln_forward(h1 + ff_out, w[p + "ln2_g"], w[p + "ln2_b"])
    return out, (attn_cache, ln1_cache, ff_cache, ln2_cache)


def _layer_backward(dout, cache, w, p, grads, n_heads):
    attn_cache, ln1_cache, ff_cache, ln2_cache = cache
    dr2 = _ln_backward(dout, ln2_cache, grads, p + "ln2")
    dh1 = dr2 + _ffn_backward(dr2, ff_cache, w, p, grads)
    dr1 = _ln_backward(dh1, ln1_cache, grads, p + "ln1")
    return dr1 + _attn_backward(dr1, attn_cache, w, p, grads, n_heads)


def _pool_forward(x, w, p, n_heads):
    n, d = x.shape
    hd = d // n_heads
    logits = x @ w[p + "Wa"] + w[p + "ba"]          # (n, heads)
    shifted = logits - logits.max(axis=0, keepdims=True)
    e = np.exp(shifted)
    attn = e / e.sum(axis=0, keepdims=True)         # softmax over tokens
    values = x @ w[p + "Wv"] + w[p + "bv"]          # (n, d), head blocks
    v3 = values.reshape(n, n_heads, hd)
    pooled = np.einsum("kj,kjh->jh", attn, v3)      # (heads, hd)
    concat = pooled.reshape(d)
    r = np.maximum(concat, 0.0)
    out = r @ w[p + "Wp"] + w[p + "bp"]
    return out, (x, attn, v3, concat > 0, r)


def _pool_backward(dout, cache, w, p, grads, n_heads):
    x, attn, v3, relu_mask, r = cache
    n, d = x.shape
    hd = d // n_heads
    grads[p + "Wp"] += np.outer(r, dout)
    grads[p + "bp"] += dout
    dconcat = (dout @ w[p + "Wp"].T) * relu_mask
    dpooled = dconcat.reshape(n_heads, hd)
    dattn = np.einsum("jh,kjh->kj", dpooled, v3)
    dv3 = attn[:, :, None] * dpooled[None, :, :]
    dvalues = dv3.reshape(n, d)
    dlogits = attn * (dattn - (dattn * attn).sum(axis=0, keepdims=True))
    grads[p + "Wa"] += x.T @ dlogits
    grads[p + "ba"] += dlogits.sum(axis=0)
    grads[p + "Wv"] += x.T @ dvalues
    grads[p + "bv"] += dvalues.sum(axis=0)
    return dlogits @ w[p + "Wa"].T + dvalues @ w[p + "Wv"].T


# ---------------------------------------------------------------------------
# Paragraph and document encoders
# ---------------------------------------------------------------------------

def _paragraph_forward(tokens, weights, config: EncoderConfig):
    ids = np.asarray(tokens, dtype=np.int64)
    if config.positional:
        x = weights["tok_emb"][ids] + _positional_encoding(len(ids),
                                                           config.d_model)
    else:
        # Without positions the encoder is a set function; a canonical
        # token order makes permutation invariance hold bit-for-bit.
        ids = np.sort(ids)
        x = weights["tok_emb"][ids].copy()
    layer_caches = []
    for i in range(config.n_layers_paragraph):
        x, cache = _layer_forward(x, weights, f"para{i}.", config.n_heads)
        layer_caches.append(cache)
    out, pool_cache = _pool_forward(x, weights, "para_pool.", config.n_heads)
    return out, (ids, layer_caches, pool_cache)


def _paragraph_backward(dout, cache, weights, config, grads):
    ids, layer_caches, pool_cache = cache
    dx = _pool_backward(dout, pool_cache, weights, "para_pool.", grads,
                        config.n_heads)
    for i in reversed(range(config.n_layers_paragraph)):
        dx = _layer_backward(dx, layer_caches[i], weights, f"para{i}.",
                             grads, config.n_heads)
    np.add.at(grads["tok_emb"], ids, dx)


_SLOT_PTYPES = (PTYPE_TITLE, PTYPE_ABSTRACT, PTYPE_CONTEXT)


def _document_forward(paragraphs, weights, config: EncoderConfig):
    for slot, (para, expected) in enumerate(zip(paragraphs, _SLOT_PTYPES)):
        if para.ptype != expected:
            raise ValidationError(
                f"document slot {slot} expects paragraph type {expected}, "
                f"got {para.ptype}")
    outs = []
    para_caches = []
    for para in paragraphs:
        out, cache = _paragraph_forward(para.tokens, weights, config)
        outs.append(out)
        para_caches.append(cache)
    x = np.stack(outs) + weights["type_emb"]
    layer_caches = []
    for i in range(config.n_layers_document):
        x, cache = _layer_forward(x, weights, f"doc{i}.", config.n_heads)
        layer_caches.append(cache)
    pooled, pool_cache = _pool_forward(x, weights, "doc_pool.",
                                       config.n_heads)
    norm = max(float(np.linalg.norm(pooled)), _NORM_EPS)
    embedding = pooled / norm
    return embedding, (para_caches, layer_caches, pool_cache, embedding, norm)


def _document_backward(dout, cache, weights, config, grads):
    para_caches, layer_caches, pool_cache, embedding, norm = cache
    dpooled = (dout - embedding * float(embedding @ dout)) / norm
    dx = _pool_backward(dpooled, pool_cache, weights, "doc_pool.", grads,
                        config.n_heads)
    for i in reversed(range(config.n_layers_document)):
        dx = _layer_backward(dx, layer_caches[i], weights, f"doc{i}.",
                             grads, config.n_heads)
    grads["type_emb"] += dx
    for slot in range(3):
        _paragraph_backward(dx[slot], para_caches[slot], weights, config,
                            grads)


# Public inference API ------------------------------------------------------

def multi_head_pool(x: np.ndarray, weights, config: EncoderConfig,
                    prefix: str = "para_pool.") -> np.ndarray:
    """Pool a (tokens, d_model) matrix to a single d_model vector."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] == 0:
        raise ValidationError("multi_head_pool needs a non-empty 2-D input")
    out, _ = _pool_forward(x, weights, prefix, config.n_heads)
    return out


def pool_attention_weights(x: np.ndarray, weights, config: EncoderConfig,
                           prefix: str = "para_pool.") -> np.ndarray:
    """Per-head pooling attention, shape (tokens, heads); columns sum to 1."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] == 0:
        raise ValidationError("pooling needs a non-empty 2-D input")
    logits = x @ weights[prefix + "Wa"] + weights[prefix + "ba"]
    shifted = logits - logits.max(axis=0, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=0, keepdims=True)


def embed_paragraph(para: ParagraphInput, weights,
                    config: EncoderConfig) -> np.ndarray:
    out, _ = _paragraph_forward(para.tokens, weights, config)
    return out


def embed_document(title: ParagraphInput, abstract: ParagraphInput,
                   context: ParagraphInput, weights,
                   config: EncoderConfig) -> np.ndarray:
    """Unit-norm document embedding from the three typed paragraphs."""
    out, _ = _document_forward((title, abstract, context), weights, config)
    return out


def embed_query_document(citing, context: str, weights,
                         config: EncoderConfig) -> np.ndarray:
    """Embed a query as (citing title, citing abstract, local context)."""
    title, abstract, ctx = document_inputs(citing.title, citing.abstract,
                                           context, config)
    return embed_document(title, abstract, ctx, weights, config)


def embed_paper_document(paper, weights, config: EncoderConfig) -> np.ndarray:
    """Embed a candidate paper; candidates use the empty context slot."""
    title, abstract, ctx = document_inputs(paper.title, paper.abstract,
                                           None, config)
    return embed_document(title, abstract, ctx, weights, config)


# ---------------------------------------------------------------------------
# Triplet training
# ---------------------------------------------------------------------------

def triplet_loss_and_grads(weights, config: EncoderConfig, anchor, positive,
                           negative, margin: float):
    """Hinge loss max(0, margin - cos(a, p) + cos(a, n)) and its gradients.

    Each of anchor / positive / negative is a (title, abstract, context)
    paragraph triple. Gradients cover every entry of ``weights``.
    """
    ea, ca = _document_forward(anchor, weights, config)
    ep, cp = _document_forward(positive, weights, config)
    en, cn = _document_forward(negative, weights, config)
    loss = margin - float(ea @ ep) + float(ea @ en)
    grads = _zero_grads(weights)
    if loss <= 0.0:
        return 0.0, grads
    _document_backward(en - ep, ca, weights, config, grads)
    _document_backward(-ea, cp, weights, config, grads)
    _document_backward(ea, cn, weights, config, grads)
    return loss, grads


def triplet_loss(weights, config: EncoderConfig, anchor, positive, negative,
                 margin: float) -> float:
    ea, _ = _document_forward(anchor, weights, config)
    ep, _ = _document_forward(positive, weights, config)
    en, _ = _document_forward(negative, weights, config)
    return max(0.0, margin - float(ea @ ep) + float(ea @ en))


@dataclass
class EncoderTrainResult:
    weights: dict[str, np.ndarray]
    epoch_losses: list[float]


def train_encoder(corpus: Corpus, graph, config: EncoderConfig, epochs: int,
                  margin: float = 0.2, lr: float = 0.05) -> EncoderTrainResult:
    """Train with per-query triplets: anchor = query document, positive =
    gold paper, negative = a random paper outside the query's known
    citations. epochs=0 returns the seeded initial weights unchanged.
    """
    del graph  # candidate exclusion needs only the query profile
    weights = init_weights(config)
    usable = [q for q in corpus.queries if q.gold_id in corpus.papers]
    if epochs > 0 and not usable:
        raise ValidationError("no trainable queries with resolvable gold ids")

    paper_ids = sorted(corpus.papers)
    paper_docs = {}
    query_docs = {}
    for pid in paper_ids:
        paper = corpus.papers[pid]
        paper_docs[pid] = document_inputs(paper.title, paper.abstract, None,
                                          config)
    for q in usable:
        citing = corpus.papers[q.citing_id]
        query_docs[q.query_id] = document_inputs(citing.title,
                                                 citing.abstract,
                                                 q.context, config)

    rng = np.random.default_rng([config.seed, 7])
    epoch_losses = []
    for _ in range(epochs):
        order = rng.permutation(len(usable))
        total = 0.0
        for qi in order:
            q = usable[qi]
            banned = q.profile | {q.gold_id, q.citing_id}
            if len(banned) >= len(paper_ids):
                continue  # no negative exists for this query
            neg_id = None
            while neg_id is None:
                pick = paper_ids[int(rng.integers(len(paper_ids)))]
                if pick not in banned:
                    neg_id = pick
            loss, grads = triplet_loss_and_grads(
                weights, config, query_docs[q.query_id],
                paper_docs[q.gold_id], paper_docs[neg_id], margin)
            total += loss
            if loss > 0.0:
                for name in weights:
                    weights[name] -= lr * grads[name]
        epoch_losses.append(total / len(usable))
    return EncoderTrainResult(weights=weights, epoch_losses=epoch_losses)
