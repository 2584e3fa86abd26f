"""Small token-level text helpers shared by the reranker and the rubric."""

from __future__ import annotations

import re

_WORD_RE = re.compile(r"[a-z0-9]+")

STOPWORDS = frozenset(
    "the a an of in on to and or is are was were we as for with by this "
    "that it be from at its their our".split()
)


def word_tokens(text: str) -> list[str]:
    return _WORD_RE.findall(text.lower())


def token_set(text: str) -> frozenset[str]:
    return frozenset(word_tokens(text))


def overlap_f1(a: str, b: str) -> float:
    """Set-token F1: 2|A & B| / (|A| + |B|); 0 when either side is empty."""
    ta, tb = token_set(a), token_set(b)
    if not ta or not tb:
        return 0.0
    return 2.0 * len(ta & tb) / (len(ta) + len(tb))
