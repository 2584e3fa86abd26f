"""CITEVAL: four-dimension citation-quality scoring with an LLM judge.

Each citation sentence is scored 0-100 on purpose-driven articulation,
semantic accuracy, contextual fit and information density, then the four
scores are combined into a weighted composite. The published rubric
coefficients are 0.35 / 0.25 / 0.25 / 0.20; they total 1.05, so the
composite divides by that total (a weighted mean). This matches the scale
the rubric's reported composites live on and keeps the composite inside
[0, 100]; see DimensionWeights.

One judge call covers all four dimensions. A deterministic stub judge
(pure token-overlap heuristics, no semantics) backs tests and offline
runs.
"""

from __future__ import annotations

import json
import logging
import math
import re
from dataclasses import dataclass, field

import numpy as np

from .errors import ValidationError
from .textutil import STOPWORDS, overlap_f1, word_tokens

log = logging.getLogger(__name__)

DIMENSIONS = ("purpose", "accuracy", "context_fit", "density")

DIMENSION_TITLES = {
    "purpose": "Purpose-driven Articulation",
    "accuracy": "Semantic Accuracy",
    "context_fit": "Contextual Fit",
    "density": "Information Density",
}

# Published rubric coefficients, in DIMENSIONS order. They sum to 1.05.
RUBRIC_COEFFICIENTS = (0.35, 0.25, 0.25, 0.20)

# Scoring bands, quoted from the rubric.
RUBRIC_BANDS = {
    "purpose": (
        ("90-100", "Directly supports core arguments, forming indispensable logical closure."),
        ("80-89", "Effectively addresses main research questions, enhancing credibility."),
        ("70-79", "Provides relevant background without direct support."),
        ("60-69", "Partial relevance with limited argumentative value."),
        ("0-59", "Severe deviation or misleading content."),
    ),
    "accuracy": (
        ("90-100", "Fully preserves key elements with 100% term accuracy."),
        ("80-89", "No core content distortion, reasonable simplification of minor parameters."),
        ("70-79", "Non-critical phrasing differences."),
        ("60-69", "Important concept/data inaccuracies."),
        ("0-59", "Substantive errors or fabricated content."),
    ),
    "context_fit": (
        ("90-100", "Seamlessly embedded, significantly enhances reading efficiency."),
        ("80-89", "Smooth transitions without comprehension barriers."),
        ("70-79", "Requires moderate cognitive adjustment."),
        ("60-69", "Causes localized logical disruptions."),
        ("0-59", "Severely compromises textual coherence."),
    ),
    "density": (
        ("90-100", "Pareto-optimal compression (balance of completeness and conciseness)."),
        ("80-89", "Lossless compression of core information."),
        ("70-79", "Non-essential redundancy present."),
        ("60-69", "Critical omissions or oversimplification."),
        ("0-59", "Severe information density imbalance."),
    ),
}


@dataclass(frozen=True)
class DimensionWeights:
    """Composite weights, normalized so they sum to exactly 1.0.

    Constructed from the raw rubric coefficients; the final weight is
    computed as 1 minus the others so the total is exact, not just close.
    """

    purpose: float
    accuracy: float
    context_fit: float
    density: float

    def __post_init__(self):
        values = self.as_tuple()
        if any(v < 0 for v in values):
            raise ValidationError("dimension weights must be non-negative")
        if abs(math.fsum(values) - 1.0) > 1e-9:
            raise ValidationError(
                f"dimension weights must sum to 1.0, got {math.fsum(values)!r}")

    @classmethod
    def from_coefficients(cls, purpose: float, accuracy: float,
                          context_fit: float, density: float) -> "DimensionWeights":
        total = purpose + accuracy + context_fit + density
        if total <= 0:
            raise ValidationError("coefficient total must be positive")
        p, a, c = purpose / total, accuracy / total, context_fit / total
        return cls(purpose=p, accuracy=a, context_fit=c,
                   density=1.0 - (p + a + c))

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.purpose, self.accuracy, self.context_fit, self.density)


DEFAULT_WEIGHTS = DimensionWeights.from_coefficients(*RUBRIC_COEFFICIENTS)

# The composite must be a convex combination of the dimension scores.
assert math.fsum(DEFAULT_WEIGHTS.as_tuple()) == 1.0


def composite_score(scores, weights: DimensionWeights = DEFAULT_WEIGHTS) -> float:
    """Weighted composite of four scores, each required to be in [0, 100]."""
    scores = tuple(float(s) for s in scores)
    if len(scores) != 4:
        raise ValidationError("composite_score expects four dimension scores")
    for name, s in zip(DIMENSIONS, scores):
        if not 0.0 <= s <= 100.0:
            raise ValidationError(f"{name} score {s} outside [0, 100]")
    return float(sum(w * s for w, s in zip(weights.as_tuple(), scores)))


@dataclass(frozen=True)
class CitevalReport:
    purpose: float
    accuracy: float
    context_fit: float
    density: float
    composite: float
    rationales: dict = field(default_factory=dict)

    def __post_init__(self):
        expected = composite_score(
            (self.purpose, self.accuracy, self.context_fit, self.density))
        if abs(self.composite - expected) > 1e-9:
            raise ValidationError("composite does not match its dimensions")

    @classmethod
    def from_scores(cls, purpose, accuracy, context_fit, density,
                    rationales=None) -> "CitevalReport":
        comp = composite_score((purpose, accuracy, context_fit, density))
        return cls(purpose=float(purpose), accuracy=float(accuracy),
                   context_fit=float(context_fit), density=float(density),
                   composite=comp, rationales=rationales or {})

    def as_dict(self) -> dict:
        return {
            "purpose": self.purpose,
            "accuracy": self.accuracy,
            "context_fit": self.context_fit,
            "density": self.density,
            "composite": self.composite,
        }


# ---------------------------------------------------------------------------
# Judge prompt and response handling
# ---------------------------------------------------------------------------

_RESPONSE_SCHEMA = (
    '{"purpose": <0-100 integer>, "accuracy": <0-100 integer>, '
    '"context_fit": <0-100 integer>, "density": <0-100 integer>, '
    '"rationale": "<one or two sentences>"}'
)


def build_judge_prompt(citing_abstract: str, context: str, intent,
                       cited_abstract: str, generated_citation: str) -> str:
    """Deterministic judge prompt: rubric bands, the five inputs and the
    required JSON response schema."""
    parts = [
        "You are a careful reviewer of scientific writing. Score the",
        "candidate citation sentence on the four dimensions below, each on",
        "a 0-100 scale, using the given bands.",
        "",
    ]
    for key in DIMENSIONS:
        parts.append(f"## {DIMENSION_TITLES[key]}")
        for band, text in RUBRIC_BANDS[key]:
            parts.append(f"- {band}: {text}")
        parts.append("")
    intent_text = getattr(intent, "value", str(intent))
    citation_text = generated_citation if generated_citation.strip() else "(empty)"
    parts += [
        "## Inputs",
        f"Citing paper abstract: {citing_abstract}",
        f"Local context around the citation slot: {context}",
        f"Citation intent: {intent_text}",
        f"Cited paper abstract: {cited_abstract}",
        f"Candidate citation sentence: {citation_text}",
        "",
        "Respond with exactly one JSON object of the form:",
        _RESPONSE_SCHEMA,
    ]
    return "\n".join(parts)


_INT_FIELD_RES = {
    key: re.compile(rf'"?{key}"?\s*[:=]\s*"?(-?\d+(?:\.\d+)?)"?',
                    re.IGNORECASE)
    for key in DIMENSIONS
}


def parse_judge_response(raw: str):
    """Extract the four 0-100 integer scores from a judge response.

    Tolerates surrounding prose, code fences and unquoted keys. Returns a
    (purpose, accuracy, context_fit, density) tuple, or None when the
    response cannot be read or any score is out of range.
    """
    if not raw or not raw.strip():
        return None
    text = raw.strip()
    candidates = []
    start = text.find("{")
    end = text.rfind("}")
    if start != -1 and end > start:
        candidates.append(text[start:end + 1])
    scores = None
    for blob in candidates:
        try:
            obj = json.loads(blob)
        except json.JSONDecodeError:
            continue
        if isinstance(obj, dict) and all(k in obj for k in DIMENSIONS):
            scores = [obj[k] for k in DIMENSIONS]
            break
    if scores is None:
        extracted = []
        for key in DIMENSIONS:
            m = _INT_FIELD_RES[key].search(text)
            if m is None:
                return None
            extracted.append(m.group(1))
        scores = extracted
    values = []
    for v in scores:
        try:
            f = float(v)
        except (TypeError, ValueError):
            return None
        if not f.is_integer() or not 0 <= f <= 100:
            return None
        values.append(int(f))
    return tuple(values)


@dataclass
class JudgeExchange:
    """One judge call: prompt, raw response and the parse outcome."""

    prompt: str
    raw_response: str
    scores: tuple[int, int, int, int] | None
    attempts: int = 1

    @property
    def failed(self) -> bool:
        return self.scores is None


def stub_judge(citing_abstract: str, context: str, intent,
               cited_abstract: str, generated_citation: str) -> CitevalReport:
    """Deterministic test double scoring by token overlap only.

    Not a semantic judge: purpose / accuracy / context_fit are 100 x token
    F1 of the citation against the citing abstract, the cited abstract and
    the context respectively; density is 100 x the distinct content-token
    ratio. An empty citation scores 0 everywhere.
    """
    tokens = word_tokens(generated_citation)
    if not tokens:
        return CitevalReport.from_scores(0.0, 0.0, 0.0, 0.0)
    purpose = 100.0 * overlap_f1(generated_citation, citing_abstract)
    accuracy = 100.0 * overlap_f1(generated_citation, cited_abstract)
    context_fit = 100.0 * overlap_f1(generated_citation, context)
    content = {t for t in tokens if t not in STOPWORDS}
    density = 100.0 * min(1.0, len(content) / len(tokens))
    return CitevalReport.from_scores(purpose, accuracy, context_fit, density)


class JudgeRunner:
    """Drives a judge backend with retries and an exchange audit trail.

    ``backend`` is either the string "stub" or an object with a
    ``complete(prompt) -> str`` method following the chat-completion
    convention. Every request ends up either parsed or counted as a
    failure; parsed + failed == requests always holds.
    """

    def __init__(self, backend="stub", retries: int = 3,
                 backoff: float = 0.5, audit_path=None, sleep=None):
        import time

        self.backend = backend
        self.retries = retries
        self.backoff = backoff
        self.audit_path = audit_path
        self._sleep = sleep if sleep is not None else time.sleep
        self.n_requests = 0
        self.n_parsed = 0
        self.n_failed = 0
        self._seq = 0

    def _audit(self, exchange: JudgeExchange) -> None:
        if self.audit_path is None:
            return
        record = {
            "seq": self._seq,
            "backend": "stub" if self.backend == "stub" else "remote",
            "attempts": exchange.attempts,
            "scores": list(exchange.scores) if exchange.scores else None,
            "prompt_chars": len(exchange.prompt),
            "raw_response": exchange.raw_response,
        }
        with open(self.audit_path, "a", encoding="utf-8") as fh:
            fh.write(json.dumps(record, sort_keys=True) + "\n")
        self._seq += 1

    def score(self, citing_abstract: str, context: str, intent,
              cited_abstract: str, generated_citation: str):
        """Return (CitevalReport | None, JudgeExchange)."""
        self.n_requests += 1
        prompt = build_judge_prompt(citing_abstract, context, intent,
                                    cited_abstract, generated_citation)
        if self.backend == "stub":
            report = stub_judge(citing_abstract, context, intent,
                                cited_abstract, generated_citation)
            scores = tuple(int(round(s)) for s in
                           (report.purpose, report.accuracy,
                            report.context_fit, report.density))
            exchange = JudgeExchange(prompt=prompt,
                                     raw_response=json.dumps(report.as_dict()),
                                     scores=scores)
            self.n_parsed += 1
            self._audit(exchange)
            return report, exchange

        raw = ""
        for attempt in range(1, self.retries + 1):
            raw = self.backend.complete(prompt)
            scores = parse_judge_response(raw)
            if scores is not None:
                exchange = JudgeExchange(prompt=prompt, raw_response=raw,
                                         scores=scores, attempts=attempt)
                self.n_parsed += 1
                self._audit(exchange)
                return CitevalReport.from_scores(*scores), exchange
            if attempt < self.retries:
                self._sleep(self.backoff * (2 ** (attempt - 1)))
        exchange = JudgeExchange(prompt=prompt, raw_response=raw,
                                 scores=None, attempts=self.retries)
        self.n_failed += 1
        self._audit(exchange)
        log.warning("judge response unparseable after %d attempts",
                    self.retries)
        return None, exchange


def pearson_r(x, y) -> float:
    """Pearson product-moment correlation of two equal-length series."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape:
        raise ValidationError("pearson_r needs equal-length series")
    if x.ndim != 1 or len(x) < 2:
        raise ValidationError("pearson_r needs at least two observations")
    xm = x - x.mean()
    ym = y - y.mean()
    sx = float(np.sqrt((xm * xm).sum()))
    sy = float(np.sqrt((ym * ym).sum()))
    if sx == 0.0 or sy == 0.0:
        raise ValidationError("pearson_r is undefined for zero variance")
    r = float((xm * ym).sum() / (sx * sy))
    return max(-1.0, min(1.0, r))
