"""Generation-side plumbing: prompts, training-file export, pairwise loss.

This module feeds a downstream citation generator. It assembles the
generation and key-information-extraction prompts, exports supervised and
preference-pair training files, evaluates the pairwise preference loss on
precomputed reward margins, and can drive a stub or remote generation
backend end to end.

Fine-tuning itself (and anything needing model log-probabilities) happens
outside this package; the files written here are its exact inputs.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import BackendError, ValidationError
from .intent import IntentLabel
from .textutil import word_tokens

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class GenerationRequest:
    """Inputs for one citation sentence."""

    citing_abstract: str
    context: str
    intent: IntentLabel
    cited_abstract: str
    cot: str | None = None

    def __post_init__(self):
        for name in ("citing_abstract", "context", "cited_abstract"):
            if not getattr(self, name).strip():
                raise ValidationError(f"generation request field {name} is empty")


@dataclass(frozen=True)
class CotRecord:
    """One reasoning-trace training record."""

    themes: tuple[str, ...]
    keywords: tuple[str, ...]
    reasoning: str
    citation: str

    def __post_init__(self):
        if not self.citation.strip():
            raise ValidationError("CoT record needs a non-empty citation")


@dataclass(frozen=True)
class PreferencePair:
    prompt: str
    winner: str
    loser: str

    def __post_init__(self):
        if not self.winner.strip() or not self.loser.strip():
            raise ValidationError("preference pair fields must be non-empty")
        if self.winner == self.loser:
            raise ValidationError("winner and loser must differ")


_INTENT_INSTRUCTIONS = {
    IntentLabel.BACKGROUND: (
        "The citation should supply background: introduce the problem, "
        "concept or topic the cited paper establishes."),
    IntentLabel.METHOD: (
        "The citation should credit a method, tool, approach or dataset "
        "from the cited paper that this work makes use of."),
    IntentLabel.COMPARATIVE: (
        "The citation should compare this paper's results or findings "
        "against those of the cited paper."),
}


def build_generation_prompt(req: GenerationRequest) -> str:
    """Deterministic generation prompt covering all inputs; the reasoning
    scaffold appears only when the request carries a cot field."""
    parts = [
        "Write one citation sentence for the [CITE] slot in the context",
        "below. The sentence must fit the surrounding text and respect the",
        "stated citation intent.",
        "",
        f"Citation intent: {req.intent.value}",
        _INTENT_INSTRUCTIONS[req.intent],
        "",
        f"Citing paper abstract: {req.citing_abstract}",
        f"Local context: {req.context}",
        f"Cited paper abstract: {req.cited_abstract}",
    ]
    if req.cot is not None:
        parts += [
            "",
            "First reason step by step: list the shared themes and key",
            "points linking the two papers, then derive the citation",
            "sentence from that reasoning before emitting it.",
        ]
        if req.cot.strip():
            parts.append(f"Extracted key information: {req.cot}")
    parts += ["", "Citation sentence:"]
    return "\n".join(parts)


def build_cot_extraction_prompt(citing_abstract: str,
                                cited_abstract: str) -> str:
    """Prompt asking a teacher model for themes and keywords of both papers
    in a parseable JSON structure."""
    citing = citing_abstract if citing_abstract.strip() else "(empty)"
    cited = cited_abstract if cited_abstract.strip() else "(empty)"
    return "\n".join([
        "Extract the key information from the two paper abstracts below.",
        "Respond with exactly one JSON object of the form:",
        '{"citing": {"themes": [...], "keywords": [...]},'
        ' "cited": {"themes": [...], "keywords": [...]}}',
        "",
        f"Citing paper abstract: {citing}",
        f"Cited paper abstract: {cited}",
    ])


@dataclass
class ExportReport:
    written: int = 0
    rejected: int = 0
    reasons: list[str] = field(default_factory=list)


def format_reasoning(cot: CotRecord) -> str:
    """Flatten a CoT record's themes, keywords and trace into the
    reasoning text that precedes the target sentence."""
    parts = []
    if cot.themes:
        parts.append("Themes: " + "; ".join(cot.themes) + ".")
    if cot.keywords:
        parts.append("Keywords: " + ", ".join(cot.keywords) + ".")
    if cot.reasoning.strip():
        parts.append(cot.reasoning.strip())
    return " ".join(parts)


def build_sft_record(req: GenerationRequest, cot: CotRecord) -> dict:
    """One supervised training row: the generation prompt (with the
    reasoning scaffold), the reasoning text, and the citation target."""
    prompt_req = req if req.cot is not None else GenerationRequest(
        citing_abstract=req.citing_abstract, context=req.context,
        intent=req.intent, cited_abstract=req.cited_abstract, cot="")
    return {
        "prompt": build_generation_prompt(prompt_req),
        "reasoning": format_reasoning(cot),
        "target": cot.citation,
    }


def export_sft_records(records, path) -> ExportReport:
    """Write (GenerationRequest, CotRecord) pairs as {prompt, reasoning,
    target} JSON lines. Invalid records are rejected with a reason."""
    report = ExportReport()
    with open(path, "w", encoding="utf-8") as fh:
        for i, (req, cot) in enumerate(records):
            try:
                obj = build_sft_record(req, cot)
                if not obj["target"].strip():
                    raise ValidationError("empty citation")
            except (ValidationError, AttributeError) as exc:
                report.rejected += 1
                report.reasons.append(f"record {i}: {exc}")
                continue
            fh.write(json.dumps(obj, sort_keys=True) + "\n")
            report.written += 1
    if report.written == 0:
        log.warning("no SFT records written to %s", path)
    return report


def load_sft_records(path) -> list[dict]:
    rows = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                rows.append(json.loads(line))
    return rows


def export_preference_pairs(pairs, path) -> ExportReport:
    """Write preference pairs as {prompt, chosen, rejected} JSON lines."""
    report = ExportReport()
    with open(path, "w", encoding="utf-8") as fh:
        for i, pair in enumerate(pairs):
            try:
                if isinstance(pair, PreferencePair):
                    prompt, winner, loser = pair.prompt, pair.winner, pair.loser
                else:
                    prompt, winner, loser = pair
                    PreferencePair(prompt=prompt, winner=winner, loser=loser)
            except (ValidationError, TypeError) as exc:
                report.rejected += 1
                report.reasons.append(f"pair {i}: {exc}")
                continue
            fh.write(json.dumps({"prompt": prompt, "chosen": winner,
                                 "rejected": loser}, sort_keys=True) + "\n")
            report.written += 1
    if report.written == 0:
        log.warning("no preference pairs written to %s", path)
    return report


def load_preference_pairs(path) -> list[PreferencePair]:
    pairs = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            obj = json.loads(line)
            pairs.append(PreferencePair(prompt=obj["prompt"],
                                        winner=obj["chosen"],
                                        loser=obj["rejected"]))
    return pairs


def dpo_loss(margins) -> float:
    """Mean pairwise preference loss -log sigmoid(margin) over reward
    margins r_winner - r_loser. Computed as softplus(-margin) for
    stability; strictly positive and strictly decreasing in each margin.
    """
    margins = np.asarray(list(margins), dtype=np.float64)
    if margins.size == 0:
        raise ValidationError("dpo_loss needs at least one margin")
    if not np.all(np.isfinite(margins)):
        raise ValidationError("dpo_loss margins must be finite")
    # softplus(-m) = log(1 + exp(-m)) = max(-m, 0) + log1p(exp(-|m|))
    values = np.maximum(-margins, 0.0) + np.log1p(np.exp(-np.abs(margins)))
    return float(values.mean())


class StubGenerationBackend:
    """Offline generator: a deterministic template fill keyed to intent."""

    _LEADS = {
        IntentLabel.BACKGROUND: "Earlier work established {gist} [CITE].",
        IntentLabel.METHOD: "We adopt the approach of [CITE], which {gist}.",
        IntentLabel.COMPARATIVE:
            "Compared with [CITE], which {gist}, our results differ.",
    }

    def generate(self, req: GenerationRequest) -> str:
        gist = " ".join(word_tokens(req.cited_abstract)[:8]) or "this topic"
        return self._LEADS[req.intent].format(gist=gist)


class RemoteGenerationBackend:
    """Generates through a chat-completion client."""

    def __init__(self, client):
        self.client = client

    def generate(self, req: GenerationRequest) -> str:
        return self.client.complete(build_generation_prompt(req))


def generate_citation(req: GenerationRequest, backend,
                      request_id: str | None = None) -> str:
    """Run one generation request through a backend; transport failures
    carry the request id."""
    try:
        return backend.generate(req)
    except BackendError as exc:
        raise BackendError(
            f"generation failed for request {request_id or '<unnamed>'}: "
            f"{exc}") from exc


def dpo_loss_reference(margins, dps: int = 50) -> float:
    """High-precision mean of log(1 + exp(-m)) via mpmath, for checking
    the float implementation."""
    import mpmath

    with mpmath.workdps(dps):
        total = mpmath.mpf(0)
        margins = list(margins)
        for m in margins:
            total += mpmath.log(1 + mpmath.e ** (-mpmath.mpf(m)))
        return float(total / len(margins))


def softplus_reference(x: float) -> float:
    """Plain math.log1p/exp softplus for small sanity checks."""
    return math.log1p(math.exp(-abs(x))) + max(-x, 0.0)
