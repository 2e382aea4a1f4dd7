"""Mixture-to-text inversion: caption, split into sources, enrich each one.

The three operations mirror the inference flow: `caption_audio` turns a
waveform into one caption, `parse_sources` asks an LLM backend to list
the distinct sources in the caption, and `parse_knowledge` expands one
source phrase into a property card used as the separation condition.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

from ..dsp import Waveform
from ..errors import InvalidInput, ParseError
from ..validation import check_nonempty_text
from .matching import text_similarity
from .prompts import FewShotPrompt

DEFAULT_TOKEN_BUDGET = 512

DUPLICATE_SIMILARITY = 0.9

# The seven property categories a knowledge card draws from, with the
# keywords the mock-validation check looks for.
PROPERTY_KEYWORDS = {
    "frequency": ("hz", "khz", "frequency", "pitch"),
    "amplitude": ("loud", "quiet", "amplitude", "loudness", "energy level"),
    "timbre": ("timbre", "tone quality", "warm", "harsh", "raspy", "airy", "breathy", "nasal", "metallic", "brassy", "rough"),
    "duration": ("duration", "seconds", "second", "lasting", "lasts"),
    "attack_decay": ("attack", "decay", "onset", "release"),
    "envelope": ("envelope", "steady", "pulsing", "tremolo", "vibrato", "on-off", "fluctuating", "throbbing", "gliding"),
    "spectral": ("spectrum", "spectral", "harmonic", "harmonics", "overtone", "overtones", "broadband", "narrow", "noise"),
}


@dataclass(frozen=True)
class Caption:
    """One-paragraph description of a mixture, and which backend wrote it."""

    text: str
    source_backend: str

    def __post_init__(self):
        check_nonempty_text(self.text, "caption text")
        if "\n" in self.text.strip():
            raise InvalidInput("caption must be a single paragraph")


@dataclass(frozen=True)
class ParsedSourceList:
    sources: tuple

    def __post_init__(self):
        if any(not s.strip() for s in self.sources):
            raise InvalidInput("source phrases must be non-empty")
        keys = [s.strip().lower() for s in self.sources]
        if len(set(keys)) != len(keys):
            raise InvalidInput("source phrases must be distinct after normalization")

    def __iter__(self):
        return iter(self.sources)

    def __len__(self):
        return len(self.sources)


@dataclass(frozen=True)
class KnowledgeCard:
    """Structured audio-property text for one parsed source."""

    source_phrase: str
    properties: dict
    full_text: str
    token_budget: int = DEFAULT_TOKEN_BUDGET
    truncated: bool = False

    def __post_init__(self):
        if token_count(self.full_text) > self.token_budget:
            raise InvalidInput("full_text exceeds its token budget")


def token_count(text: str) -> int:
    """Budget accounting: whitespace-delimited words."""
    return len(text.split())


def properties_mentioned(text: str) -> dict:
    """Which of the seven property categories a card's text touches."""
    lowered = text.lower()
    found = {}
    for category, keywords in PROPERTY_KEYWORDS.items():
        for kw in keywords:
            if kw in lowered:
                found[category] = kw
                break
    return found


def caption_audio(waveform: Waveform, captioner) -> Caption:
    """Run an audio captioner; normalizes whitespace to one paragraph."""
    raw = captioner.caption(waveform)
    text = re.sub(r"\s+", " ", raw).strip()
    if not text:
        raise ParseError("captioner returned empty text", raw_response=raw)
    return Caption(text=text, source_backend=getattr(captioner, "name", "unknown"))


def collapse_duplicates(phrases, similarity: float = DUPLICATE_SIMILARITY):
    """Drop later phrases that duplicate earlier ones.

    Two phrases are duplicates when they are equal after lowercasing and
    trimming, or when their n-gram cosine similarity reaches `similarity`.
    """
    kept = []
    for p in phrases:
        norm = p.strip().lower()
        dup = False
        for q in kept:
            if norm == q.strip().lower() or text_similarity(p, q) >= similarity:
                dup = True
                break
        if not dup:
            kept.append(p)
    return kept


def parse_sources(caption: Caption, prompt: FewShotPrompt, backend) -> ParsedSourceList:
    """Split a caption into distinct source phrases via an LLM backend."""
    check_nonempty_text(caption.text, "caption")
    response = backend.complete(prompt.with_query(caption.text))
    if not isinstance(response, str) or not response.strip():
        raise ParseError("backend returned an empty source list", raw_response=response)
    phrases = [p.strip() for p in re.split(r"[.\n]+", response) if p.strip()]
    if not phrases:
        raise ParseError(
            f"could not split response into phrases: {response!r}",
            raw_response=response,
        )
    return ParsedSourceList(sources=tuple(collapse_duplicates(phrases)))


def _truncate_at_sentence(text: str, budget: int):
    sentences = [s.strip() for s in re.split(r"(?<=[.!?])\s+", text) if s.strip()]
    kept: list = []
    used = 0
    for s in sentences:
        n = token_count(s)
        if used + n > budget:
            break
        kept.append(s)
        used += n
    if kept:
        return " ".join(kept), True
    # A single over-budget sentence: hard word cut.
    return " ".join(text.split()[:budget]), True


def parse_knowledge(
    source_phrase: str,
    prompt: FewShotPrompt,
    backend,
    token_budget: int = DEFAULT_TOKEN_BUDGET,
) -> KnowledgeCard:
    """Expand one source phrase into a knowledge card within a token budget."""
    check_nonempty_text(source_phrase, "source_phrase")
    response = backend.complete(prompt.with_query(source_phrase))
    if not isinstance(response, str) or not response.strip():
        raise ParseError("backend returned an empty card", raw_response=response)
    text = re.sub(r"\s+", " ", response).strip()
    truncated = False
    if token_count(text) > token_budget:
        text, truncated = _truncate_at_sentence(text, token_budget)
    return KnowledgeCard(
        source_phrase=source_phrase,
        properties=properties_mentioned(text),
        full_text=text,
        token_budget=token_budget,
        truncated=truncated,
    )
