"""Text similarity for matching parsed sources against ground-truth labels.

The default embedder counts lowercase unigrams and bigrams; cosine
similarity over those sparse vectors with a 0.3 threshold stands in for a
pretrained dual text encoder. Any object with an ``embed(text) -> dict``
method can be plugged in instead.
"""

from __future__ import annotations

import math
import re

from ..errors import InvalidInput

SIMILARITY_THRESHOLD = 0.3

_TOKEN_RE = re.compile(r"[a-z0-9]+")


class NgramCountEmbedder:
    """Sparse unigram+bigram count vectors over lowercase word tokens."""

    def embed(self, text: str) -> dict:
        tokens = _TOKEN_RE.findall(text.lower())
        counts: dict = {}
        for tok in tokens:
            counts[tok] = counts.get(tok, 0) + 1
        for a, b in zip(tokens, tokens[1:]):
            key = f"{a} {b}"
            counts[key] = counts.get(key, 0) + 1
        return counts


def cosine_similarity(a: dict, b: dict) -> float:
    if not a or not b:
        return 0.0
    dot = sum(v * b.get(k, 0) for k, v in a.items())
    if dot == 0:
        return 0.0
    na = math.sqrt(sum(v * v for v in a.values()))
    nb = math.sqrt(sum(v * v for v in b.values()))
    return dot / (na * nb)


def text_similarity(a: str, b: str, embedder=None) -> float:
    embedder = embedder or NgramCountEmbedder()
    return cosine_similarity(embedder.embed(a), embedder.embed(b))


def match_sources_to_labels(parsed, labels, embedder=None, threshold: float = SIMILARITY_THRESHOLD):
    """Greedy one-to-one matching of parsed phrases to labels.

    Pairs are taken in order of descending similarity (ties: lowest phrase
    index, then lowest label index). A matched label counts as correct when
    its similarity clears the threshold and the phrase's best label is that
    label; accuracy is correct matches over the label count.

    Returns (matches, accuracy) where matches are
    (phrase_index, label_index, similarity) triples.
    """
    if not labels:
        raise InvalidInput("labels must be non-empty")
    phrases = list(getattr(parsed, "sources", parsed))
    embedder = embedder or NgramCountEmbedder()
    if not phrases:
        return [], 0.0

    phrase_vecs = [embedder.embed(p) for p in phrases]
    label_vecs = [embedder.embed(lab) for lab in labels]
    sims = [
        [cosine_similarity(pv, lv) for lv in label_vecs] for pv in phrase_vecs
    ]
    order = sorted(
        ((i, j) for i in range(len(phrases)) for j in range(len(labels))),
        key=lambda ij: (-sims[ij[0]][ij[1]], ij[0], ij[1]),
    )
    used_phrases, used_labels = set(), set()
    matches = []
    for i, j in order:
        if i in used_phrases or j in used_labels:
            continue
        used_phrases.add(i)
        used_labels.add(j)
        matches.append((i, j, sims[i][j]))

    correct = 0
    for i, j, s in matches:
        best_label = max(range(len(labels)), key=lambda jj: (sims[i][jj], -jj))
        if s >= threshold and best_label == j:
            correct += 1
    return sorted(matches), correct / len(labels)
