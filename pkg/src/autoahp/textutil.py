"""Deterministic text utilities: tokenization, stopwords, feature hashing.

The hashing embedder is the offline stand-in for a real embedding model.
It buckets word unigrams and bigrams into ``k`` signed slots via SHA-256,
so identical (text, k, seed) always yields the identical vector on every
platform, while texts sharing vocabulary land near each other.
"""

from __future__ import annotations

import hashlib
import re
from collections import Counter
from typing import Iterable, Sequence

import numpy as np

_TOKEN_RE = re.compile(r"[a-z0-9']+")

STOPWORDS = frozenset(
    """
    a about above after again all also am an and any are as at be because been
    before being below between both but by can could did do does doing down
    during each few for from further had has have having he her here hers him
    his how i if in into is it its itself just me more most my no nor not of
    off on once only or other our ours out over own same she should so some
    such than that the their theirs them then there these they this those
    through to too under until up very was we were what when where which while
    who whom why will with would you your yours
    """.split()
)


def tokenize(text: str) -> list[str]:
    """Lowercase word tokens in order of appearance."""
    return _TOKEN_RE.findall(text.lower())


def content_words(text: str) -> list[str]:
    """Tokens with stopwords and single characters removed."""
    return [t for t in tokenize(text) if t not in STOPWORDS and len(t) > 1]


def top_terms(texts: Iterable[str], n: int) -> list[str]:
    """The ``n`` most frequent content words across ``texts``.

    Ties break alphabetically so the result is stable across runs.
    """
    counts = Counter()
    for text in texts:
        counts.update(content_words(text))
    ranked = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))
    return [term for term, _ in ranked[:n]]


def _bucket(feature: str, k: int, seed: int) -> tuple[int, float]:
    digest = hashlib.sha256(f"{seed}:{feature}".encode("utf-8")).digest()
    index = int.from_bytes(digest[:4], "big") % k
    sign = 1.0 if digest[4] % 2 == 0 else -1.0
    return index, sign


def hash_embed(texts: Sequence[str], k: int = 256, seed: int = 0) -> np.ndarray:
    """Embed texts by signed feature hashing of unigrams + bigrams.

    Returns an (n, k) float array with unit L2 rows. Raises ValueError for a
    text with no word tokens.
    """
    if k < 2:
        raise ValueError("embedding dimension must be >= 2")
    out = np.zeros((len(texts), k), dtype=float)
    for row, text in enumerate(texts):
        tokens = tokenize(text)
        if not tokens:
            raise ValueError(f"cannot embed text with no word tokens: {text!r}")
        features = tokens + [f"{a}_{b}" for a, b in zip(tokens, tokens[1:])]
        for feature in features:
            index, sign = _bucket(feature, k, seed)
            out[row, index] += sign
        norm = float(np.linalg.norm(out[row]))
        if norm == 0.0:
            # Signs cancelled exactly; fall back to a single deterministic slot.
            index, _ = _bucket(text, k, seed)
            out[row, :] = 0.0
            out[row, index] = 1.0
            norm = 1.0
        out[row] /= norm
    return out
