"""Pyramidal histogram of characters (PHOC) word descriptor.

Unigram levels 2..5 over a 36-symbol alphabet plus 50 bigrams at level 2,
giving 604 binary entries. Character ``i`` of an ``n``-character word covers
``[i/n, (i+1)/n)``; it switches on region ``r`` of level ``L`` when at least
half of its own extent overlaps ``[r/L, (r+1)/L)``.
"""

from __future__ import annotations

import string
from collections import Counter
from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin

ALPHABET = string.ascii_lowercase + string.digits

# Most frequent English bigrams, used when no corpus list is supplied.
DEFAULT_BIGRAMS = (
    "th", "he", "in", "er", "an", "re", "on", "at", "en", "nd", "ti", "es", "or", "te",
    "of", "ed", "is", "it", "al", "ar", "st", "to", "nt", "ng", "se", "ha", "as", "ou",
    "io", "le", "ve", "co", "me", "de", "hi", "ri", "ro", "ic", "ne", "ea", "ra", "ce",
    "li", "ch", "ll", "be", "ma", "si", "om", "ur",
)


@dataclass(frozen=True)
class PHOCConfig:
    alphabet: str = ALPHABET
    unigram_levels: tuple[int, ...] = (2, 3, 4, 5)
    bigrams: tuple[str, ...] = DEFAULT_BIGRAMS
    bigram_levels: tuple[int, ...] = (2,)

    @property
    def dim(self) -> int:
        return sum(self.unigram_levels) * len(self.alphabet) + sum(self.bigram_levels) * len(
            self.bigrams
        )


def _clean(word: str, alphabet: str) -> str:
    return "".join(c for c in word.lower() if c in alphabet)


def _covers(start: int, width: int, n: int, region: int, level: int) -> bool:
    # Scale both intervals by n*level so the test is pure integer arithmetic:
    # item [start, start+width)/n vs region [region, region+1)/level.
    a0, a1 = start * level, (start + width) * level
    b0, b1 = region * n, (region + 1) * n
    overlap = min(a1, b1) - max(a0, b0)
    return 2 * overlap >= width * level


def phoc(word: str, config: PHOCConfig = PHOCConfig()) -> np.ndarray:
    """Binary PHOC vector (uint8) of length ``config.dim``."""
    vec = np.zeros(config.dim, dtype=np.uint8)
    word = _clean(word, config.alphabet)
    n = len(word)
    if n == 0:
        return vec
    index = {c: i for i, c in enumerate(config.alphabet)}
    n_sym = len(config.alphabet)
    offset = 0
    for level in config.unigram_levels:
        for i, ch in enumerate(word):
            for region in range(level):
                if _covers(i, 1, n, region, level):
                    vec[offset + region * n_sym + index[ch]] = 1
        offset += level * n_sym

    bigram_index = {b: i for i, b in enumerate(config.bigrams)}
    n_bi = len(config.bigrams)
    for level in config.bigram_levels:
        for i in range(n - 1):
            k = bigram_index.get(word[i : i + 2])
            if k is None:
                continue
            for region in range(level):
                if _covers(i, 2, n, region, level):
                    vec[offset + region * n_bi + k] = 1
        offset += level * n_bi
    return vec


def corpus_bigrams(corpus, n: int = 50, alphabet: str = ALPHABET) -> tuple[str, ...]:
    """Top-``n`` alphabet bigrams of a corpus, ties broken alphabetically.

    Short lists are topped up from :data:`DEFAULT_BIGRAMS`, then from all
    alphabet pairs in order, so the result always has ``n`` entries.
    """
    counts: Counter = Counter()
    for text in corpus:
        for word in text.split():
            w = _clean(word, alphabet)
            counts.update(w[i : i + 2] for i in range(len(w) - 1))
    ranked = sorted(counts, key=lambda b: (-counts[b], b))[:n]
    chosen = list(ranked)
    if len(chosen) < n:
        fill = list(DEFAULT_BIGRAMS) + [a + b for a in alphabet for b in alphabet]
        for b in fill:
            if len(chosen) == n:
                break
            if b not in chosen:
                chosen.append(b)
    return tuple(chosen)


class PHOCEncoder(TransformerMixin, BaseEstimator):
    """Map words to PHOC vectors.

    With ``fit_bigrams=True`` the bigram list is taken from the fitted corpus;
    otherwise the default English list is used and ``fit`` is a no-op.
    """

    def __init__(self, fit_bigrams: bool = False, n_bigrams: int = 50):
        self.fit_bigrams = fit_bigrams
        self.n_bigrams = n_bigrams

    def fit(self, X=None, y=None):
        if self.fit_bigrams and X is not None:
            bigrams = corpus_bigrams(X, self.n_bigrams)
        else:
            bigrams = DEFAULT_BIGRAMS[: self.n_bigrams]
        self.config_ = PHOCConfig(bigrams=tuple(bigrams))
        return self

    def transform(self, X):
        config = getattr(self, "config_", PHOCConfig())
        return np.stack([phoc(w, config) for w in X]) if len(X) else np.zeros((0, config.dim), np.uint8)
