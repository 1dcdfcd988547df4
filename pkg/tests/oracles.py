"""Independent reference implementations used as test oracles."""

from __future__ import annotations

from fractions import Fraction
from itertools import product


def edit_distance(a: str, b: str) -> int:
    """Full-matrix Wagner-Fischer."""
    d = [[0] * (len(b) + 1) for _ in range(len(a) + 1)]
    for i in range(len(a) + 1):
        d[i][0] = i
    for j in range(len(b) + 1):
        d[0][j] = j
    for i, j in product(range(1, len(a) + 1), range(1, len(b) + 1)):
        d[i][j] = min(d[i - 1][j] + 1, d[i][j - 1] + 1, d[i - 1][j - 1] + (a[i - 1] != b[j - 1]))
    return d[len(a)][len(b)]


def anls(pred: str, gts, tau=0.5) -> float:
    best = 0.0
    for gt in gts:
        longest = max(len(pred), len(gt))
        nl = edit_distance(pred, gt) / longest if longest else 0.0
        best = max(best, 1 - nl if nl <= tau else 0.0)
    return best


def _overlap(a0, a1, b0, b1):
    return max(Fraction(0), min(a1, b1) - max(a0, b0))


def phoc_regions(word: str, level: int, gram: int = 1):
    """Set of (region, gram_string) pairs, from exact rational interval overlap."""
    n = len(word)
    out = set()
    for i in range(n - gram + 1):
        start, end = Fraction(i, n), Fraction(i + gram, n)
        for r in range(level):
            if _overlap(start, end, Fraction(r, level), Fraction(r + 1, level)) >= (end - start) / 2:
                out.add((r, word[i : i + gram]))
    return out


def phoc_vector(word, alphabet, unigram_levels, bigrams, bigram_levels):
    vec = []
    for level in unigram_levels:
        hits = phoc_regions(word, level) if word else set()
        vec += [int((r, c) in hits) for r in range(level) for c in alphabet]
    for level in bigram_levels:
        hits = phoc_regions(word, level, 2) if len(word) > 1 else set()
        vec += [int((r, b) in hits) for r in range(level) for b in bigrams]
    return vec
