"""Byte-pair-style subword vocabulary over unicode codepoints.

Words are whitespace-split and prefixed with the boundary marker ``▁`` (kept
as its own base symbol), so decoding can restore word boundaries.
"""

from __future__ import annotations

import hashlib
from collections import Counter
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from ..exceptions import EmptyCorpus

WORD_START = "▁"
PAD, UNK, BOS, EOS = "<pad>", "<unk>", "<bos>", "<eos>"
SPECIALS = (PAD, UNK, BOS, EOS)
PAD_ID, UNK_ID, BOS_ID, EOS_ID = range(4)


def _split_words(text: str) -> list[str]:
    return text.replace(WORD_START, " ").split()


@dataclass(frozen=True)
class BPEVocab:
    """Alphabet, ordered merge list, and the derived token-to-id table.

    Ids: the four specials first, then alphabet symbols in order, then each new
    merged string in merge order. ``bigrams`` is the frozen PHOC bigram list.
    """

    alphabet: tuple[str, ...]
    merges: tuple[tuple[str, str], ...]
    bigrams: tuple[str, ...] = ()
    token_to_id: dict = field(init=False, repr=False, compare=False)
    id_to_token: tuple = field(init=False, repr=False, compare=False)
    ranks: dict = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        tokens = list(SPECIALS)
        seen = set(tokens)
        known = set(self.alphabet)
        for sym in self.alphabet:
            if sym in seen:
                raise ValueError(f"duplicate alphabet symbol {sym!r}")
            seen.add(sym)
            tokens.append(sym)
        for left, right in self.merges:
            if left not in known or right not in known:
                raise ValueError(f"merge ({left!r}, {right!r}) uses an unknown symbol")
            merged = left + right
            known.add(merged)
            if merged not in seen:
                seen.add(merged)
                tokens.append(merged)
        object.__setattr__(self, "id_to_token", tuple(tokens))
        object.__setattr__(self, "token_to_id", {t: i for i, t in enumerate(tokens)})
        object.__setattr__(self, "ranks", {m: r for r, m in enumerate(self.merges)})

    def __len__(self):
        return len(self.id_to_token)

    @property
    def size(self) -> int:
        return len(self.id_to_token)

    # -- tokenization -----------------------------------------------------

    def tokenize_word(self, word: str) -> list[str]:
        """Apply the merges, lowest rank first, to one word."""
        symbols = [WORD_START] + list(word)
        ranks = self.ranks
        while len(symbols) > 1:
            best, best_rank = None, None
            for pair in zip(symbols, symbols[1:]):
                r = ranks.get(pair)
                if r is not None and (best_rank is None or r < best_rank):
                    best, best_rank = pair, r
            if best is None:
                break
            out, i = [], 0
            while i < len(symbols):
                if i + 1 < len(symbols) and (symbols[i], symbols[i + 1]) == best:
                    out.append(symbols[i] + symbols[i + 1])
                    i += 2
                else:
                    out.append(symbols[i])
                    i += 1
            symbols = out
        return symbols

    def tokenize(self, text: str) -> list[str]:
        out = []
        for word in _split_words(text):
            out.extend(self.tokenize_word(word))
        return out

    def ids(self, text: str) -> list[int]:
        table = self.token_to_id
        return [table.get(tok, UNK_ID) for tok in self.tokenize(text)]

    def decode(self, ids: Sequence[int]) -> str:
        """Join subwords, dropping specials, and normalize whitespace."""
        parts = [self.id_to_token[i] for i in ids if i >= len(SPECIALS)]
        return " ".join("".join(parts).replace(WORD_START, " ").split())

    # -- persistence ------------------------------------------------------

    def dumps(self) -> str:
        lines = [f"BPE v1 {len(self.merges)}", f"ALPHABET {len(self.alphabet)}"]
        lines += [_escape(s) for s in self.alphabet]
        lines.append("MERGES")
        lines += [f"{_escape(a)}\t{_escape(b)}" for a, b in self.merges]
        lines.append(f"BIGRAMS {len(self.bigrams)}")
        lines += [_escape(b) for b in self.bigrams]
        return "\n".join(lines) + "\n"

    @classmethod
    def loads(cls, text: str) -> "BPEVocab":
        lines = text.split("\n")
        head = lines[0].split()
        if head[:2] != ["BPE", "v1"]:
            raise ValueError(f"not a BPE v1 vocab file: {lines[0]!r}")
        n_merges = int(head[2])
        n_alpha = int(lines[1].split()[1])
        pos = 2
        alphabet = tuple(_unescape(s) for s in lines[pos : pos + n_alpha])
        pos += n_alpha
        if lines[pos] != "MERGES":
            raise ValueError("missing MERGES section")
        pos += 1
        merges = []
        for line in lines[pos : pos + n_merges]:
            a, b = line.split("\t")
            merges.append((_unescape(a), _unescape(b)))
        pos += n_merges
        bigrams = ()
        if pos < len(lines) and lines[pos].startswith("BIGRAMS"):
            n_bi = int(lines[pos].split()[1])
            bigrams = tuple(_unescape(s) for s in lines[pos + 1 : pos + 1 + n_bi])
        return cls(alphabet, tuple(merges), bigrams)

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(self.dumps())

    @classmethod
    def load(cls, path) -> "BPEVocab":
        with open(path, encoding="utf-8") as fh:
            return cls.loads(fh.read())

    def sha256(self) -> str:
        return hashlib.sha256(self.dumps().encode("utf-8")).hexdigest()


_ESCAPES = {"\\": "\\\\", "\t": "\\t", "\n": "\\n", "\r": "\\r", " ": "\\s"}
_UNESCAPES = {v[1]: k for k, v in _ESCAPES.items()}


def _escape(s: str) -> str:
    return "".join(_ESCAPES.get(c, c) for c in s)


def _unescape(s: str) -> str:
    out, i = [], 0
    while i < len(s):
        if s[i] == "\\" and i + 1 < len(s):
            out.append(_UNESCAPES[s[i + 1]])
            i += 2
        else:
            out.append(s[i])
            i += 1
    return "".join(out)


def train_bpe(corpus: Sequence[str], n_merges: int, n_bigrams: int = 50) -> BPEVocab:
    """Learn ``n_merges`` merges (fewer if the corpus runs out of pairs).

    Each step merges the most frequent adjacent pair; ties go to the
    lexicographically smallest ``(left, right)``. The alphabet is ordered by
    first appearance in the corpus.
    """
    if not corpus or not any(_split_words(t) for t in corpus):
        raise EmptyCorpus("corpus has no words")
    word_counts: Counter = Counter()
    alphabet = {WORD_START: None}
    for text in corpus:
        for word in _split_words(text):
            word_counts[word] += 1
            for ch in word:
                alphabet.setdefault(ch, None)

    words = [[WORD_START] + list(w) for w in word_counts]
    freqs = list(word_counts.values())
    merges = []
    for _ in range(n_merges):
        pairs: Counter = Counter()
        for symbols, f in zip(words, freqs):
            for pair in zip(symbols, symbols[1:]):
                pairs[pair] += f
        if not pairs:
            break
        top = max(pairs.values())
        best = min(p for p, c in pairs.items() if c == top)
        merges.append(best)
        merged = best[0] + best[1]
        for k, symbols in enumerate(words):
            if len(symbols) < 2:
                continue
            out, i = [], 0
            while i < len(symbols):
                if i + 1 < len(symbols) and (symbols[i], symbols[i + 1]) == best:
                    out.append(merged)
                    i += 2
                else:
                    out.append(symbols[i])
                    i += 1
            words[k] = out

    from .phoc import corpus_bigrams

    return BPEVocab(tuple(alphabet), tuple(merges), corpus_bigrams(corpus, n_bigrams))


class EncodedText(NamedTuple):
    ids: np.ndarray
    mask: np.ndarray

    @property
    def length(self) -> int:
        return len(self.ids)


def encode(vocab: BPEVocab, text: str, max_len: int, bos: bool = False, eos: bool = False) -> EncodedText:
    """Token ids of ``text`` truncated or PAD-padded to exactly ``max_len``."""
    if max_len < 1:
        raise ValueError("max_len must be >= 1")
    ids = vocab.ids(text)
    if bos:
        ids = [BOS_ID] + ids
    if eos:
        ids = ids + [EOS_ID]
    ids = ids[:max_len]
    out = np.full(max_len, PAD_ID, dtype=np.int64)
    out[: len(ids)] = ids
    return EncodedText(out, out != PAD_ID)


class BPETokenizer(TransformerMixin, BaseEstimator):
    """Estimator wrapper: ``fit`` learns a vocabulary, ``transform`` encodes.

    ``transform`` returns an int array of shape (n_texts, max_len); use
    :meth:`encode` for the mask as well.
    """

    def __init__(self, n_merges: int = 200, max_len: int = 16, n_bigrams: int = 50):
        self.n_merges = n_merges
        self.max_len = max_len
        self.n_bigrams = n_bigrams

    def fit(self, X, y=None):
        self.vocab_ = train_bpe(list(X), self.n_merges, self.n_bigrams)
        return self

    def encode(self, text: str) -> EncodedText:
        check_is_fitted(self, "vocab_")
        return encode(self.vocab_, text, self.max_len)

    def transform(self, X):
        check_is_fitted(self, "vocab_")
        return np.stack([encode(self.vocab_, t, self.max_len).ids for t in X])

    def inverse_transform(self, X):
        check_is_fitted(self, "vocab_")
        return [self.vocab_.decode(row) for row in np.asarray(X)]
