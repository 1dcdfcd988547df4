"""Subword vocabularies, PHOC descriptors and embedding lookup."""

from .bpe import (
    BOS_ID, EOS_ID, PAD_ID, UNK_ID, BPETokenizer, BPEVocab, EncodedText, encode, train_bpe,
)
from .embedding import EmbeddingTable, embed
from .phoc import DEFAULT_BIGRAMS, PHOCConfig, PHOCEncoder, corpus_bigrams, phoc

__all__ = [
    "BOS_ID", "BPETokenizer", "BPEVocab", "DEFAULT_BIGRAMS", "EOS_ID", "EmbeddingTable",
    "EncodedText", "PAD_ID", "PHOCConfig", "PHOCEncoder", "UNK_ID", "corpus_bigrams", "embed",
    "encode", "phoc", "train_bpe",
]
