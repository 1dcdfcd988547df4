"""Turn ``VQAInput`` samples into padded numpy arrays and torch batches."""

from __future__ import annotations

import numpy as np
import torch

from collections import Counter

from ..corpus.types import box_features
from ..metrics import normalize_answer
from ..textenc.bpe import PAD_ID, BPEVocab, encode
from ..textenc.phoc import PHOCConfig, phoc


def featurize(
    X,
    vocab: BPEVocab,
    max_question_len: int,
    max_ocr: int,
    max_ocr_subwords: int,
    max_visual: int,
    feature_dim: int,
    phoc_config: PHOCConfig | None = None,
) -> dict:
    """Padded arrays for a list of samples.

    OCR tokens beyond ``max_ocr`` and regions beyond ``max_visual`` are
    dropped in file order. ``ocr_text`` keeps the raw token strings for
    answer decoding.
    """
    B = len(X)
    T, S, M = max_ocr, max_ocr_subwords, max_visual
    out = {
        "q_ids": np.full((B, max_question_len), PAD_ID, np.int64),
        "ocr_ids": np.full((B, T, S), PAD_ID, np.int64),
        "ocr_box": np.zeros((B, T, 6), np.float64),
        "ocr_mask": np.zeros((B, T), bool),
        "vis_feat": np.zeros((B, M, feature_dim), np.float64),
        "vis_box": np.zeros((B, M, 6), np.float64),
        "vis_mask": np.zeros((B, M), bool),
    }
    if phoc_config is not None:
        out["ocr_phoc"] = np.zeros((B, T, phoc_config.dim), np.float64)
    ocr_text = []
    for b, sample in enumerate(X):
        out["q_ids"][b] = encode(vocab, sample.question, max_question_len).ids
        tokens = sample.image.ocr_tokens[:T]
        ocr_text.append([t.text for t in tokens])
        for t, tok in enumerate(tokens):
            out["ocr_ids"][b, t] = encode(vocab, tok.text, S).ids
            out["ocr_box"][b, t] = box_features(tok.box)
            out["ocr_mask"][b, t] = True
            if phoc_config is not None:
                out["ocr_phoc"][b, t] = phoc(tok.text, phoc_config)
        m = min(M, sample.image.n_regions)
        if m and feature_dim:
            out["vis_feat"][b, :m] = sample.image.feature_vectors[:m]
            out["vis_box"][b, :m] = [box_features(bx) for bx in sample.image.feature_boxes[:m]]
            out["vis_mask"][b, :m] = True
    out["ocr_text"] = ocr_text
    return out


def to_batch(feats: dict, index=None, dtype=torch.float32) -> dict:
    """Select rows ``index`` (all if None) and convert arrays to tensors."""
    batch = {}
    for key, value in feats.items():
        if key == "ocr_text":
            batch[key] = value if index is None else [value[i] for i in index]
            continue
        arr = value if index is None else value[index]
        tensor = torch.from_numpy(np.ascontiguousarray(arr))
        if tensor.is_floating_point():
            tensor = tensor.to(dtype)
        batch[key] = tensor
    return batch


def pick_answer(answers) -> str:
    """Most frequent normalized answer; the earliest one wins ties."""
    norm = [normalize_answer(a) for a in answers]
    counts = Counter(norm)
    return max(norm, key=lambda a: (counts[a], -norm.index(a)))
