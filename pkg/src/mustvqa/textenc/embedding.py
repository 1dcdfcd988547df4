"""Trainable lookup tables for subword ids (numpy reference form).

The models hold the same table as a ``torch.nn.Embedding`` with
``padding_idx=PAD_ID``; this form is for inspection and export.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..exceptions import IdOutOfRange
from .bpe import PAD_ID, EncodedText


@dataclass(frozen=True, eq=False)
class EmbeddingTable:
    rows: np.ndarray
    trainable: bool = True

    def __post_init__(self):
        rows = np.array(self.rows, dtype=np.float64)
        rows[PAD_ID] = 0.0
        rows.setflags(write=False)
        object.__setattr__(self, "rows", rows)

    @classmethod
    def random(cls, vocab_size: int, dim: int, seed: int = 0, std: float = 0.02):
        rng = np.random.default_rng(seed)
        return cls(rng.normal(0.0, std, (vocab_size, dim)))

    @property
    def vocab_size(self) -> int:
        return self.rows.shape[0]


def embed(table: EmbeddingTable, enc: EncodedText) -> np.ndarray:
    """Row lookup, shape (N, D_t); PAD positions give zero rows."""
    ids = np.asarray(enc.ids)
    bad = ids[(ids < 0) | (ids >= table.vocab_size)]
    if bad.size:
        raise IdOutOfRange(f"ids {sorted(set(bad.tolist()))} outside [0, {table.vocab_size})")
    out = table.rows[ids].copy()
    out[~np.asarray(enc.mask, dtype=bool)] = 0.0
    return out
