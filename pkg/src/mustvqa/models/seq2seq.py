"""Encoder-decoder transformer with quantized 2D spatial embeddings for OCR.

The encoder reads ``[question subwords | OCR subwords | visual regions]``;
every OCR subword carries the sum of its token's box-coordinate embeddings.
The decoder generates the answer as subwords of the shared vocabulary.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import NamedTuple

import numpy as np
import torch
from torch import nn
from torch.nn import functional as F

from ..exceptions import ShapeMismatch
from ..harness.schedules import ScheduleSpec
from ..metrics import normalize_answer
from ..textenc.bpe import BOS_ID, EOS_ID, PAD_ID, BPEVocab
from .base import BaseVQAEstimator
from .features import featurize, pick_answer, to_batch
from .layers import Block, self_allowed

BOX_DIM = 6
SPATIAL_KEYS = ("x0", "y0", "x1", "y1", "w", "h")


def quantize_box(box, bins: int = 100):
    """Bucket indices ``min(floor(c * bins), bins - 1)`` for x0, y0, x1, y1, w, h.

    Accepts a 4-tuple/array of normalized coordinates, or a tensor/array whose
    last axis holds them.
    """
    if bins < 2:
        raise ValueError("need at least 2 bins")
    if isinstance(box, torch.Tensor):
        x0, y0, x1, y1 = box[..., 0], box[..., 1], box[..., 2], box[..., 3]
        coords = torch.stack([x0, y0, x1, y1, x1 - x0, y1 - y0], -1)
        return torch.clamp(torch.floor(coords * bins), 0, bins - 1).long()
    x0, y0, x1, y1 = (float(c) for c in box)
    coords = (x0, y0, x1, y1, x1 - x0, y1 - y0)
    return tuple(min(max(int(np.floor(c * bins)), 0), bins - 1) for c in coords)


@dataclass(frozen=True)
class Seq2SeqConfig:
    vocab_size: int
    feature_dim: int
    d_model: int = 64
    n_encoder_layers: int = 2
    n_decoder_layers: int = 2
    n_heads: int = 4
    ff_mult: int = 2
    spatial_bins: int = 100
    max_question_len: int = 16
    max_ocr: int = 8
    max_ocr_subwords: int = 4
    max_visual: int = 4
    max_answer_len: int = 8
    flavor: str = "multi"
    use_visual: bool = True

    def __post_init__(self):
        if self.spatial_bins < 2:
            raise ValueError("spatial_bins must be >= 2")
        for name in ("vocab_size", "d_model", "n_encoder_layers", "n_decoder_layers", "n_heads",
                     "max_question_len", "max_answer_len"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.flavor not in ("mono", "multi"):
            raise ValueError(f"unknown flavor {self.flavor!r}")


class GenerationResult(NamedTuple):
    ids: list
    answer: str
    log_probs: list


def sequence_loss(logits, targets, mask):
    """Token cross-entropy averaged over unmasked positions (0 if none)."""
    flat = F.cross_entropy(
        logits.reshape(-1, logits.shape[-1]), targets.reshape(-1), reduction="none"
    ).view(targets.shape)
    mask = mask.to(flat.dtype)
    return (flat * mask).sum() / mask.sum().clamp_min(1.0)


class Seq2SeqNet(nn.Module):
    def __init__(self, config: Seq2SeqConfig):
        super().__init__()
        c = self.config = config
        d = c.d_model
        self.tok_emb = nn.Embedding(c.vocab_size, d, padding_idx=PAD_ID)
        self.q_pos = nn.Embedding(c.max_question_len, d)
        self.ocr_subpos = nn.Embedding(c.max_ocr_subwords, d)
        self.spatial = nn.ModuleDict({k: nn.Embedding(c.spatial_bins, d) for k in SPATIAL_KEYS})
        if c.use_visual:
            self.vis_proj = nn.Linear(c.feature_dim + BOX_DIM, d)
        self.type_emb = nn.Embedding(3, d)
        self.ln_in = nn.LayerNorm(d)
        self.encoder = nn.ModuleList(Block(d, c.n_heads, c.ff_mult) for _ in range(c.n_encoder_layers))
        self.ln_enc = nn.LayerNorm(d)
        self.ans_pos = nn.Embedding(c.max_answer_len, d)
        self.ln_dec_in = nn.LayerNorm(d)
        self.decoder = nn.ModuleList(
            Block(d, c.n_heads, c.ff_mult, cross=True) for _ in range(c.n_decoder_layers)
        )
        self.ln_dec = nn.LayerNorm(d)
        self.lm_head = nn.Linear(d, c.vocab_size)

    def encoder_inputs(self, batch):
        """Embedded encoder sequence (B, L, D) and its validity mask (B, L)."""
        c = self.config
        q_ids = batch["q_ids"]
        B = q_ids.shape[0]
        if tuple(q_ids.shape) != (B, c.max_question_len):
            raise ShapeMismatch(f"q_ids: expected {(B, c.max_question_len)}, got {tuple(q_ids.shape)}")
        dev = q_ids.device
        q = self.tok_emb(q_ids) + self.q_pos(torch.arange(q_ids.shape[1], device=dev))
        streams = [q + self.type_emb.weight[0]]
        masks = [q_ids != PAD_ID]

        ocr_ids = batch["ocr_ids"]
        T, S = ocr_ids.shape[1], ocr_ids.shape[2]
        if S != c.max_ocr_subwords:
            raise ShapeMismatch(f"ocr_ids: expected {c.max_ocr_subwords} subwords, got {S}")
        if T:
            buckets = quantize_box(batch["ocr_box"][..., :4], c.spatial_bins)
            spatial = sum(self.spatial[k](buckets[..., i]) for i, k in enumerate(SPATIAL_KEYS))
            ocr = self.tok_emb(ocr_ids) + spatial[:, :, None, :] + self.ocr_subpos.weight[:S]
            streams.append(ocr.reshape(B, T * S, -1) + self.type_emb.weight[1])
            masks.append((ocr_ids != PAD_ID).reshape(B, T * S) & batch["ocr_mask"].bool().repeat_interleave(S, 1))

        if c.use_visual and "vis_feat" in batch and batch["vis_feat"].shape[1]:
            feat = torch.cat([batch["vis_feat"], batch["vis_box"]], -1).to(q.dtype)
            if feat.shape[-1] != c.feature_dim + BOX_DIM:
                raise ShapeMismatch(f"visual features: expected {c.feature_dim} dims")
            streams.append(self.vis_proj(feat) + self.type_emb.weight[2])
            masks.append(batch["vis_mask"].bool())
        return self.ln_in(torch.cat(streams, 1)), torch.cat(masks, 1)

    def encode(self, batch):
        x, valid = self.encoder_inputs(batch)
        allowed = self_allowed(valid)
        for block in self.encoder:
            x = block(x, allowed)
        return self.ln_enc(x), valid

    def decode(self, memory, valid, dec_ids):
        """Next-token logits (B, A, vocab) for decoder inputs ``dec_ids``."""
        B, A = dec_ids.shape
        dev = dec_ids.device
        x = self.ln_dec_in(self.tok_emb(dec_ids) + self.ans_pos(torch.arange(A, device=dev)))
        causal = torch.tril(torch.ones(A, A, dtype=torch.bool, device=dev)).expand(B, -1, -1)
        # A sample with no valid encoder position attends to all of them.
        valid = valid | ~valid.any(1, keepdim=True)
        cross = valid[:, None, :].expand(-1, A, -1)
        for block in self.decoder:
            x = block(x, causal, memory, cross)
        return self.lm_head(self.ln_dec(x))

    def forward(self, batch, dec_ids):
        memory, valid = self.encode(batch)
        return self.decode(memory, valid, dec_ids)


def answer_ids(vocab: BPEVocab, answers, max_len: int):
    """Decoder input, target and mask rows for one sample (teacher forcing).

    Targets are the answer's subwords followed by EOS; an answer with no
    subwords is masked out entirely.
    """
    ids = vocab.ids(normalize_answer(pick_answer(answers)))
    target = np.full(max_len, PAD_ID, np.int64)
    dec_in = np.full(max_len, PAD_ID, np.int64)
    mask = np.zeros(max_len, bool)
    if ids:
        seq = (ids + [EOS_ID])[:max_len]
        target[: len(seq)] = seq
        mask[: len(seq)] = True
        inputs = [BOS_ID] + seq[:-1]
        dec_in[: len(inputs)] = inputs
    else:
        dec_in[0] = BOS_ID
    return dec_in, target, mask


class Seq2SeqVQA(BaseVQAEstimator):
    """Generative VQA model (LaTr-style with ``flavor="mono"``, mLaTr-style with ``"multi"``).

    The flavor only decides which vocabulary is learned when ``vocab`` is not
    given; the network graph is the same for both.
    """

    family = "seq2seq"
    default_optimizer = "adamw"

    def __init__(
        self,
        flavor="multi",
        vocab=None,
        n_merges=300,
        d_model=64,
        n_layers=2,
        n_decoder_layers=2,
        n_heads=4,
        ff_mult=2,
        spatial_bins=100,
        max_question_len=16,
        max_ocr=8,
        max_ocr_subwords=4,
        max_visual=4,
        max_answer_len=8,
        use_visual=True,
        optimizer=None,
        schedule=None,
        max_iter=2000,
        batch_size=16,
        weight_decay=0.01,
        clip_norm=1.0,
        seed=0,
        dtype="float32",
        verbose=0,
    ):
        self.flavor = flavor
        self.vocab = vocab
        self.n_merges = n_merges
        self.d_model = d_model
        self.n_layers = n_layers
        self.n_decoder_layers = n_decoder_layers
        self.n_heads = n_heads
        self.ff_mult = ff_mult
        self.spatial_bins = spatial_bins
        self.max_question_len = max_question_len
        self.max_ocr = max_ocr
        self.max_ocr_subwords = max_ocr_subwords
        self.max_visual = max_visual
        self.max_answer_len = max_answer_len
        self.use_visual = use_visual
        self.optimizer = optimizer
        self.schedule = schedule
        self.max_iter = max_iter
        self.batch_size = batch_size
        self.weight_decay = weight_decay
        self.clip_norm = clip_norm
        self.seed = seed
        self.dtype = dtype
        self.verbose = verbose

    def _default_schedule(self):
        return ScheduleSpec("warmup_linear", base_lr=1e-4, total_iters=24000,
                            warmup_iters=1000, peak_lr=1e-3)

    def _prepare(self, X, y):
        dims = {x.image.feature_vectors.shape[1] for x in X if x.image.n_regions}
        self.feature_dim_ = dims.pop() if dims else 0

    def _extra_state(self):
        return {"feature_dim": self.feature_dim_, "config": asdict(self.config_)}

    def _restore_extra(self, extra):
        self.feature_dim_ = int(extra["feature_dim"])

    @property
    def config_(self) -> Seq2SeqConfig:
        return Seq2SeqConfig(
            vocab_size=self.vocab_.size,
            feature_dim=self.feature_dim_,
            d_model=self.d_model,
            n_encoder_layers=self.n_layers,
            n_decoder_layers=self.n_decoder_layers,
            n_heads=self.n_heads,
            ff_mult=self.ff_mult,
            spatial_bins=self.spatial_bins,
            max_question_len=self.max_question_len,
            max_ocr=self.max_ocr,
            max_ocr_subwords=self.max_ocr_subwords,
            max_visual=self.max_visual,
            max_answer_len=self.max_answer_len,
            flavor=self.flavor,
            use_visual=self.use_visual and self.feature_dim_ > 0,
        )

    def _build_net(self):
        return Seq2SeqNet(self.config_)

    def _featurize(self, X):
        c = self.config_
        return featurize(X, self.vocab_, c.max_question_len, c.max_ocr, c.max_ocr_subwords,
                         c.max_visual, self.feature_dim_)

    def _targets(self, X, y, feats):
        rows = [answer_ids(self.vocab_, ans, self.max_answer_len) for ans in y]
        return {
            "dec_in": np.stack([r[0] for r in rows]),
            "target": np.stack([r[1] for r in rows]),
            "target_mask": np.stack([r[2] for r in rows]),
        }

    def _loss(self, feats, targets, index, rng=None):
        batch = to_batch(feats, index, self.torch_dtype)
        t = to_batch(targets, index, self.torch_dtype)
        logits = self.net_(batch, t["dec_in"])
        return sequence_loss(logits, t["target"], t["target_mask"])

    def generate_batch(self, batch, max_len: int | None = None) -> list[GenerationResult]:
        """Greedy decoding from BOS until EOS or ``max_len`` tokens."""
        max_len = min(max_len or self.max_answer_len, self.max_answer_len)
        memory, valid = self.net_.encode(batch)
        B = memory.shape[0]
        dec = torch.full((B, 1), BOS_ID, dtype=torch.long)
        done = torch.zeros(B, dtype=torch.bool)
        ids = [[] for _ in range(B)]
        logps = [[] for _ in range(B)]
        for _ in range(max_len):
            logits = self.net_.decode(memory, valid, dec)[:, -1]
            logp = torch.log_softmax(logits, -1)
            pick = logp.argmax(-1)
            for b in range(B):
                if done[b]:
                    continue
                ids[b].append(int(pick[b]))
                logps[b].append(float(logp[b, pick[b]]))
                if int(pick[b]) == EOS_ID:
                    done[b] = True
            if bool(done.all()):
                break
            dec = torch.cat([dec, pick[:, None]], 1)
        results = []
        for seq, lp in zip(ids, logps):
            body = seq[: seq.index(EOS_ID)] if EOS_ID in seq else seq
            results.append(GenerationResult(seq, self.vocab_.decode(body), lp))
        return results

    def generate(self, X, max_len: int | None = None) -> list[GenerationResult]:
        feats = self._featurize(X)
        with torch.no_grad():
            return self.generate_batch(to_batch(feats, None, self.torch_dtype), max_len)

    def _decode(self, feats, index):
        return [r.answer for r in self.generate_batch(to_batch(feats, index, self.torch_dtype))]
