"""Multimodal transformer with an iterative dynamic-pointer answer decoder.

Question subwords, OCR tokens and detector regions are encoded jointly with
the decoder steps in one transformer stack. Each decode step scores a fixed
answer vocabulary plus one copy slot per OCR token of the image.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import asdict, dataclass

import numpy as np
import torch
from torch import nn
from torch.nn import functional as F

from ..exceptions import ShapeMismatch
from ..harness.schedules import ScheduleSpec
from ..metrics import normalize_answer
from ..textenc.phoc import PHOCConfig
from .base import BaseVQAEstimator
from .features import featurize, pick_answer, to_batch
from .layers import Block, masked_mean

UNK_ANSWER, END_ANSWER, BOS_ANSWER = "<unk>", "<end>", "<bos>"
ANSWER_SPECIALS = (UNK_ANSWER, END_ANSWER, BOS_ANSWER)
UNK_IDX, END_IDX, BOS_IDX = range(3)
BOX_DIM = 6


@dataclass(frozen=True)
class PointerModelConfig:
    vocab_size: int
    answer_vocab_size: int
    feature_dim: int
    d_model: int = 64
    n_layers: int = 2
    n_heads: int = 4
    ff_mult: int = 2
    max_question_len: int = 16
    max_ocr: int = 8
    max_ocr_subwords: int = 4
    max_visual: int = 4
    max_decode_steps: int = 3
    flavor: str = "multi"
    use_visual: bool = True
    phoc_dim: int = 604

    def __post_init__(self):
        for name in ("vocab_size", "answer_vocab_size", "d_model", "n_layers", "n_heads",
                     "max_question_len", "max_ocr", "max_ocr_subwords", "max_decode_steps"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.answer_vocab_size < len(ANSWER_SPECIALS):
            raise ValueError("answer vocabulary must hold the special entries")
        if self.flavor not in ("mono", "multi"):
            raise ValueError(f"unknown flavor {self.flavor!r}")

    @property
    def uses_phoc(self) -> bool:
        return self.flavor == "mono"

    @property
    def n_slots(self) -> int:
        return self.answer_vocab_size + self.max_ocr


def pointer_scores(state, ocr_outputs, mask, state_proj: nn.Linear, ocr_proj: nn.Linear):
    """``score_i = (W_s s + b_s) . (W_o o_i + b_o)``; masked slots get -inf.

    ``state`` is (D,) or (..., T_dec, D); ``ocr_outputs`` is (..., T, D) and
    ``mask`` (..., T). Returns (T,) or (..., T_dec, T).
    """
    scores = state_proj(state) @ ocr_proj(ocr_outputs).transpose(-1, -2)
    mask = mask.bool()
    if scores.dim() > mask.dim():
        mask = mask.unsqueeze(-2)
    return scores.masked_fill(~mask, float("-inf"))


def step_loss(logits, targets, step_mask=None):
    """Mean binary cross-entropy over unmasked steps and finite (unpadded) slots."""
    valid = torch.isfinite(logits)
    if step_mask is not None:
        valid = valid & step_mask[..., None].bool()
    safe = torch.where(valid, logits, torch.zeros_like(logits))
    per = F.binary_cross_entropy_with_logits(safe, targets.to(logits.dtype), reduction="none")
    per = torch.where(valid, per, torch.zeros_like(per))
    return per.sum() / valid.sum().clamp_min(1)


class PointerNet(nn.Module):
    def __init__(self, config: PointerModelConfig, padding_idx: int = 0):
        super().__init__()
        c = self.config = config
        d = c.d_model
        self.text_emb = nn.Embedding(c.vocab_size, d, padding_idx=padding_idx)
        self.q_pos = nn.Embedding(c.max_question_len, d)
        # Content and box features get separate projections and norms, so
        # the 604-dim PHOC block cannot drown the six box coordinates.
        self.ocr_proj = nn.Linear(d + (c.phoc_dim if c.uses_phoc else 0), d)
        self.ocr_box_proj = nn.Linear(BOX_DIM, d)
        self.ln_ocr_box = nn.LayerNorm(d)
        if c.use_visual:
            self.vis_proj = nn.Linear(c.feature_dim, d)
            self.vis_box_proj = nn.Linear(BOX_DIM, d)
            self.ln_vis_box = nn.LayerNorm(d)
        self.ans_emb = nn.Embedding(c.answer_vocab_size, d)
        self.dec_pos = nn.Embedding(c.max_decode_steps, d)
        self.type_emb = nn.Embedding(4, d)
        self.ln_q = nn.LayerNorm(d)
        self.ln_ocr = nn.LayerNorm(d)
        self.ln_vis = nn.LayerNorm(d)
        self.ln_dec = nn.LayerNorm(d)
        self.blocks = nn.ModuleList(Block(d, c.n_heads, c.ff_mult) for _ in range(c.n_layers))
        self.ln_out = nn.LayerNorm(d)
        self.vocab_head = nn.Linear(d, c.answer_vocab_size)
        self.ptr_state = nn.Linear(d, d)
        self.ptr_ocr = nn.Linear(d, d)

    def _check(self, batch, prev_inds):
        c = self.config
        B = batch["q_ids"].shape[0]
        expect = {
            "q_ids": (B, c.max_question_len),
            "ocr_ids": (B, c.max_ocr, c.max_ocr_subwords),
            "ocr_box": (B, c.max_ocr, BOX_DIM),
            "ocr_mask": (B, c.max_ocr),
        }
        if c.use_visual:
            expect["vis_feat"] = (B, c.max_visual, c.feature_dim)
            expect["vis_mask"] = (B, c.max_visual)
        if c.uses_phoc:
            expect["ocr_phoc"] = (B, c.max_ocr, c.phoc_dim)
        for key, shape in expect.items():
            if key not in batch or tuple(batch[key].shape) != shape:
                got = tuple(batch[key].shape) if key in batch else None
                raise ShapeMismatch(f"{key}: expected {shape}, got {got}")
        if tuple(prev_inds.shape) != (B, c.max_decode_steps):
            raise ShapeMismatch(f"prev_inds: expected {(B, c.max_decode_steps)}, got {tuple(prev_inds.shape)}")

    def embed_inputs(self, batch):
        c = self.config
        q_ids = batch["q_ids"]
        B = q_ids.shape[0]
        dev = q_ids.device
        q = self.text_emb(q_ids) + self.q_pos(torch.arange(c.max_question_len, device=dev))
        q = self.ln_q(q + self.type_emb.weight[0])

        sub = self.text_emb(batch["ocr_ids"])
        pooled = masked_mean(sub, batch["ocr_ids"] != self.text_emb.padding_idx, dim=2)
        parts = [pooled]
        if c.uses_phoc:
            parts.append(batch["ocr_phoc"].to(pooled.dtype))
        box = self.ln_ocr_box(self.ocr_box_proj(batch["ocr_box"].to(pooled.dtype)))
        ocr = self.ln_ocr(self.ocr_proj(torch.cat(parts, -1))) + box + self.type_emb.weight[1]

        streams = [q, ocr]
        masks = [q_ids != self.text_emb.padding_idx, batch["ocr_mask"].bool()]
        if c.use_visual:
            vis = (self.ln_vis(self.vis_proj(batch["vis_feat"].to(pooled.dtype)))
                   + self.ln_vis_box(self.vis_box_proj(batch["vis_box"].to(pooled.dtype)))
                   + self.type_emb.weight[2])
            streams.append(vis)
            masks.append(batch["vis_mask"].bool())
        return streams, masks, ocr, B

    def forward(self, batch, prev_inds):
        """Logits (B, T_dec, V + T_max) given decoder input indices.

        ``prev_inds[:, t]`` indexes ``[answer vocab | OCR slots]`` and is the
        input of step ``t`` (``BOS_IDX`` at step 0).
        """
        c = self.config
        self._check(batch, prev_inds)
        streams, masks, ocr_in, B = self.embed_inputs(batch)
        dev = prev_inds.device
        T_dec = c.max_decode_steps

        # Decoder inputs gather from answer embeddings or the OCR input features.
        table = torch.cat([self.ans_emb.weight.expand(B, -1, -1), ocr_in], 1)
        dec = table.gather(1, prev_inds[..., None].expand(-1, -1, c.d_model))
        dec = self.ln_dec(dec + self.dec_pos(torch.arange(T_dec, device=dev)) + self.type_emb.weight[3])

        enc_valid = torch.cat(masks, 1)
        Le = enc_valid.shape[1]
        x = torch.cat(streams + [dec], 1)
        L = x.shape[1]
        allowed = torch.zeros(B, L, L, dtype=torch.bool, device=dev)
        allowed[:, :, :Le] = enc_valid[:, None, :]
        allowed[:, Le:, Le:] = torch.tril(torch.ones(T_dec, T_dec, dtype=torch.bool, device=dev))
        allowed[:, :Le, Le:] = False
        allowed |= torch.eye(L, dtype=torch.bool, device=dev)
        for block in self.blocks:
            x = block(x, allowed)
        x = self.ln_out(x)

        q_len = c.max_question_len
        ocr_out = x[:, q_len : q_len + c.max_ocr]
        dec_out = x[:, Le:]
        vocab_logits = self.vocab_head(dec_out)
        ocr_logits = pointer_scores(dec_out, ocr_out, batch["ocr_mask"].bool(), self.ptr_state, self.ptr_ocr)
        return torch.cat([vocab_logits, ocr_logits], -1)


def build_answer_vocab(y, size: int | None = None) -> list[str]:
    """Specials, then answer words by descending frequency (ties alphabetical)."""
    counts = Counter()
    for answers in y:
        for word in normalize_answer(pick_answer(answers)).split():
            counts[word] += 1
    words = sorted(counts, key=lambda w: (-counts[w], w))
    if size is not None:
        words = words[: max(0, size - len(ANSWER_SPECIALS))]
    return list(ANSWER_SPECIALS) + words


def answer_targets(answers, ocr_texts, answer_index: dict, V: int, T_max: int, T_dec: int):
    """Multi-hot targets (T_dec, V+T_max), step mask, and teacher-forcing inputs."""
    targets = np.zeros((T_dec, V + T_max), np.float32)
    step_mask = np.zeros(T_dec, bool)
    prev = np.full(T_dec, BOS_IDX, np.int64)
    ocr_norm = [normalize_answer(t) for t in ocr_texts[:T_max]]
    words = normalize_answer(pick_answer(answers)).split()
    steps = words + [END_ANSWER]
    for t, word in enumerate(steps[:T_dec]):
        step_mask[t] = True
        if word == END_ANSWER:
            targets[t, END_IDX] = 1
            choice = END_IDX
        else:
            hits = [V + i for i, o in enumerate(ocr_norm) if o == word]
            if word in answer_index:
                targets[t, answer_index[word]] = 1
            targets[t, hits] = 1
            if word in answer_index:
                choice = answer_index[word]
            elif hits:
                choice = hits[0]
            else:
                targets[t, UNK_IDX] = 1
                choice = UNK_IDX
        if t + 1 < T_dec:
            prev[t + 1] = choice
    return targets, step_mask, prev


def sample_teacher_inputs(targets, step_mask, fallback, rng: np.random.Generator):
    """Decoder inputs drawn uniformly among each step's positive slots.

    A word present both in the answer vocabulary and among the OCR tokens may
    be fed back either way, so greedy decoding sees both kinds of input.
    """
    noise = torch.from_numpy(rng.random(tuple(targets.shape))).to(targets.dtype)
    choice = (noise * targets).argmax(-1)
    has_pos = (targets.sum(-1) > 0) & step_mask.bool()
    choice = torch.where(has_pos, choice, fallback.roll(-1, dims=1))
    prev = fallback.clone()
    prev[:, 1:] = choice[:, :-1]
    return prev


class PointerVQA(BaseVQAEstimator):
    """Pointer-decoder VQA model (M4C-style with ``flavor="mono"``, M5C-style with ``"multi"``).

    ``mono`` adds PHOC vectors to the OCR representation; ``multi`` relies on
    subword embeddings alone. Either way the vocabulary comes from ``vocab``
    or is learned in ``fit`` (English-only texts for mono, all texts for multi).
    """

    family = "pointer"
    default_optimizer = "adam"

    def __init__(
        self,
        flavor="multi",
        vocab=None,
        n_merges=300,
        d_model=64,
        n_layers=2,
        n_heads=4,
        ff_mult=2,
        max_question_len=16,
        max_ocr=8,
        max_ocr_subwords=4,
        max_visual=4,
        max_decode_steps=3,
        answer_vocab_size=None,
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
        self.n_heads = n_heads
        self.ff_mult = ff_mult
        self.max_question_len = max_question_len
        self.max_ocr = max_ocr
        self.max_ocr_subwords = max_ocr_subwords
        self.max_visual = max_visual
        self.max_decode_steps = max_decode_steps
        self.answer_vocab_size = answer_vocab_size
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
        return ScheduleSpec("step_decay", base_lr=1e-3, total_iters=24000,
                            milestones=(14000, 19000), factor=0.1)

    def _prepare(self, X, y):
        self.answer_vocab_ = build_answer_vocab(y, self.answer_vocab_size)
        dims = {x.image.feature_vectors.shape[1] for x in X if x.image.n_regions}
        self.feature_dim_ = dims.pop() if dims else 0
        self.phoc_config_ = PHOCConfig(bigrams=self.vocab_.bigrams) if self.vocab_.bigrams else PHOCConfig()

    def _restore_extra(self, extra):
        self.answer_vocab_ = list(extra["answer_vocab"])
        self.feature_dim_ = int(extra["feature_dim"])
        self.phoc_config_ = PHOCConfig(bigrams=tuple(extra["phoc_bigrams"]))

    def _extra_state(self):
        return {
            "answer_vocab": self.answer_vocab_,
            "feature_dim": self.feature_dim_,
            "phoc_bigrams": list(self.phoc_config_.bigrams),
            "config": asdict(self.config_),
        }

    @property
    def config_(self) -> PointerModelConfig:
        return PointerModelConfig(
            vocab_size=self.vocab_.size,
            answer_vocab_size=len(self.answer_vocab_),
            feature_dim=self.feature_dim_,
            d_model=self.d_model,
            n_layers=self.n_layers,
            n_heads=self.n_heads,
            ff_mult=self.ff_mult,
            max_question_len=self.max_question_len,
            max_ocr=self.max_ocr,
            max_ocr_subwords=self.max_ocr_subwords,
            max_visual=self.max_visual,
            max_decode_steps=self.max_decode_steps,
            flavor=self.flavor,
            use_visual=self.use_visual and self.feature_dim_ > 0,
            phoc_dim=self.phoc_config_.dim,
        )

    def _build_net(self):
        return PointerNet(self.config_)

    def _featurize(self, X):
        c = self.config_
        return featurize(
            X, self.vocab_, c.max_question_len, c.max_ocr, c.max_ocr_subwords, c.max_visual,
            self.feature_dim_, self.phoc_config_ if c.uses_phoc else None,
        )

    def _targets(self, X, y, feats):
        c = self.config_
        index = {w: i for i, w in enumerate(self.answer_vocab_)}
        rows = [
            answer_targets(ans, texts, index, c.answer_vocab_size, c.max_ocr, c.max_decode_steps)
            for ans, texts in zip(y, feats["ocr_text"])
        ]
        return {
            "targets": np.stack([r[0] for r in rows]),
            "step_mask": np.stack([r[1] for r in rows]),
            "prev_inds": np.stack([r[2] for r in rows]),
        }

    def _loss(self, feats, targets, index, rng=None):
        batch = to_batch(feats, index, self.torch_dtype)
        t = to_batch(targets, index, self.torch_dtype)
        prev = t["prev_inds"]
        if rng is not None:
            prev = sample_teacher_inputs(t["targets"], t["step_mask"], prev, rng)
        logits = self.net_(batch, prev)
        return step_loss(logits, t["targets"], t["step_mask"])

    def decode_batch(self, batch):
        """Greedy decoding; returns per-sample choice lists and answer strings."""
        c = self.net_.config
        B = batch["q_ids"].shape[0]
        V = c.answer_vocab_size
        prev = torch.full((B, c.max_decode_steps), BOS_IDX, dtype=torch.long)
        done = torch.zeros(B, dtype=torch.bool)
        choices = [[] for _ in range(B)]
        for t in range(c.max_decode_steps):
            logits = self.net_(batch, prev)[:, t].clone()
            logits[:, BOS_IDX] = float("-inf")
            pick = logits.argmax(-1)
            for b in range(B):
                if done[b]:
                    continue
                choices[b].append(int(pick[b]))
                if int(pick[b]) == END_IDX:
                    done[b] = True
            if t + 1 < c.max_decode_steps:
                prev[:, t + 1] = pick
            if bool(done.all()):
                break
        answers = []
        for b, seq in enumerate(choices):
            words = []
            for k in seq:
                if k == END_IDX:
                    break
                if k >= V:
                    words.append(batch["ocr_text"][b][k - V])
                elif k != UNK_IDX:
                    words.append(self.answer_vocab_[k])
            answers.append(" ".join(words))
        return choices, answers

    def _decode(self, feats, index):
        return self.decode_batch(to_batch(feats, index, self.torch_dtype))[1]
