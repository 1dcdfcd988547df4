"""Shared estimator machinery: vocabulary setup, training loop, persistence."""

from __future__ import annotations

import logging
from pathlib import Path

import numpy as np
import torch
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from ..corpus.types import SOURCE_LANGUAGE
from ..exceptions import CheckpointError, DivergenceDetected, VocabMismatch
from ..harness.schedules import ScheduleSpec, lr_at
from ..metrics import accuracy_score
from ..textenc.bpe import BPEVocab, train_bpe
from ..validation import check_answers, check_inputs, check_vqa_data
from .checkpoint import parameter_digest, read_checkpoint, write_checkpoint
from .layers import init_parameters

logger = logging.getLogger(__name__)

FLAVORS = ("mono", "multi")


def vocab_corpus_for(X, y, flavor: str) -> list[str]:
    """Texts a vocabulary is learned from when none is supplied.

    ``mono`` keeps English questions only; ``multi`` keeps every language.
    OCR strings and answers are always included.
    """
    texts = [x.question for x in X if flavor == "multi" or x.language == SOURCE_LANGUAGE]
    seen = set()
    for x in X:
        if id(x.image) in seen:
            continue
        seen.add(id(x.image))
        texts.extend(t.text for t in x.image.ocr_tokens)
    for answers in y:
        texts.extend(answers)
    return texts


class BaseVQAEstimator(BaseEstimator):
    """Common fit/predict/score/save logic for both model families.

    Subclasses provide ``_prepare`` (answer-side setup and ``config_``),
    ``_build_net``, ``_featurize``, ``_targets``, ``_loss`` and ``_decode``.
    """

    family = ""
    default_optimizer = "adam"

    # -- vocabulary / schedule -------------------------------------------

    def _fit_vocab(self, X, y, vocab_corpus):
        if self.flavor not in FLAVORS:
            raise ValueError(f"flavor must be one of {FLAVORS}, got {self.flavor!r}")
        if self.vocab is not None:
            vocab = self.vocab
            return BPEVocab.load(vocab) if isinstance(vocab, (str, Path)) else vocab
        corpus = vocab_corpus if vocab_corpus is not None else vocab_corpus_for(X, y, self.flavor)
        return train_bpe(corpus, self.n_merges)

    def _default_schedule(self) -> ScheduleSpec:
        raise NotImplementedError

    def schedule_(self) -> ScheduleSpec:
        spec = self.schedule
        if spec is None:
            spec = self._default_schedule()
        elif isinstance(spec, dict):
            spec = ScheduleSpec.from_dict(spec)
        if spec.total_iters != self.max_iter:
            spec = spec.scaled(self.max_iter)
        return spec

    @property
    def torch_dtype(self):
        return torch.float64 if self.dtype == "float64" else torch.float32

    # -- training ---------------------------------------------------------

    def _init_net(self, torch_seed: int):
        net = self._build_net()
        init_parameters(net, torch.Generator().manual_seed(torch_seed))
        return net.to(self.torch_dtype)

    def _make_optimizer(self, params):
        kind = self.optimizer or self.default_optimizer
        if kind == "adam":
            return torch.optim.Adam(params, lr=0.0)
        if kind == "adamw":
            return torch.optim.AdamW(params, lr=0.0, weight_decay=self.weight_decay)
        raise ValueError(f"unknown optimizer {kind!r}")

    def fit(self, X, y, vocab_corpus=None, callback=None):
        """Train from scratch.

        ``callback(estimator, iteration, loss)`` is called after every step;
        the harness uses it for periodic checkpoints.
        """
        X, y = check_vqa_data(X, y)
        rng = np.random.default_rng(self.seed)
        torch_seed = int(rng.integers(2**62))
        self.vocab_ = self._fit_vocab(X, y, vocab_corpus)
        self._prepare(X, y)
        self.net_ = self._init_net(torch_seed)

        feats = self._featurize(X)
        targets = self._targets(X, y, feats)
        schedule = self.schedule_()
        opt = self._make_optimizer(self.net_.parameters())
        n = len(X)
        bs = min(self.batch_size, n)
        order, pos = rng.permutation(n), 0
        self.loss_curve_, self.lr_history_ = [], []
        self.net_.train()
        for it in range(self.max_iter):
            if pos + bs > n:
                order, pos = rng.permutation(n), 0
            index = order[pos : pos + bs]
            pos += bs
            lr = lr_at(schedule, it)
            for group in opt.param_groups:
                group["lr"] = lr
            loss = self._loss(feats, targets, index, rng)
            value = float(loss.detach())
            if not np.isfinite(value):
                raise DivergenceDetected(f"iteration {it}: loss is {value} (lr={lr:g})")
            opt.zero_grad()
            loss.backward()
            if self.clip_norm:
                torch.nn.utils.clip_grad_norm_(self.net_.parameters(), self.clip_norm)
            opt.step()
            self.loss_curve_.append(value)
            self.lr_history_.append(lr)
            if self.verbose and (it % max(1, self.max_iter // 10) == 0):
                logger.info("%s iter %d loss %.4f lr %.2e", self.family, it, value, lr)
            if callback is not None:
                callback(self, it, value)
        self.net_.eval()
        self.n_iter_ = self.max_iter
        return self

    # -- inference --------------------------------------------------------

    def predict(self, X, batch_size: int = 64) -> list[str]:
        check_is_fitted(self, "net_")
        X = check_inputs(X)
        feats = self._featurize(X)
        out = []
        self.net_.eval()
        with torch.no_grad():
            for start in range(0, len(X), batch_size):
                index = np.arange(start, min(start + batch_size, len(X)))
                out.extend(self._decode(feats, index))
        return out

    def score(self, X, y) -> float:
        """Mean exact-match accuracy."""
        preds = self.predict(X)
        y = check_answers(y, len(preds))
        return float(np.mean([accuracy_score(p, gts) for p, gts in zip(preds, y)]))

    # -- persistence ------------------------------------------------------

    def _extra_state(self) -> dict:
        return {}

    def _restore_extra(self, extra: dict) -> None:
        pass

    def parameter_digest(self) -> str:
        check_is_fitted(self, "net_")
        return parameter_digest(self.net_)

    def save(self, path, vocab_path=None) -> Path:
        """Write the checkpoint and (unless ``vocab_path`` is given) a vocab sidecar."""
        check_is_fitted(self, "net_")
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        if vocab_path is None:
            vocab_path = path.with_name(path.name + ".vocab")
            self.vocab_.save(vocab_path)
        params = self.get_params(deep=False)
        params["vocab"] = None
        sched = self.schedule_()
        params["schedule"] = sched.to_dict()
        header = {
            "family": self.family,
            "params": params,
            "vocab_sha256": self.vocab_.sha256(),
            "vocab_file": str(Path(vocab_path).name),
            "extra": self._extra_state(),
        }
        write_checkpoint(path, header, self.net_.state_dict())
        return path

    @classmethod
    def load(cls, path, vocab=None):
        """Rebuild an estimator from a checkpoint.

        ``vocab`` (a BPEVocab or file path) defaults to the sidecar named in the
        header; a hash mismatch raises :class:`VocabMismatch`.
        """
        path = Path(path)
        header, tensors = read_checkpoint(path)
        if cls.family and header.get("family") != cls.family:
            raise CheckpointError(f"{path}: family {header.get('family')!r}, expected {cls.family!r}")
        if vocab is None:
            vocab = path.with_name(header["vocab_file"])
        if isinstance(vocab, (str, Path)):
            vocab = BPEVocab.load(vocab)
        if vocab.sha256() != header["vocab_sha256"]:
            raise VocabMismatch(
                f"{path}: vocab hash {vocab.sha256()[:12]} != checkpoint {header['vocab_sha256'][:12]}"
            )
        est = cls(**header["params"])
        est.vocab_ = vocab
        est._restore_extra(header["extra"])
        net = est._build_net().to(est.torch_dtype)
        state = {k: v.to(est.torch_dtype) for k, v in tensors.items()}
        net.load_state_dict(state)
        net.eval()
        est.net_ = net
        return est


def load_estimator(path, vocab=None):
    """Load a checkpoint of either family, dispatching on its header."""
    from .pointer import PointerVQA
    from .seq2seq import Seq2SeqVQA

    header, _ = read_checkpoint(path)
    family = header.get("family")
    for cls in (PointerVQA, Seq2SeqVQA):
        if cls.family == family:
            return cls.load(path, vocab=vocab)
    raise CheckpointError(f"{path}: unknown model family {family!r}")
