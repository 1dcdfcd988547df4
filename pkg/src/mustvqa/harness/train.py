"""Training runs: config in, checkpoints and a run record out."""

from __future__ import annotations

import json
import logging
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

from ..corpus.manifest import load_manifest
from ..corpus.split import SplitSpec, build_split
from ..corpus.types import SOURCE_LANGUAGE, DatasetManifest, samples
from ..models.checkpoint import file_sha256
from ..models.pointer import PointerVQA
from ..models.seq2seq import Seq2SeqVQA
from ..textenc.bpe import BPEVocab, train_bpe
from .config import ExperimentConfig
from .protocols import evaluate

logger = logging.getLogger(__name__)

ESTIMATORS = {"pointer": PointerVQA, "seq2seq": Seq2SeqVQA}


@dataclass
class RunRecord:
    config_hash: str
    config: dict
    checkpoint: str
    checkpoint_sha256: str
    split: str
    loss_samples: list = field(default_factory=list)
    checkpoints: list = field(default_factory=list)
    reports: list = field(default_factory=list)
    parameter_digest: str = ""
    seconds: float = 0.0

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(asdict(self), indent=1, ensure_ascii=False) + "\n",
                              encoding="utf-8")

    @classmethod
    def load(cls, path) -> "RunRecord":
        return cls(**json.loads(Path(path).read_text(encoding="utf-8")))


def make_estimator(config: ExperimentConfig):
    return ESTIMATORS[config.family](**config.estimator_params())


def vocab_corpus(manifest: DatasetManifest, split: SplitSpec, flavor: str) -> list[str]:
    """Unlabeled text for the subword vocabulary.

    ``multi`` reads questions of the train sources in every language of the
    manifest; ``mono`` reads the English ones only. OCR strings and train
    answers are added in both cases. No val question text is used.
    """
    sources = set(split.train_sources)
    texts = [
        q.text for q in manifest.questions
        if q.source_question_id in sources and (flavor == "multi" or q.language == SOURCE_LANGUAGE)
    ]
    for image_id in sorted(manifest.images):
        texts.extend(t.text for t in manifest.images[image_id].ocr_tokens)
    texts.extend(a for q in manifest.source_questions() if q.question_id in sources for a in q.answers)
    return texts


def resolve_split(config: ExperimentConfig, manifest: DatasetManifest) -> SplitSpec:
    if config.split:
        return SplitSpec.load(config.split)
    return build_split(manifest, config.train_languages, config.zeroshot_languages,
                       config.val_fraction, config.seed)


def train(config: ExperimentConfig, out_dir, manifest: DatasetManifest | None = None) -> RunRecord:
    """Fit the configured model, checkpointing as configured, and score IID val.

    Writes ``config.yaml`` (echo), ``split.json``, ``model.ckpt`` (+ vocab
    sidecar), optional ``ckpt-<iter>.ckpt`` files and ``run.json``.
    """
    start = time.perf_counter()
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    config.save(out / "config.yaml")
    if manifest is None:
        manifest = load_manifest(config.manifest)
    split = resolve_split(config, manifest)
    split.save(out / "split.json")

    records = split.train(manifest)
    X, y = samples(manifest, records)
    est = make_estimator(config)
    samples_, checkpoints = [], []

    def callback(model, it, loss):
        step = it + 1
        if config.loss_sample_every and (it % config.loss_sample_every == 0 or step == config.max_iter):
            samples_.append([it, loss, model.lr_history_[-1]])
        if config.checkpoint_every and step % config.checkpoint_every == 0 and step < config.max_iter:
            path = out / f"ckpt-{step:06d}.ckpt"
            model.save(path, vocab_path=vocab_path)
            checkpoints.append(str(path))

    vocab = est.vocab
    if vocab is None:
        vocab = train_bpe(vocab_corpus(manifest, split, config.flavor), est.n_merges)
    elif isinstance(vocab, (str, Path)):
        vocab = BPEVocab.load(vocab)
    vocab_path = out / "model.ckpt.vocab"
    vocab.save(vocab_path)
    est.set_params(vocab=vocab)
    est.fit(X, y, callback=callback)

    ckpt = est.save(out / "model.ckpt", vocab_path=vocab_path)
    report = evaluate(ckpt, manifest, split, "iid", name=f"{config.name} iid")
    reports = [report.to_dict()]
    if split.zeroshot_languages:
        reports.append(evaluate(ckpt, manifest, split, "zeroshot", name=f"{config.name} zeroshot").to_dict())
    record = RunRecord(
        config_hash=config.config_hash(),
        config=config.to_dict(),
        checkpoint=str(ckpt),
        checkpoint_sha256=file_sha256(ckpt),
        split=str(out / "split.json"),
        loss_samples=samples_,
        checkpoints=checkpoints,
        reports=reports,
        parameter_digest=est.parameter_digest(),
        seconds=round(time.perf_counter() - start, 3),
    )
    record.save(out / "run.json")
    return record
