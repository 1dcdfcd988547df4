"""IID, zero-shot and translation-robustness evaluation over frozen checkpoints."""

from __future__ import annotations

import json
import logging
from pathlib import Path

from ..corpus.split import SplitSpec
from ..corpus.translate import TranslationCache, TranslatorClient, translate_questions
from ..corpus.types import SOURCE_LANGUAGE, DatasetManifest, samples
from ..exceptions import CheckpointError
from ..metrics import EvalReport, Prediction, aggregate, render_table, score_predictions
from ..models.base import load_estimator
from ..models.checkpoint import file_sha256

logger = logging.getLogger(__name__)


def _as_split(split) -> SplitSpec:
    return split if isinstance(split, SplitSpec) else SplitSpec.load(split)


def _as_estimator(model, vocab=None):
    if isinstance(model, (str, Path)):
        return load_estimator(model, vocab=vocab)
    return model


def predict_records(estimator, manifest: DatasetManifest, records) -> list[Prediction]:
    records = list(records)
    if not records:
        return []
    X, _ = samples(manifest, records)
    answers = estimator.predict(X)
    return [Prediction(q.question_id, q.language, q.translator, a) for q, a in zip(records, answers)]


def _report(estimator, manifest, records, languages, avg_languages, protocol, name,
            iid_avg=None, mode="exact", tau=0.5):
    preds = predict_records(estimator, manifest, records)
    rows = score_predictions(preds, records, mode=mode, tau=tau)
    return aggregate(rows, avg_languages, protocol, universe=languages, name=name, iid_avg=iid_avg)


def evaluate(
    checkpoint,
    manifest: DatasetManifest,
    split,
    protocol: str = "iid",
    partition: str = "val",
    vocab=None,
    name: str = "",
    mode: str = "exact",
) -> EvalReport:
    """Score a checkpoint on one protocol. Weights are never updated.

    ``iid`` scores the train languages; ``zeroshot`` scores the zero-shot
    languages and carries the IID Avg alongside. ``partition`` picks the val
    (default) or train source questions.
    """
    split = _as_split(split)
    if partition not in ("train", "val"):
        raise ValueError(f"partition must be train or val, got {partition!r}")
    is_file = isinstance(checkpoint, (str, Path))
    before = file_sha256(checkpoint) if is_file else None
    est = _as_estimator(checkpoint, vocab)
    digest = est.parameter_digest()

    iid_records = split.train(manifest) if partition == "train" else split.val(manifest)
    iid = _report(est, manifest, iid_records, split.train_languages, split.train_languages,
                  "iid", name or "iid", mode=mode)
    if protocol == "iid":
        report = iid
    elif protocol == "zeroshot":
        if not split.zeroshot_languages:
            raise ValueError("split has no zero-shot languages")
        report = _report(est, manifest, split.zeroshot(manifest, partition), split.zeroshot_languages,
                         split.zeroshot_languages, "zeroshot", name or "zeroshot",
                         iid_avg=iid.avg, mode=mode)
    else:
        raise ValueError(f"evaluate handles iid and zeroshot, got {protocol!r}")

    if est.parameter_digest() != digest or (is_file and file_sha256(checkpoint) != before):
        raise CheckpointError("parameters changed during evaluation")
    report.meta.update(partition=partition, parameter_digest=digest,
                       n_questions=sum(c.count for c in report.cells.values() if c))
    if is_file:
        report.meta["checkpoint_sha256"] = before
    return report


def backend_manifest(base: DatasetManifest, backend: TranslatorClient, targets,
                     cache: TranslationCache | None = None):
    """English sources of ``base`` plus fresh ``backend`` translations.

    Returns the new manifest and the skipped ``(source, target)`` pairs. The
    base manifest is not modified.
    """
    english = base.replace_questions(base.source_questions())
    result = translate_questions(english, targets, backend,
                                 cache=cache if cache is not None else TranslationCache(),
                                 replace_existing=True)
    return result.manifest, result.skipped


def robustness_sweep(
    checkpoint,
    base_manifest: DatasetManifest,
    split,
    backends,
    cache: TranslationCache | None = None,
    vocab=None,
    mode: str = "exact",
) -> list[EvalReport]:
    """One report per backend over the translated (non-English) languages.

    Each backend regenerates every non-English question from its English
    source; the model stays frozen. Unsupported languages come out as empty
    cells, and every report carries the reference IID Avg.
    """
    split = _as_split(split)
    est = _as_estimator(checkpoint, vocab)
    reference = evaluate(est, base_manifest, split, "iid", mode=mode)
    languages = [lang for lang in split.train_languages + split.zeroshot_languages
                 if lang != SOURCE_LANGUAGE]
    sources = set(split.val_sources)
    reports = []
    for backend in backends:
        manifest, skipped = backend_manifest(base_manifest, backend, languages, cache)
        records = [q for q in manifest.questions
                   if q.language in languages and q.source_question_id in sources]
        report = _report(est, manifest, records, languages, [], "robustness", backend.name,
                         iid_avg=reference.avg, mode=mode)
        report.meta["skipped"] = [t for _, t in skipped]
        reports.append(report)
        logger.info("sweep %s: skipped %s", backend.name, report.meta["skipped"])
    return reports


def emit_report(reports, out, metrics=("accuracy", "anls"), title: str = "") -> list[Path]:
    """Write ``<out>.json`` plus one ``<out>.<metric>.txt`` table per metric."""
    out = Path(out)
    out.parent.mkdir(parents=True, exist_ok=True)
    reports = list(reports)
    json_path = out.with_name(out.name + ".json")
    json_path.write_text(
        json.dumps([r.to_dict() for r in reports], indent=1, ensure_ascii=False) + "\n",
        encoding="utf-8",
    )
    written = [json_path]
    for metric in metrics:
        path = out.with_name(f"{out.name}.{metric}.txt")
        heading = f"{title} ({metric})" if title else metric
        path.write_text(render_table(reports, metric, heading), encoding="utf-8")
        written.append(path)
    return written


def load_reports(path) -> list[EvalReport]:
    data = json.loads(Path(path).read_text(encoding="utf-8"))
    if isinstance(data, dict):
        data = [data]
    return [EvalReport.from_dict(d) for d in data]
