"""JSON-lines manifest reader/writer and the binary visual-feature sidecar.

Manifest lines::

    {"kind": "meta", "name": ..., "feature_dim": D_v}            (optional)
    {"kind": "image", "image_id", "width", "height",
     "ocr": [{"text", "box": [x0, y0, x1, y1]}], "feats_ref"}
    {"kind": "question", "question_id", "image_id", "text", "language",
     "translator", "answers": [...], "source_question_id"}

Sidecar (little endian): ``b"MVQF"``, u32 version, u32 M, u32 D_v, then M rows
of 4 f32 box coordinates followed by D_v f32 feature values.
"""

from __future__ import annotations

import json
import logging
import os
import struct
from collections import Counter
from pathlib import Path

import numpy as np

from ..exceptions import EmptyAnswers, ManifestError, MalformedBox, MissingImage
from .types import (
    SOURCE_LANGUAGE,
    DatasetManifest,
    ImageRecord,
    OCRToken,
    QuestionRecord,
    box_problem,
    is_language_tag,
)

logger = logging.getLogger(__name__)

FEATURE_MAGIC = b"MVQF"
FEATURE_VERSION = 1
_HEADER = struct.Struct("<4sIII")


def write_features(path, boxes: np.ndarray, vectors: np.ndarray) -> None:
    boxes = np.asarray(boxes, dtype="<f4").reshape(-1, 4)
    vectors = np.asarray(vectors, dtype="<f4")
    m = boxes.shape[0]
    d = vectors.shape[1] if vectors.ndim == 2 else 0
    rows = np.concatenate([boxes, vectors.reshape(m, d)], axis=1).astype("<f4")
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(FEATURE_MAGIC, FEATURE_VERSION, m, d))
        fh.write(rows.tobytes(order="C"))


def read_features(path) -> tuple[np.ndarray, np.ndarray]:
    """Return ``(boxes (M, 4), vectors (M, D_v))`` as float32 arrays."""
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < _HEADER.size:
        raise ValueError(f"{path}: truncated feature header")
    magic, version, m, d = _HEADER.unpack_from(raw)
    if magic != FEATURE_MAGIC:
        raise ValueError(f"{path}: bad magic {magic!r}")
    if version != FEATURE_VERSION:
        raise ValueError(f"{path}: unsupported feature version {version}")
    expected = _HEADER.size + 4 * m * (4 + d)
    if len(raw) != expected:
        raise ValueError(f"{path}: expected {expected} bytes, found {len(raw)}")
    rows = np.frombuffer(raw, dtype="<f4", offset=_HEADER.size).reshape(m, 4 + d)
    return rows[:, :4].astype(np.float32), rows[:, 4:].astype(np.float32)


class _Issue:
    def __init__(self, kind, where, message, record=None):
        self.kind, self.where, self.message = kind, where, message
        self.record = record

    def __str__(self):
        return f"{self.where}: {self.message}"


_ERROR_FOR = {"image": MissingImage, "box": MalformedBox, "answers": EmptyAnswers}


def validate_manifest(manifest: DatasetManifest) -> list[_Issue]:
    """Full scan of every invariant; returns all issues found (empty if valid)."""
    issues = []
    for image in manifest.images.values():
        issues.extend(_image_issues(image, manifest.feature_dim))
    issues.extend(_question_issues(manifest.questions, manifest.images))
    return issues


def _image_issues(image: ImageRecord, feature_dim: int) -> list[_Issue]:
    where = f"image {image.image_id!r}"
    out = []
    if image.width <= 0 or image.height <= 0:
        out.append(_Issue("other", where, "width/height must be positive"))
    for i, tok in enumerate(image.ocr_tokens):
        problem = box_problem(tok.box)
        if problem:
            out.append(_Issue("box", f"{where} ocr[{i}]", problem))
        if not tok.text.strip():
            out.append(_Issue("other", f"{where} ocr[{i}]", "empty OCR text"))
    for m, box in enumerate(image.feature_boxes):
        problem = box_problem(box)
        if problem:
            out.append(_Issue("box", f"{where} region[{m}]", problem))
    if image.n_regions and image.feature_vectors.shape[1] != feature_dim:
        out.append(
            _Issue(
                "other",
                where,
                f"feature length {image.feature_vectors.shape[1]} != feature_dim {feature_dim}",
            )
        )
    return out


def _question_issues(questions, images) -> list[_Issue]:
    out = []
    keys = Counter(q.key for q in questions)
    sources = {q.question_id for q in questions if q.language == SOURCE_LANGUAGE}
    for q in questions:
        where = f"question {q.question_id!r} [{q.language}/{q.translator}]"
        if q.image_id not in images:
            out.append(_Issue("image", where, f"dangling image_id {q.image_id!r}", q))
        if not q.answers:
            out.append(_Issue("answers", where, "answers list is empty", q))
        if not is_language_tag(q.language):
            out.append(_Issue("other", where, f"bad language tag {q.language!r}", q))
        if not q.translator:
            out.append(_Issue("other", where, "empty translator tag", q))
        if keys[q.key] > 1:
            out.append(_Issue("other", where, "duplicate (question_id, language, translator)", q))
        if q.language != SOURCE_LANGUAGE and q.source_question_id not in sources:
            msg = f"dangling source_question_id {q.source_question_id!r}"
            out.append(_Issue("other", where, msg, q))
    return out


def _raise(issues):
    kinds = [i.kind for i in issues]
    for kind in ("image", "box", "answers"):
        if kind in kinds:
            raise _ERROR_FOR[kind](issues)
    raise ManifestError(issues)


def _parse_image(obj, base_dir: Path) -> ImageRecord:
    ocr = tuple(
        OCRToken(str(t["text"]), tuple(float(c) for c in t["box"])) for t in obj.get("ocr", [])
    )
    feats_ref = obj.get("feats_ref")
    if feats_ref:
        boxes, vectors = read_features(base_dir / feats_ref)
    else:
        boxes, vectors = np.zeros((0, 4), np.float32), np.zeros((0, 0), np.float32)
    return ImageRecord(
        image_id=str(obj["image_id"]),
        width=int(obj.get("width", 1)),
        height=int(obj.get("height", 1)),
        ocr_tokens=ocr,
        feature_boxes=boxes,
        feature_vectors=vectors,
        feats_ref=feats_ref,
    )


def _parse_question(obj) -> QuestionRecord:
    qid = str(obj["question_id"])
    return QuestionRecord(
        question_id=qid,
        image_id=str(obj["image_id"]),
        text=str(obj["text"]),
        language=str(obj.get("language", SOURCE_LANGUAGE)),
        translator=str(obj.get("translator", "reference")),
        answers=tuple(str(a) for a in obj.get("answers", [])),
        source_question_id=str(obj.get("source_question_id", qid)),
    )


def load_manifest(path, lenient: bool = False) -> DatasetManifest:
    """Read and validate a manifest file.

    Strict mode raises on the first failing category but the error lists every
    offending record. With ``lenient=True`` bad images (and their questions) and
    bad questions are dropped with a warning instead.
    """
    path = Path(path)
    name, feature_dim = path.stem, None
    images: dict[str, ImageRecord] = {}
    questions: list[QuestionRecord] = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
                kind = obj["kind"]
            except (json.JSONDecodeError, KeyError, TypeError) as exc:
                raise ManifestError([f"{path}:{lineno}: unparseable line ({exc})"]) from exc
            if kind == "meta":
                name = obj.get("name", name)
                feature_dim = obj.get("feature_dim", feature_dim)
            elif kind == "image":
                rec = _parse_image(obj, path.parent)
                images[rec.image_id] = rec
            elif kind == "question":
                questions.append(_parse_question(obj))
            else:
                raise ManifestError([f"{path}:{lineno}: unknown line kind {kind!r}"])
    if feature_dim is None:
        dims = {im.feature_vectors.shape[1] for im in images.values() if im.n_regions}
        feature_dim = dims.pop() if len(dims) == 1 else 0
    manifest = DatasetManifest(name, images, questions, int(feature_dim))

    issues = validate_manifest(manifest)
    if not issues:
        return manifest
    if not lenient:
        _raise(issues)
    for issue in issues:
        logger.warning("dropping invalid record: %s", issue)
    bad_images = {
        im.image_id for im in images.values() if _image_issues(im, manifest.feature_dim)
    }
    kept_images = {k: v for k, v in images.items() if k not in bad_images}
    kept = [q for q in questions if q.image_id in kept_images]
    # Dropping a source question can orphan its translations, so iterate.
    while True:
        bad = {id(i.record) for i in _question_issues(kept, kept_images)}
        if not bad:
            break
        kept = [q for q in kept if id(q) not in bad]
    return DatasetManifest(name, kept_images, kept, manifest.feature_dim)


def save_manifest(manifest: DatasetManifest, path, feats_dir: str = "feats") -> None:
    """Write ``manifest`` as JSON lines, with one feature sidecar per image."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = [{"kind": "meta", "name": manifest.name, "feature_dim": manifest.feature_dim}]
    for image in manifest.images.values():
        feats_ref = None
        if image.n_regions:
            feats_ref = f"{feats_dir}/{image.image_id}.mvqf"
            os.makedirs(path.parent / feats_dir, exist_ok=True)
            write_features(path.parent / feats_ref, image.feature_boxes, image.feature_vectors)
        lines.append(
            {
                "kind": "image",
                "image_id": image.image_id,
                "width": image.width,
                "height": image.height,
                "ocr": [{"text": t.text, "box": list(t.box)} for t in image.ocr_tokens],
                "feats_ref": feats_ref,
            }
        )
    for q in manifest.questions:
        lines.append(
            {
                "kind": "question",
                "question_id": q.question_id,
                "image_id": q.image_id,
                "text": q.text,
                "language": q.language,
                "translator": q.translator,
                "answers": list(q.answers),
                "source_question_id": q.source_question_id,
            }
        )
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for obj in lines:
            fh.write(json.dumps(obj, ensure_ascii=False) + "\n")
