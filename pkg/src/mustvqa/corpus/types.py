"""Dataset records: OCR tokens, visual regions, images, questions, manifests."""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from types import MappingProxyType
from typing import Mapping, NamedTuple, Sequence

import numpy as np

LANGUAGE_RE = re.compile(r"^[a-z]{2}$")

# Column order used in every report table; unknown tags are appended sorted.
LANGUAGE_ORDER = ("en", "ca", "es", "zh", "it", "el")

SOURCE_LANGUAGE = "en"
REFERENCE_TRANSLATOR = "reference"


def is_language_tag(code) -> bool:
    return isinstance(code, str) and LANGUAGE_RE.match(code) is not None


def order_languages(languages) -> list[str]:
    known = [lang for lang in LANGUAGE_ORDER if lang in languages]
    return known + sorted(set(languages) - set(LANGUAGE_ORDER))


def box_problem(box) -> str | None:
    """Return a description of what is wrong with ``box``, or None if valid."""
    if len(box) != 4:
        return f"box needs 4 coordinates, got {len(box)}"
    x0, y0, x1, y1 = (float(c) for c in box)
    if not all(0.0 <= c <= 1.0 for c in (x0, y0, x1, y1)):
        return f"coordinate out of [0,1] in {tuple(box)}"
    if x0 > x1 or y0 > y1:
        return f"inverted box {tuple(box)}"
    return None


def box_features(box) -> tuple[float, float, float, float, float, float]:
    """(x0, y0, x1, y1, width, height) of a normalized box."""
    x0, y0, x1, y1 = box
    return (x0, y0, x1, y1, x1 - x0, y1 - y0)


@dataclass(frozen=True)
class OCRToken:
    text: str
    box: tuple[float, float, float, float]


@dataclass(frozen=True)
class VisualFeature:
    vector: np.ndarray
    box: tuple[float, float, float, float]


@dataclass(frozen=True, eq=False)
class ImageRecord:
    """One image: its OCR tokens in reading order and its detector regions.

    Region features are kept as two arrays, ``feature_boxes`` of shape (M, 4)
    and ``feature_vectors`` of shape (M, D_v).
    """

    image_id: str
    width: int
    height: int
    ocr_tokens: tuple[OCRToken, ...] = ()
    feature_boxes: np.ndarray = field(default_factory=lambda: np.zeros((0, 4), np.float32))
    feature_vectors: np.ndarray = field(default_factory=lambda: np.zeros((0, 0), np.float32))
    feats_ref: str | None = None

    @property
    def visual_features(self) -> list[VisualFeature]:
        return [
            VisualFeature(v, tuple(float(c) for c in b))
            for b, v in zip(self.feature_boxes, self.feature_vectors)
        ]

    @property
    def n_regions(self) -> int:
        return int(self.feature_boxes.shape[0])

    def __eq__(self, other):
        # feats_ref only says where the arrays were stored, so it is ignored.
        if not isinstance(other, ImageRecord):
            return NotImplemented
        return (
            self.image_id == other.image_id
            and self.width == other.width
            and self.height == other.height
            and self.ocr_tokens == other.ocr_tokens
            and np.array_equal(self.feature_boxes, other.feature_boxes)
            and np.array_equal(self.feature_vectors, other.feature_vectors)
        )

    __hash__ = None


@dataclass(frozen=True)
class QuestionRecord:
    question_id: str
    image_id: str
    text: str
    language: str
    translator: str
    answers: tuple[str, ...]
    source_question_id: str

    @property
    def key(self) -> tuple[str, str, str]:
        return (self.question_id, self.language, self.translator)


@dataclass(frozen=True, eq=False)
class DatasetManifest:
    name: str
    images: Mapping[str, ImageRecord]
    questions: tuple[QuestionRecord, ...]
    feature_dim: int

    def __post_init__(self):
        object.__setattr__(self, "images", MappingProxyType(dict(self.images)))
        object.__setattr__(self, "questions", tuple(self.questions))

    @property
    def languages(self) -> list[str]:
        return order_languages({q.language for q in self.questions})

    def source_questions(self) -> list[QuestionRecord]:
        return [q for q in self.questions if q.language == SOURCE_LANGUAGE]

    def replace_questions(self, questions: Sequence[QuestionRecord]) -> "DatasetManifest":
        return DatasetManifest(self.name, self.images, tuple(questions), self.feature_dim)

    def __eq__(self, other):
        if not isinstance(other, DatasetManifest):
            return NotImplemented
        return (
            self.name == other.name
            and self.feature_dim == other.feature_dim
            and self.questions == other.questions
            and dict(self.images) == dict(other.images)
        )

    __hash__ = None


class VQAInput(NamedTuple):
    """One model input: the image side plus the question text."""

    image: ImageRecord
    question: str
    language: str = SOURCE_LANGUAGE


def samples(manifest: DatasetManifest, questions: Sequence[QuestionRecord] | None = None):
    """Turn question records into estimator inputs ``(X, y)``."""
    if questions is None:
        questions = manifest.questions
    X = [VQAInput(manifest.images[q.image_id], q.text, q.language) for q in questions]
    y = [list(q.answers) for q in questions]
    return X, y
