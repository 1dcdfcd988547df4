"""Input checks shared by the estimators."""

from __future__ import annotations

from .corpus.types import ImageRecord, VQAInput
from .exceptions import EmptyGroundTruth


def check_inputs(X) -> list[VQAInput]:
    """Accept ``VQAInput`` or plain ``(image, question[, language])`` tuples."""
    out = []
    for i, item in enumerate(X):
        if not isinstance(item, VQAInput):
            try:
                item = VQAInput(*item)
            except TypeError as exc:
                raise TypeError(f"X[{i}] is not an (image, question) pair") from exc
        if not isinstance(item.image, ImageRecord):
            raise TypeError(f"X[{i}].image must be an ImageRecord, got {type(item.image).__name__}")
        if not isinstance(item.question, str):
            raise TypeError(f"X[{i}].question must be a string")
        out.append(item)
    if not out:
        raise ValueError("no samples given")
    return out


def check_answers(y, n: int) -> list[list[str]]:
    y = [[a] if isinstance(a, str) else list(a) for a in y]
    if len(y) != n:
        raise ValueError(f"X has {n} samples but y has {len(y)}")
    for i, answers in enumerate(y):
        if not answers:
            raise EmptyGroundTruth(f"y[{i}] has no ground-truth answers")
        if not all(isinstance(a, str) for a in answers):
            raise TypeError(f"y[{i}] must contain strings")
    return y


def check_vqa_data(X, y):
    X = check_inputs(X)
    return X, check_answers(y, len(X))
