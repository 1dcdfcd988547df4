"""Answer scoring (accuracy, ANLS) and per-language aggregation."""

from __future__ import annotations

import json
import unicodedata
from dataclasses import asdict, dataclass, field
from typing import Iterable, Sequence

from .corpus.types import order_languages
from .exceptions import EmptyGroundTruth, UnknownLanguage

PROTOCOLS = ("iid", "zeroshot", "robustness")


def normalize_answer(text: str) -> str:
    """NFC, case-fold, trim, collapse internal whitespace."""
    return " ".join(unicodedata.normalize("NFC", text).casefold().split())


def levenshtein(a: str, b: str) -> int:
    """Unit-cost edit distance over codepoints (two-row DP)."""
    if len(a) < len(b):
        a, b = b, a
    previous = list(range(len(b) + 1))
    for i, ca in enumerate(a, 1):
        current = [i]
        for j, cb in enumerate(b, 1):
            current.append(
                min(previous[j] + 1, current[j - 1] + 1, previous[j - 1] + (ca != cb))
            )
        previous = current
    return previous[-1]


def normalized_levenshtein(a: str, b: str) -> float:
    longest = max(len(a), len(b))
    return 0.0 if longest == 0 else levenshtein(a, b) / longest


def anls_score(pred: str, gts: Sequence[str], tau: float = 0.5, normalize: bool = True) -> float:
    """Best ``1 - NL(pred, gt)`` over ground truths, zeroed when NL exceeds ``tau``."""
    if not gts:
        raise EmptyGroundTruth("anls_score needs at least one ground truth")
    if normalize:
        pred = normalize_answer(pred)
        gts = [normalize_answer(g) for g in gts]
    best = 0.0
    for gt in gts:
        nl = normalized_levenshtein(pred, gt)
        if nl <= tau:
            best = max(best, 1.0 - nl)
    return best


def accuracy_score(pred: str, gts: Sequence[str], mode: str = "exact") -> float:
    """``exact``: 1 if pred matches any gt. ``soft``: min(#matches / 3, 1)."""
    if not gts:
        raise EmptyGroundTruth("accuracy_score needs at least one ground truth")
    pred = normalize_answer(pred)
    matches = sum(normalize_answer(g) == pred for g in gts)
    if mode == "exact":
        return float(matches > 0)
    if mode == "soft":
        return min(matches / 3.0, 1.0)
    raise ValueError(f"unknown accuracy mode {mode!r}")


@dataclass(frozen=True)
class Prediction:
    question_id: str
    language: str
    translator: str
    answer: str


@dataclass(frozen=True)
class ScoreRow:
    question_id: str
    language: str
    accuracy: float
    anls: float
    translator: str = ""


def score_predictions(predictions, records, mode: str = "exact", tau: float = 0.5) -> list[ScoreRow]:
    """Score predictions against question records, matched on (id, language)."""
    gts = {(q.question_id, q.language): q.answers for q in records}
    rows = []
    for p in predictions:
        key = (p.question_id, p.language)
        if key not in gts:
            raise KeyError(f"prediction {key} has no matching question")
        answers = gts[key]
        rows.append(
            ScoreRow(p.question_id, p.language, accuracy_score(p.answer, answers, mode),
                     anls_score(p.answer, answers, tau), p.translator)
        )
    return rows


@dataclass(frozen=True)
class Cell:
    accuracy: float
    anls: float
    count: int


def _cell(rows) -> Cell | None:
    rows = list(rows)
    if not rows:
        return None
    n = len(rows)
    return Cell(sum(r.accuracy for r in rows) / n, sum(r.anls for r in rows) / n, n)


@dataclass
class EvalReport:
    """Per-language cells plus an Avg cell over the union of ``avg_languages``.

    ``languages`` is the column universe; a language without rows is an empty
    cell (rendered "/"). ``iid_avg`` carries the IID Avg for zero-shot and
    robustness views.
    """

    name: str
    protocol: str
    languages: list[str]
    cells: dict[str, Cell | None]
    avg_languages: list[str]
    avg: Cell | None
    iid_avg: Cell | None = None
    meta: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "protocol": self.protocol,
            "languages": self.languages,
            "cells": {k: (asdict(v) if v else None) for k, v in self.cells.items()},
            "avg_languages": self.avg_languages,
            "avg": asdict(self.avg) if self.avg else None,
            "iid_avg": asdict(self.iid_avg) if self.iid_avg else None,
            "meta": self.meta,
        }

    @classmethod
    def from_dict(cls, d) -> "EvalReport":
        def cell(v):
            return Cell(**v) if v else None

        return cls(
            d["name"], d["protocol"], list(d["languages"]),
            {k: cell(v) for k, v in d["cells"].items()}, list(d["avg_languages"]),
            cell(d.get("avg")), cell(d.get("iid_avg")), dict(d.get("meta", {})),
        )


def aggregate(
    rows: Iterable[ScoreRow],
    avg_languages: Sequence[str],
    protocol: str = "iid",
    universe: Sequence[str] | None = None,
    name: str = "",
    iid_avg: Cell | None = None,
) -> EvalReport:
    """Per-language means and the union-mean Avg (not a mean of means)."""
    if protocol not in PROTOCOLS:
        raise ValueError(f"unknown protocol {protocol!r}")
    rows = list(rows)
    universe = set(universe) if universe is not None else set(avg_languages) | {r.language for r in rows}
    unknown = sorted({r.language for r in rows} - universe)
    if unknown:
        raise UnknownLanguage(f"rows in undeclared language(s) {unknown}")
    missing = sorted(set(avg_languages) - universe)
    if missing:
        raise UnknownLanguage(f"Avg languages {missing} not in the universe")
    languages = order_languages(universe)
    cells = {lang: _cell(r for r in rows if r.language == lang) for lang in languages}
    avg_set = set(avg_languages)
    avg = _cell(r for r in rows if r.language in avg_set)
    return EvalReport(name, protocol, languages, cells, order_languages(avg_set), avg, iid_avg)


def render_table(reports: Sequence[EvalReport], metric: str = "accuracy", title: str = "") -> str:
    """Aligned text table: one row per report, language columns, Avg last.

    Scores are percentages with two decimals; empty cells print "/". Reports
    with an ``iid_avg`` get an ``iid-avg`` column after Avg.
    """
    languages = order_languages({lang for r in reports for lang in r.languages})
    has_avg = any(r.avg_languages for r in reports)
    has_iid = any(r.iid_avg is not None for r in reports)
    header = ["Method"] + [lang.upper() for lang in languages]
    if has_avg:
        header.append("Avg")
    if has_iid:
        header.append("iid-avg")

    def fmt(cell):
        return "/" if cell is None else f"{100 * getattr(cell, metric):.2f}"

    body = []
    for r in reports:
        row = [r.name or r.protocol] + [fmt(r.cells.get(lang)) for lang in languages]
        if has_avg:
            row.append(fmt(r.avg) if r.avg_languages else "/")
        if has_iid:
            row.append(fmt(r.iid_avg))
        body.append(row)
    widths = [max(len(line[i]) for line in [header] + body) for i in range(len(header))]

    def line(cells):
        first = cells[0].ljust(widths[0])
        rest = [c.rjust(w) for c, w in zip(cells[1:], widths[1:])]
        return "  ".join([first] + rest)

    rule = "-" * len(line(header))
    out = [title] if title else []
    out += [line(header), rule] + [line(row) for row in body]
    return "\n".join(out) + "\n"


def read_predictions(path) -> list[Prediction]:
    with open(path, encoding="utf-8") as fh:
        return [Prediction(**json.loads(line)) for line in fh if line.strip()]


def write_predictions(path, predictions: Iterable[Prediction]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for p in predictions:
            fh.write(json.dumps(asdict(p), ensure_ascii=False) + "\n")
