import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from mustvqa.exceptions import EmptyGroundTruth, UnknownLanguage
from mustvqa.metrics import (
    Cell, EvalReport, Prediction, ScoreRow, accuracy_score, aggregate, anls_score, levenshtein,
    normalize_answer, normalized_levenshtein, read_predictions, render_table, score_predictions,
    write_predictions,
)
from mustvqa.corpus import QuestionRecord

from oracles import anls as anls_oracle
from oracles import edit_distance

short = st.text(max_size=12)


def test_levenshtein_hand_cases():
    assert levenshtein("kitten", "sitting") == 3
    assert levenshtein("", "abc") == 3
    assert levenshtein("同じ", "同じ") == 0


@given(short, short)
def test_levenshtein_matches_full_matrix(a, b):
    assert levenshtein(a, b) == edit_distance(a, b)


@given(short, short, short)
def test_levenshtein_is_a_metric(a, b, c):
    assert levenshtein(a, b) == levenshtein(b, a)
    assert levenshtein(a, c) <= levenshtein(a, b) + levenshtein(b, c)
    assert (levenshtein(a, b) == 0) == (a == b)


def test_normalized_levenshtein_bounds():
    assert normalized_levenshtein("", "") == 0.0
    assert normalized_levenshtein("ab", "cd") == 1.0


def test_anls_hand_cases():
    assert anls_score("fores", ["forest"]) == pytest.approx(5 / 6, abs=1e-9)
    assert anls_score("xyz", ["forest"]) == 0.0
    assert anls_score("Forest ", ["forest"]) == 1.0
    # exactly at the threshold counts
    assert anls_score("ab", ["ac"]) == 0.5


def test_anls_takes_best_ground_truth():
    assert anls_score("cat", ["dog", "cats"]) == pytest.approx(0.75)


@given(short, st.lists(short, min_size=1, max_size=3))
def test_anls_matches_oracle(pred, gts):
    got = anls_score(pred, gts, normalize=False)
    assert got == anls_oracle(pred, gts)
    assert got == 0.0 or 0.5 <= got <= 1.0


def test_empty_ground_truth():
    with pytest.raises(EmptyGroundTruth):
        anls_score("a", [])
    with pytest.raises(EmptyGroundTruth):
        accuracy_score("a", [])


def test_accuracy_modes():
    assert accuracy_score("Stop", ["stop", "halt"]) == 1.0
    assert accuracy_score("go", ["stop"]) == 0.0
    assert accuracy_score("a", ["a", "a", "b"], mode="soft") == pytest.approx(2 / 3)
    assert accuracy_score("a", ["a"] * 5, mode="soft") == 1.0
    with pytest.raises(ValueError):
        accuracy_score("a", ["a"], mode="fuzzy")


def test_normalize_answer():
    assert normalize_answer("  Café  BAR ") == "café bar"


def rows_for(lang, scores):
    return [ScoreRow(f"{lang}{i}", lang, s, s) for i, s in enumerate(scores)]


class TestAggregate:
    def test_equal_subsets_average_of_means(self):
        # 10000 questions per language with means 46.65 / 46.09 / 45.58 / 45.44 %.
        rows = []
        for lang, hits in zip(["en", "ca", "es", "zh"], [4665, 4609, 4558, 4544]):
            rows += rows_for(lang, [1.0] * hits + [0.0] * (10000 - hits))
        report = aggregate(rows, ["en", "ca", "es", "zh"])
        assert 100 * report.avg.accuracy == pytest.approx(45.94, abs=0.01)

    def test_union_not_mean_of_means(self):
        rows = rows_for("en", [1.0] * 9) + rows_for("ca", [0.0])
        report = aggregate(rows, ["en", "ca"])
        assert report.avg.accuracy == pytest.approx(0.9)
        assert report.avg.count == 10

    @given(st.lists(st.tuples(st.sampled_from(["en", "ca", "es"]), st.floats(0, 1)), min_size=1))
    def test_union_matches_concatenate_oracle(self, pairs):
        rows = [ScoreRow(str(i), lang, s, s) for i, (lang, s) in enumerate(pairs)]
        report = aggregate(rows, ["en", "ca", "es"])
        assert math.isclose(report.avg.accuracy, float(np.mean([s for _, s in pairs])), abs_tol=1e-12)

    def test_languages_outside_avg_are_reported_but_not_averaged(self):
        rows = rows_for("en", [1.0]) + rows_for("it", [0.0])
        report = aggregate(rows, ["en"], universe=["en", "it"])
        assert report.cells["it"].accuracy == 0.0
        assert report.avg.accuracy == 1.0

    def test_unknown_language(self):
        with pytest.raises(UnknownLanguage):
            aggregate(rows_for("el", [1.0]), ["en"], universe=["en"])
        with pytest.raises(UnknownLanguage):
            aggregate([], ["it"], universe=["en"])

    def test_empty_cell(self):
        report = aggregate(rows_for("en", [1.0]), ["en"], universe=["en", "ca"])
        assert report.cells["ca"] is None


class TestRenderTable:
    def test_column_order_and_avg_last(self):
        rows = sum((rows_for(lang, [0.5]) for lang in ["zh", "en", "es", "ca"]), [])
        table = render_table([aggregate(rows, ["en", "ca", "es", "zh"], name="M")])
        header = table.splitlines()[0].split()
        assert header == ["Method", "EN", "CA", "ES", "ZH", "Avg"]
        assert table.splitlines()[2].split() == ["M", "50.00", "50.00", "50.00", "50.00", "50.00"]

    def test_empty_cell_is_slash(self):
        report = aggregate(rows_for("es", [1.0]), [], universe=["ca", "es"], protocol="robustness",
                           iid_avg=Cell(0.4, 0.5, 10), name="mbart")
        lines = render_table([report]).splitlines()
        assert lines[0].split() == ["Method", "CA", "ES", "iid-avg"]
        assert lines[2].split() == ["mbart", "/", "100.00", "40.00"]

    def test_anls_metric(self):
        report = EvalReport("r", "iid", ["en"], {"en": Cell(0.1, 0.25, 4)}, ["en"], Cell(0.1, 0.25, 4))
        assert "25.00" in render_table([report], metric="anls")

    def test_report_dict_roundtrip(self):
        report = aggregate(rows_for("en", [1.0, 0.0]), ["en"], universe=["en", "ca"], name="x")
        assert EvalReport.from_dict(report.to_dict()) == report


def test_score_predictions_and_io(tmp_path):
    records = [QuestionRecord("q1", "i", "t", "en", "reference", ("stop",), "q1"),
               QuestionRecord("q1", "i", "t", "ca", "reference", ("stop",), "q1")]
    preds = [Prediction("q1", "en", "reference", "stop"), Prediction("q1", "ca", "reference", "stops")]
    rows = score_predictions(preds, records)
    assert [r.accuracy for r in rows] == [1.0, 0.0]
    assert rows[1].anls == pytest.approx(0.8)
    write_predictions(tmp_path / "p.jsonl", preds)
    assert read_predictions(tmp_path / "p.jsonl") == preds
    with pytest.raises(KeyError):
        score_predictions([Prediction("q9", "en", "", "x")], records)
