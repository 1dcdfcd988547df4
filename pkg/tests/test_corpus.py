import json
from dataclasses import replace

import numpy as np
import pytest
import requests
from hypothesis import given, settings
from hypothesis import strategies as st

from mustvqa.corpus import (
    DatasetManifest, DictionaryTranslator, HTTPTranslator, IdentityTranslator, ImageRecord, OCRToken,
    QuestionRecord, SplitSpec, TranslationCache, build_split, load_manifest, read_features, samples,
    save_manifest, synthesize_toy_dataset, toy_translator, translate_questions, validate_manifest,
    write_features,
)
from mustvqa.corpus.translate import cache_key
from mustvqa.exceptions import (
    BackendUnavailable, CacheCorrupt, EmptyAnswers, EmptyPartition, MalformedBox, ManifestError,
    MissingImage, OverlappingLanguageSets,
)


def write_lines(path, objs):
    path.write_text("".join(json.dumps(o) + "\n" for o in objs), encoding="utf-8")


def image_line(image_id, box=(0.1, 0.1, 0.2, 0.2)):
    return {"kind": "image", "image_id": image_id, "width": 10, "height": 10,
            "ocr": [{"text": "stop", "box": list(box)}], "feats_ref": None}


def question_line(qid, image_id, answers=("stop",)):
    return {"kind": "question", "question_id": qid, "image_id": image_id, "text": "what?",
            "language": "en", "translator": "reference", "answers": list(answers),
            "source_question_id": qid}


class TestManifestIO:
    def test_small_file(self, tmp_path):
        path = tmp_path / "m.jsonl"
        write_lines(path, [image_line("a"), image_line("b")]
                    + [question_line(f"q{i}", "ab"[i % 2]) for i in range(4)])
        m = load_manifest(path)
        assert len(m.questions) == 4 and set(m.images) == {"a", "b"}
        assert m.images["a"].ocr_tokens[0] == OCRToken("stop", (0.1, 0.1, 0.2, 0.2))

    def test_malformed_box(self, tmp_path):
        path = tmp_path / "m.jsonl"
        write_lines(path, [image_line("a", (0.2, 0.1, 1.3, 0.5)), question_line("q", "a")])
        with pytest.raises(MalformedBox, match="'a'"):
            load_manifest(path)

    def test_empty_answers(self, tmp_path):
        path = tmp_path / "m.jsonl"
        write_lines(path, [image_line("a"), question_line("q", "a", answers=())])
        with pytest.raises(EmptyAnswers):
            load_manifest(path)

    def test_missing_image_lists_every_record(self, tmp_path):
        path = tmp_path / "m.jsonl"
        write_lines(path, [image_line("a"), question_line("q1", "x"), question_line("q2", "y")])
        with pytest.raises(MissingImage) as err:
            load_manifest(path)
        assert len(err.value.issues) == 2
        assert "q1" in str(err.value) and "q2" in str(err.value)

    def test_unparseable_line(self, tmp_path):
        path = tmp_path / "m.jsonl"
        path.write_text("{not json\n", encoding="utf-8")
        with pytest.raises(ManifestError):
            load_manifest(path)

    def test_lenient_drops_bad_records(self, tmp_path):
        path = tmp_path / "m.jsonl"
        write_lines(path, [image_line("a"), image_line("bad", (0.5, 0.5, 0.4, 0.6)),
                           question_line("q1", "a"), question_line("q2", "bad"),
                           question_line("q3", "a", answers=())])
        m = load_manifest(path, lenient=True)
        assert [q.question_id for q in m.questions] == ["q1"]
        assert set(m.images) == {"a"}

    def test_roundtrip_with_features(self, tmp_path):
        m = synthesize_toy_dataset(3, n_images=3, n_langs=3)
        save_manifest(m, tmp_path / "m.jsonl")
        loaded = load_manifest(tmp_path / "m.jsonl")
        assert loaded == m
        assert loaded.feature_dim == m.feature_dim

    def test_feature_sidecar(self, tmp_path):
        boxes = np.array([[0, 0, 0.5, 0.5]], np.float32)
        vectors = np.arange(3, dtype=np.float32)[None]
        write_features(tmp_path / "f.mvqf", boxes, vectors)
        assert (tmp_path / "f.mvqf").read_bytes()[:4] == b"MVQF"
        b, v = read_features(tmp_path / "f.mvqf")
        assert np.array_equal(b, boxes) and np.array_equal(v, vectors)


class TestSynth:
    def test_deterministic_bytes(self, tmp_path):
        save_manifest(synthesize_toy_dataset(7), tmp_path / "a" / "m.jsonl")
        save_manifest(synthesize_toy_dataset(7), tmp_path / "b" / "m.jsonl")
        assert (tmp_path / "a" / "m.jsonl").read_bytes() == (tmp_path / "b" / "m.jsonl").read_bytes()

    def test_every_question_has_each_language(self):
        m = synthesize_toy_dataset(1, n_images=4, n_langs=2)
        by_source = {}
        for q in m.questions:
            by_source.setdefault(q.source_question_id, set()).add(q.language)
        assert all(langs == {"en", "ca"} for langs in by_source.values())

    def test_answers_come_from_ocr_or_toy_words(self):
        from mustvqa.corpus.synth import COLORS

        m = synthesize_toy_dataset(5, n_images=6, n_langs=1)
        for q in m.questions:
            ocr = {t.text for t in m.images[q.image_id].ocr_tokens}
            assert q.answers[0] in ocr or q.answers[0] in COLORS

    @given(st.integers(0, 10_000))
    @settings(max_examples=15, deadline=None)
    def test_any_seed_validates(self, seed):
        assert validate_manifest(synthesize_toy_dataset(seed, n_images=2, n_langs=6)) == []

    def test_samples(self):
        m = synthesize_toy_dataset(7)
        X, y = samples(m)
        assert len(X) == len(y) == len(m.questions) == 128
        assert X[0].image is m.images[m.questions[0].image_id]


class CountingTranslator(IdentityTranslator):
    def __init__(self):
        super().__init__("counting")
        self.calls = 0

    def translate(self, text, source, target):
        self.calls += 1
        return f"{target}:{text}"


class TestTranslate:
    base = synthesize_toy_dataset(2, n_images=3, n_langs=1)

    def test_identity_doubles_questions(self):
        out = translate_questions(self.base, {"es"}, IdentityTranslator(), TranslationCache()).manifest
        assert len(out.questions) == 2 * len(self.base.questions)
        en = {q.question_id: q for q in self.base.questions}
        for q in out.questions:
            if q.language == "es":
                src = en[q.source_question_id]
                assert (q.text, q.answers, q.image_id) == (src.text, src.answers, src.image_id)

    def test_unsupported_pairs_are_skipped(self):
        backend = toy_translator("nocael", languages={"es", "zh", "it"})
        result = translate_questions(self.base, {"ca", "es", "el"}, backend, TranslationCache())
        assert sorted(result.skipped) == [("en", "ca"), ("en", "el")]
        assert {q.language for q in result.manifest.questions} == {"en", "es"}

    def test_warm_cache_makes_no_calls(self, tmp_path):
        cache = TranslationCache(tmp_path / "c.jsonl")
        backend = CountingTranslator()
        first = translate_questions(self.base, {"it", "el"}, backend, cache)
        calls = backend.calls
        assert calls == first.backend_calls > 0
        second = translate_questions(self.base, {"it", "el"}, backend, TranslationCache(tmp_path / "c.jsonl"))
        assert backend.calls == calls and second.backend_calls == 0
        assert second.manifest == first.manifest

    def test_parallel_workers_match_serial(self, tmp_path):
        serial = translate_questions(self.base, {"ca", "es"}, toy_translator(), TranslationCache()).manifest
        threaded = translate_questions(self.base, {"ca", "es"}, toy_translator(),
                                       TranslationCache(tmp_path / "c.jsonl"), max_workers=4).manifest
        assert serial == threaded
        assert len((tmp_path / "c.jsonl").read_text().splitlines()) == len(TranslationCache(tmp_path / "c.jsonl"))

    def test_english_subset_untouched(self):
        out = translate_questions(self.base, {"ca", "zh"}, toy_translator(), TranslationCache()).manifest
        assert [q for q in out.questions if q.language == "en"] == list(self.base.questions)

    def test_corrupt_cache(self, tmp_path):
        path = tmp_path / "c.jsonl"
        path.write_text("garbage\n")
        with pytest.raises(CacheCorrupt):
            TranslationCache(path)
        record = {"key": "0" * 64, "backend": "b", "source": "en", "target": "es", "text": "x",
                  "translation": "y"}
        path.write_text(json.dumps(record) + "\n")
        with pytest.raises(CacheCorrupt):
            TranslationCache(path)
        record["key"] = cache_key("b", "en", "es", "x")
        path.write_text(json.dumps(record) + "\n")
        assert TranslationCache(path).get("b", "en", "es", "x") == "y"

    def test_cache_dir_from_environment(self, tmp_path, monkeypatch):
        monkeypatch.setenv("MUSTVQA_CACHE_DIR", str(tmp_path))
        cache = TranslationCache.default()
        cache.put("b", "en", "es", "x", "y")
        assert (tmp_path / "translations.jsonl").exists()

    def test_dictionary_translator(self):
        t = DictionaryTranslator("d", {"es": {"red": "rojo", "the": ""}})
        assert t.translate("the red car", "en", "es") == "rojo car"
        assert not t.supports("en", "ca")


class FakeResponse:
    def __init__(self, status, body):
        self.status_code, self._body = status, body

    def raise_for_status(self):
        if self.status_code >= 400:
            raise requests.HTTPError(str(self.status_code))

    def json(self):
        return self._body


class FakeSession:
    def __init__(self, responses):
        self.responses, self.payloads = list(responses), []

    def post(self, url, json, timeout):
        self.payloads.append(json)
        item = self.responses.pop(0)
        if isinstance(item, Exception):
            raise item
        return item


class TestHTTPTranslator:
    def test_request_shape_and_key(self, monkeypatch):
        monkeypatch.setenv("MUSTVQA_MT_KEY", "secret")
        session = FakeSession([FakeResponse(200, {"translatedText": "hola"})])
        t = HTTPTranslator("http://mt.invalid/translate", session=session)
        assert t.translate("hello", "en", "es") == "hola"
        assert session.payloads == [{"q": "hello", "source": "en", "target": "es", "api_key": "secret"}]

    def test_retries_then_succeeds(self):
        session = FakeSession([requests.ConnectionError("down"), FakeResponse(503, {}),
                               FakeResponse(200, {"translatedText": "ok"})])
        t = HTTPTranslator("http://mt.invalid", session=session, backoff=0.0)
        assert t.translate("x", "en", "ca") == "ok"

    def test_gives_up(self):
        session = FakeSession([FakeResponse(500, {})] * 3)
        t = HTTPTranslator("http://mt.invalid", session=session, retries=2, backoff=0.0)
        with pytest.raises(BackendUnavailable):
            t.translate("x", "en", "ca")

    def test_declared_pairs(self):
        t = HTTPTranslator("http://mt.invalid", pairs=[("en", "es")], session=FakeSession([]))
        assert t.supports("en", "es") and not t.supports("en", "el")


class TestSplit:
    m = synthesize_toy_dataset(4, n_images=6, n_langs=6)

    def test_zero_shot_languages_never_in_train(self):
        split = build_split(self.m, ["en", "ca", "es", "zh"], ["it", "el"])
        assert not {q.language for q in split.train(self.m)} & {"it", "el"}
        assert {q.language for q in split.zeroshot(self.m)} == {"it", "el"}

    def test_grouped_by_source(self):
        split = build_split(self.m, ["en", "ca", "es", "zh"], ["it", "el"], seed=3)
        train_ids = {q.source_question_id for q in split.train(self.m)}
        val_ids = {q.source_question_id for q in split.val(self.m)}
        assert not train_ids & val_ids
        covered = {q.key for q in split.train(self.m) + split.val(self.m)}
        assert covered == {q.key for q in self.m.questions if q.language in {"en", "ca", "es", "zh"}}

    def test_single_language(self):
        split = build_split(self.m, ["en"])
        assert {q.language for q in split.train(self.m)} == {"en"}

    def test_overlap_rejected(self):
        with pytest.raises(OverlappingLanguageSets):
            build_split(self.m, ["en", "it"], ["it"])
        with pytest.raises(OverlappingLanguageSets):
            SplitSpec(("en",), ("en",), (), ())

    def test_empty_partition(self):
        tiny = synthesize_toy_dataset(0, n_images=1, n_langs=1, questions_per_image=1)
        with pytest.raises(EmptyPartition):
            build_split(tiny, ["en"])

    def test_persistence(self, tmp_path):
        split = build_split(self.m, ["en", "ca"], ["el"], seed=1)
        split.save(tmp_path / "s.json")
        assert SplitSpec.load(tmp_path / "s.json") == split


def test_manifest_is_immutable():
    m = synthesize_toy_dataset(1, n_images=1, n_langs=1)
    with pytest.raises(TypeError):
        m.images["x"] = None
    with pytest.raises(Exception):
        m.questions[0].text = "changed"
    assert isinstance(replace(m.questions[0], text="y"), QuestionRecord)
    assert isinstance(m, DatasetManifest) and isinstance(next(iter(m.images.values())), ImageRecord)
