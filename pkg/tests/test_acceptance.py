"""Acceptance criteria A1-A11, one printed PASS/FAIL line each.

Run with ``pytest tests/test_acceptance.py -s`` (lines also print without -s).
A11 is soft: it reports its outcome but never fails the suite.
"""

import contextlib
import itertools
import random
import time

import numpy as np
import pytest
import torch

from mustvqa.corpus import QuestionRecord, build_split, samples, synthesize_toy_dataset, translate_questions
from mustvqa.corpus.translate import IdentityTranslator, TranslationCache
from mustvqa.harness.backends import make_backend
from mustvqa.harness.protocols import backend_manifest, emit_report, evaluate, robustness_sweep
from mustvqa.harness.schedules import ScheduleSpec, lr_at
from mustvqa.harness.train import vocab_corpus
from mustvqa.metrics import Prediction, aggregate, anls_score, levenshtein, score_predictions
from mustvqa.models import PointerVQA, Seq2SeqVQA
from mustvqa.models.checkpoint import file_sha256
from mustvqa.textenc import PHOCConfig, phoc, train_bpe
from mustvqa.textenc.bpe import WORD_START, BPEVocab, encode

from helpers import finite_difference_check, randomize_
from oracles import anls, edit_distance, phoc_vector
from test_pointer import bos, make_net, random_batch


@pytest.fixture
def criterion(capsys):
    @contextlib.contextmanager
    def run(tag, what):
        start = time.perf_counter()
        try:
            yield
        except BaseException as exc:
            with capsys.disabled():
                print(f"\n{tag} FAIL: {what} ({type(exc).__name__}: {str(exc).splitlines()[0][:120]})")
            raise
        with capsys.disabled():
            print(f"\n{tag} PASS: {what} ({time.perf_counter() - start:.1f}s)")

    return run


def _unicode_string(rng):
    pool = "abcxyzAé漢字ж́ 0😀"
    return "".join(rng.choice(pool) for _ in range(rng.randint(0, 20)))


def test_a1_anls_oracle(criterion):
    with criterion("A1", "Levenshtein/ANLS equal a full-matrix DP oracle on 10,000 unicode pairs"):
        assert levenshtein("kitten", "sitting") == 3
        assert abs(anls_score("fores", ["forest"]) - 5 / 6) < 1e-9
        rng = random.Random(1)
        pairs = [(_unicode_string(rng), _unicode_string(rng)) for _ in range(10_000)]
        start = time.perf_counter()
        for a, b in pairs:
            assert levenshtein(a, b) == edit_distance(a, b)
            assert anls_score(a, [b], normalize=False) == anls(a, [b])
        assert time.perf_counter() - start < 10


def _rows(hits_by_lang, n_by_lang):
    preds, records = [], []
    for lang, hits in hits_by_lang.items():
        for i in range(n_by_lang[lang]):
            qid = f"{lang}{i}"
            records.append(QuestionRecord(qid, "img", "q", lang, "gold" if lang == "en" else "ref",
                                          ("yes",), qid))
            preds.append(Prediction(qid, lang, records[-1].translator, "yes" if i < hits else "no"))
    return score_predictions(preds, records)


def test_a2_aggregation(criterion):
    langs = ["en", "ca", "es", "zh"]
    with criterion("A2", "Avg is the union mean: 45.94 on equal subsets, exact on unequal ones"):
        n = dict.fromkeys(langs, 10_000)
        rows = _rows(dict(zip(langs, (4665, 4609, 4558, 4544))), n)
        report = aggregate(rows, langs, "iid")
        assert abs(report.avg.accuracy * 100 - 45.94) <= 0.01
        sizes = dict(zip(langs, (17, 230, 5, 61)))
        hits = dict(zip(langs, (3, 101, 5, 0)))
        rows = _rows(hits, sizes)
        oracle = np.mean([r.accuracy for r in rows])
        assert abs(aggregate(rows, langs, "iid").avg.accuracy - oracle) < 1e-12


def test_a3_schedules(criterion):
    with criterion("A3", "warmup 1e-3 at 1000 and 0 at 24000; step decay 1e-4/1e-5/1e-6"):
        warm = ScheduleSpec("warmup_linear", base_lr=1e-4, peak_lr=1e-3, warmup_iters=1000,
                            total_iters=24000)
        step = ScheduleSpec("step_decay", base_lr=1e-4, total_iters=24000, milestones=(14000, 19000),
                            factor=0.1)
        assert lr_at(warm, 1000) == 1e-3 and lr_at(warm, 24000) == 0.0
        assert [lr_at(step, i) for i in (0, 14000, 19000)] == [1e-4, 1e-5, 1e-6]


def _gradcheck(est, X, y):
    randomize_(est.net_, 0, 0.3)
    feats = est._featurize(X)
    targets = est._targets(X, y, feats)
    idx = np.arange(len(X))
    errors = finite_difference_check(lambda: est._loss(feats, targets, idx), est.net_.parameters())
    return (errors < 1e-3).mean()


def test_a4_gradient_checks(criterion):
    with criterion("A4", "autograd vs central differences, >=99% coords under 1e-3, both families"):
        start = time.perf_counter()
        m = synthesize_toy_dataset(7, 2, 2, 2, n_ocr=3)
        X, y = samples(m)
        X4, y4 = X[:4], y[:4]
        # pointer: d=16, 1 layer, 2 heads, V=12, T_max=3, N=4, M=2
        answers = [[f"w{i}"] for i in range(12)]
        pointer = PointerVQA(flavor="multi", d_model=16, n_layers=1, n_heads=2, answer_vocab_size=12,
                             max_ocr=3, max_question_len=4, max_visual=2, max_decode_steps=2,
                             max_ocr_subwords=2, n_merges=5, dtype="float64", max_iter=1)
        pointer.fit(X4 + X4 * 3, y4 + answers)
        assert pointer.net_.config.answer_vocab_size == 12
        assert _gradcheck(pointer, X4, y4) >= 0.99
        # seq2seq: d=16, 1+1 layers, 2 heads, vocab 20
        alphabet = (WORD_START,) + tuple("abcdeilmnorstuy")
        vocab = BPEVocab(alphabet, ())
        assert vocab.size == 20
        seq = Seq2SeqVQA(d_model=16, n_layers=1, n_decoder_layers=1, n_heads=2, vocab=vocab,
                         max_question_len=4, max_ocr=3, max_ocr_subwords=2, max_visual=2,
                         max_answer_len=4, spatial_bins=8, dtype="float64", max_iter=1).fit(X4, y4)
        assert _gradcheck(seq, X4, y4) >= 0.99
        assert time.perf_counter() - start < 120


@pytest.mark.slow
def test_a5_overfit(criterion):
    with criterion("A5", "both families reach >=95% train accuracy in 2000 steps, under 5 min"):
        start = time.perf_counter()
        toy = synthesize_toy_dataset(7)
        assert len(toy.source_questions()) == 32 and len(toy.languages) == 4
        X, y = samples(toy)
        for est in (PointerVQA(flavor="multi", max_iter=2000, seed=0),
                    Seq2SeqVQA(max_iter=2000, seed=0)):
            est.fit(X, y)
            assert len(est.loss_curve_) == 2000
            assert est.score(X, y) >= 0.95, type(est).__name__
        assert time.perf_counter() - start < 300


def test_a6_pointer_masking(criterion):
    with criterion("A6", "padded OCR slots get < 1e-12 probability over 1000 random batches"):
        rng = np.random.default_rng(0)
        worst = 0.0
        with torch.no_grad():
            for i in range(1000):
                net = make_net(seed=i % 10) if i % 100 == 0 else net
                batch = random_batch(net.config, 4, rng)
                probs = torch.softmax(net(batch, bos(net.config, 4)), -1)
                padded = ~batch["ocr_mask"][:, None, :].expand(-1, net.config.max_decode_steps, -1)
                ocr = probs[..., net.config.answer_vocab_size:]
                worst = max(worst, (ocr * padded).sum(-1).max().item())
        assert worst < 1e-12


@pytest.fixture(scope="module")
def six_run(tmp_path_factory):
    m = synthesize_toy_dataset(11, n_images=6, n_langs=6)
    split = build_split(m, ["en", "ca", "es", "zh"], ["it", "el"], seed=0)
    X, y = samples(m, split.train(m))
    est = PointerVQA(d_model=16, n_layers=1, n_heads=2, n_merges=40, max_iter=100, seed=0).fit(X, y)
    path = est.save(tmp_path_factory.mktemp("a7") / "model.ckpt")
    return m, split, path


def test_a7_zeroshot_audit(criterion, six_run):
    m, split, path = six_run
    with criterion("A7", "train split has no it/el records; zero-shot eval leaves the checkpoint intact"):
        assert not [q for q in split.train(m) if q.language in ("it", "el")]
        before = file_sha256(path)
        report = evaluate(path, m, split, "zeroshot")
        assert report.languages == ["it", "el"]
        assert file_sha256(path) == before == report.meta["checkpoint_sha256"]


def test_a8_phoc(criterion):
    with criterion("A8", "PHOC is 604-dim and matches the rational interval oracle"):
        full = PHOCConfig()
        assert phoc("abc", full).shape == (604,) and not phoc("", full).any()
        for word in ("a", "ab"):
            expect = phoc_vector(word, full.alphabet, full.unigram_levels, full.bigrams, full.bigram_levels)
            assert phoc(word, full).tolist() == expect
        small = PHOCConfig(alphabet="abc", bigrams=("ab", "ba", "cc"))
        words = [""] + ["".join(p) for n in range(1, 5) for p in itertools.product("abc", repeat=n)]
        for word in words:
            expect = phoc_vector(word, "abc", small.unigram_levels, small.bigrams, small.bigram_levels)
            assert phoc(word, small).tolist() == expect, word


def test_a9_bpe(criterion):
    with criterion("A9", "BPE first merge ('a','a'), byte-identical retraining, total encode, roundtrip"):
        assert train_bpe(["aaab", "aaab"], 1).merges == (("a", "a"),)
        corpus = ["the red bus stops here", "la parada del autobús", "停止 停车场"] * 3
        a, b = train_bpe(corpus, 30), train_bpe(corpus, 30)
        assert a.dumps() == b.dumps()
        enc = encode(a, "totally unseen ☃ text", 64)
        assert len(enc.ids) == 64 and all(0 <= i < a.size for i in enc.ids)
        for text in corpus[:3]:
            assert a.decode(a.ids(text)) == text


def test_a10_robustness_contract(criterion, six_run, tmp_path):
    m, split, path = six_run
    with criterion("A10", "identity sweep reproduces reference cells; missing pairs print '/'; text-only diff"):
        english = m.replace_questions(m.source_questions())
        targets = ["ca", "es", "zh", "it", "el"]
        base = translate_questions(english, targets, IdentityTranslator(name="identity"),
                                   cache=TranslationCache()).manifest
        identity, nocael = make_backend("identity"), make_backend("toy-nocael")
        reports = robustness_sweep(path, base, split, [identity, nocael])
        direct = evaluate(path, base, split, "iid")
        direct_zs = evaluate(path, base, split, "zeroshot")
        for lang in ("ca", "es", "zh"):
            assert reports[0].cells[lang] == direct.cells[lang]
        for lang in ("it", "el"):
            assert reports[0].cells[lang].accuracy == direct_zs.cells[lang].accuracy
        emit_report(reports, tmp_path / "sweep")
        row = [line for line in (tmp_path / "sweep.accuracy.txt").read_text().splitlines()
               if line.startswith("toy-nocael")][0]
        assert row.split()[1] == "/" and row.split()[5] == "/"
        syn, _ = backend_manifest(m, make_backend("toy-synonym"), targets)
        ref = {(q.question_id, q.language): q for q in m.questions}
        for q in syn.questions:
            old = ref[(q.question_id, q.language)]
            changed = {f for f in q.__dataclass_fields__ if getattr(q, f) != getattr(old, f)}
            assert changed <= {"text", "translator"}


@pytest.mark.slow
def test_a11_transfer_trend(capsys):
    """Soft: expected direction is multi gap < mono gap; tolerance band 0.05."""
    tolerance = 0.05
    m = synthesize_toy_dataset(7, n_images=200, n_langs=6)
    split = build_split(m, ["en", "ca", "es", "zh"], ["it", "el"], seed=0)
    X, y = samples(m, split.train(m))

    stats = {}
    for flavor in ("multi", "mono"):
        vocab = train_bpe(vocab_corpus(m, split, flavor), 300)
        est = PointerVQA(flavor=flavor, vocab=vocab, max_iter=3000, seed=0).fit(X, y)
        iid = evaluate(est, m, split, "iid").avg.accuracy
        zs = evaluate(est, m, split, "zeroshot").avg.accuracy
        stats[flavor] = (iid, zs, iid - zs, zs / iid if iid else 0.0)
    ok = stats["multi"][2] <= stats["mono"][2] + tolerance
    detail = "; ".join(f"{k} iid={v[0]:.3f} zs={v[1]:.3f} gap={v[2]:.3f} retained={v[3]:.2f}"
                       for k, v in stats.items())
    with capsys.disabled():
        print(f"\nA11 {'PASS' if ok else 'FAIL'} (soft, band {tolerance}): "
              f"multi gap <= mono gap + band; {detail}")
