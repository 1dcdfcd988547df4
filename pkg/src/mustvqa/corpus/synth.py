"""Deterministic toy scene-text VQA data in up to six languages.

Each image carries a handful of OCR words at random positions and a few
detector regions whose feature vectors encode an object class and a colour.
Two question kinds exist: *copy* questions ask for the word at an extreme
position (answer = one OCR token) and *colour* questions ask for the colour of
an object (answer = one fixed-vocabulary word).
"""

from __future__ import annotations

import numpy as np

from .translate import DictionaryTranslator, translate_questions
from .types import (
    LANGUAGE_ORDER,
    REFERENCE_TRANSLATOR,
    SOURCE_LANGUAGE,
    DatasetManifest,
    ImageRecord,
    OCRToken,
    QuestionRecord,
)

POSITIONS = ("top", "bottom", "left", "right")
OBJECTS = ("car", "sign", "door", "bus")
COLORS = ("red", "blue", "green", "yellow", "white", "black")
WORDS = (
    "coffee", "pizza", "hotel", "stop", "exit", "bank", "open", "sale", "taxi",
    "police", "market", "pharmacy", "museum", "bakery", "garage", "cinema",
    "station", "school", "park", "menu", "ticket", "express", "central", "lotto",
)
FEATURE_DIM = len(OBJECTS) + len(COLORS) + 6

COPY_TEMPLATE = "what word is written at the {pos}"
COLOR_TEMPLATE = "what color is the {obj}"

# English word -> translation; "" drops the word.
LEXICONS = {
    "ca": {
        "what": "quina", "word": "paraula", "is": "està", "written": "escrita", "at": "a",
        "the": "el", "color": "color", "top": "dalt", "bottom": "baix", "left": "esquerra",
        "right": "dreta", "car": "cotxe", "sign": "senyal", "door": "porta", "bus": "autobús",
    },
    "es": {
        "what": "qué", "word": "palabra", "is": "está", "written": "escrita", "at": "en",
        "the": "el", "color": "color", "top": "arriba", "bottom": "abajo", "left": "izquierda",
        "right": "derecha", "car": "coche", "sign": "señal", "door": "puerta", "bus": "autobús",
    },
    "zh": {
        "what": "什么", "word": "词", "is": "是", "written": "写", "at": "在", "the": "",
        "color": "颜色", "top": "上面", "bottom": "下面", "left": "左边", "right": "右边",
        "car": "汽车", "sign": "标志", "door": "门", "bus": "公交车",
    },
    "it": {
        "what": "quale", "word": "parola", "is": "è", "written": "scritta", "at": "in",
        "the": "il", "color": "colore", "top": "alto", "bottom": "basso", "left": "sinistra",
        "right": "destra", "car": "auto", "sign": "segnale", "door": "porta", "bus": "autobus",
    },
    "el": {
        "what": "τι", "word": "λέξη", "is": "είναι", "written": "γραμμένη", "at": "στο",
        "the": "το", "color": "χρώμα", "top": "πάνω", "bottom": "κάτω", "left": "αριστερά",
        "right": "δεξιά", "car": "αυτοκίνητο", "sign": "πινακίδα", "door": "πόρτα",
        "bus": "λεωφορείο",
    },
}

# Alternative lexical choices, used to emulate a second MT system.
SYNONYMS = {
    "ca": {"car": "automòbil", "top": "part superior"},
    "es": {"car": "auto", "top": "parte superior", "sign": "letrero"},
    "zh": {"car": "轿车", "door": "大门"},
    "it": {"car": "macchina", "sign": "cartello"},
    "el": {"car": "όχημα"},
}

JOINERS = {"zh": ""}


def toy_translator(name: str = REFERENCE_TRANSLATOR, synonyms: bool = False, languages=None):
    """Dictionary backend over the toy lexicon.

    ``synonyms=True`` swaps in alternative word choices; ``languages``
    restricts the supported targets (e.g. to emulate a backend without ca/el).
    """
    lexicons = {}
    for lang, lex in LEXICONS.items():
        if languages is not None and lang not in languages:
            continue
        lex = dict(lex)
        if synonyms:
            lex.update(SYNONYMS.get(lang, {}))
        lexicons[lang] = lex
    return DictionaryTranslator(name, lexicons, joiners=JOINERS)


def _random_boxes(rng, n, min_size=0.03, max_size=0.2):
    x0 = rng.uniform(0.0, 1.0 - max_size, n)
    y0 = rng.uniform(0.0, 1.0 - max_size, n)
    w = rng.uniform(min_size, max_size, n)
    h = rng.uniform(min_size, max_size / 2, n)
    boxes = np.stack([x0, y0, x0 + w, y0 + h], axis=1)
    return np.round(boxes, 4)


def _extreme(boxes, pos):
    cx = (boxes[:, 0] + boxes[:, 2]) / 2
    cy = (boxes[:, 1] + boxes[:, 3]) / 2
    return {
        "top": np.argmin(cy),
        "bottom": np.argmax(cy),
        "left": np.argmin(cx),
        "right": np.argmax(cx),
    }[pos]


def synthesize_toy_dataset(
    seed: int,
    n_images: int = 8,
    n_langs: int = 4,
    questions_per_image: int = 4,
    n_ocr: int = 4,
    name: str = "toy",
) -> DatasetManifest:
    """Build a toy manifest; identical inputs give identical manifests.

    Languages are the first ``n_langs`` of en, ca, es, zh, it, el. Every source
    question gets exactly one reference translation per non-English language.
    """
    if not 1 <= n_langs <= len(LANGUAGE_ORDER):
        raise ValueError(f"n_langs must be in [1, {len(LANGUAGE_ORDER)}]")
    rng = np.random.default_rng(seed)
    images, questions = {}, []
    for i in range(n_images):
        image_id = f"img{i:04d}"
        words = rng.choice(len(WORDS), size=n_ocr, replace=False)
        ocr_boxes = _random_boxes(rng, n_ocr)
        ocr = tuple(
            OCRToken(WORDS[w], tuple(float(c) for c in b)) for w, b in zip(words, ocr_boxes)
        )

        n_regions = len(OBJECTS) - 1
        objs = rng.choice(len(OBJECTS), size=n_regions, replace=False)
        cols = rng.integers(0, len(COLORS), size=n_regions)
        vectors = np.zeros((n_regions, FEATURE_DIM), np.float32)
        vectors[np.arange(n_regions), objs] = 1.0
        vectors[np.arange(n_regions), len(OBJECTS) + cols] = 1.0
        vectors[:, len(OBJECTS) + len(COLORS):] = rng.normal(0, 0.1, (n_regions, 6))
        region_boxes = _random_boxes(rng, n_regions, 0.1, 0.4).astype(np.float32)
        images[image_id] = ImageRecord(
            image_id, 640, 480, ocr, region_boxes, vectors.astype(np.float32)
        )

        candidates = [("copy", p) for p in POSITIONS] + [("color", int(o)) for o in objs]
        picks = rng.choice(len(candidates), size=min(questions_per_image, len(candidates)),
                           replace=False)
        for j, pick in enumerate(sorted(picks)):
            kind, arg = candidates[pick]
            if kind == "copy":
                text = COPY_TEMPLATE.format(pos=arg)
                answer = ocr[_extreme(ocr_boxes, arg)].text
            else:
                text = COLOR_TEMPLATE.format(obj=OBJECTS[arg])
                answer = COLORS[cols[list(objs).index(arg)]]
            qid = f"q{i:04d}{j:02d}"
            questions.append(
                QuestionRecord(qid, image_id, text, SOURCE_LANGUAGE, REFERENCE_TRANSLATOR,
                               (answer,), qid)
            )
    manifest = DatasetManifest(name, images, questions, FEATURE_DIM)
    targets = LANGUAGE_ORDER[1:n_langs]
    if targets:
        manifest = translate_questions(manifest, targets, toy_translator()).manifest
    return manifest
