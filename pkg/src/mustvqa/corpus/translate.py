"""Translator backends, the persistent translation cache, and question translation."""

from __future__ import annotations

import hashlib
import json
import logging
import os
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import requests

from ..exceptions import BackendUnavailable, CacheCorrupt
from .types import SOURCE_LANGUAGE, DatasetManifest

logger = logging.getLogger(__name__)

MT_KEY_ENV = "MUSTVQA_MT_KEY"
CACHE_DIR_ENV = "MUSTVQA_CACHE_DIR"


class TranslatorClient:
    """Interface of a machine-translation backend.

    Subclasses set ``name`` and implement :meth:`translate`. ``pairs`` is the
    set of supported ``(source, target)`` pairs; None means every pair.
    """

    name = "abstract"
    pairs: frozenset | None = None

    def supports(self, source: str, target: str) -> bool:
        return self.pairs is None or (source, target) in self.pairs

    def translate(self, text: str, source: str, target: str) -> str:
        raise NotImplementedError


class IdentityTranslator(TranslatorClient):
    """Returns the input text unchanged for every pair."""

    name = "identity"

    def __init__(self, name: str = "identity"):
        self.name = name

    def translate(self, text, source, target):
        return text


class DictionaryTranslator(TranslatorClient):
    """Word-by-word lexicon lookup; unknown words pass through untouched.

    A word that maps to the empty string is dropped.
    ``lexicons`` maps target language to a ``{source_word: target_word}`` dict.
    Languages listed in ``joiners`` use that separator instead of a space
    (e.g. ``{"zh": ""}``).
    """

    def __init__(self, name, lexicons, source=SOURCE_LANGUAGE, joiners=None):
        self.name = name
        self.lexicons = {lang: dict(lex) for lang, lex in lexicons.items()}
        self.source = source
        self.joiners = dict(joiners or {})
        self.pairs = frozenset((source, lang) for lang in self.lexicons)

    def translate(self, text, source, target):
        if not self.supports(source, target):
            raise ValueError(f"{self.name} does not support {source}->{target}")
        lex = self.lexicons[target]
        words = [lex.get(w, w) for w in text.split()]
        return self.joiners.get(target, " ").join(w for w in words if w)


class HTTPTranslator(TranslatorClient):
    """Client for a JSON translation endpoint.

    Sends ``{"q": text, "source": src, "target": tgt}`` by POST and reads the
    ``translatedText`` field of the reply. The API key comes from the
    ``MUSTVQA_MT_KEY`` environment variable.
    """

    def __init__(
        self,
        url: str,
        name: str = "http",
        pairs=None,
        timeout: float = 10.0,
        retries: int = 3,
        backoff: float = 0.5,
        session=None,
    ):
        self.url = url
        self.name = name
        self.pairs = frozenset(tuple(p) for p in pairs) if pairs is not None else None
        self.timeout = timeout
        self.retries = retries
        self.backoff = backoff
        self.session = session or requests.Session()

    def translate(self, text, source, target):
        payload = {"q": text, "source": source, "target": target}
        key = os.environ.get(MT_KEY_ENV)
        if key:
            payload["api_key"] = key
        last_error = None
        for attempt in range(self.retries + 1):
            try:
                resp = self.session.post(self.url, json=payload, timeout=self.timeout)
                if resp.status_code >= 500 or resp.status_code == 429:
                    raise requests.HTTPError(f"HTTP {resp.status_code}")
                resp.raise_for_status()
                return resp.json()["translatedText"]
            except (requests.RequestException, ValueError, KeyError) as exc:
                last_error = exc
                logger.debug("%s attempt %d failed: %s", self.name, attempt + 1, exc)
                if attempt < self.retries:
                    time.sleep(self.backoff * 2**attempt)
        raise BackendUnavailable(
            f"{self.name}: {source}->{target} failed after {self.retries + 1} attempts: {last_error}"
        )


def cache_key(backend: str, source: str, target: str, text: str) -> str:
    blob = "\x1f".join((backend, source, target, text)).encode("utf-8")
    return hashlib.sha256(blob).hexdigest()


class TranslationCache:
    """Append-only JSON-lines store of translations, keyed by content hash.

    Writes go through one lock so concurrent translators never interleave
    lines. ``path=None`` keeps the cache in memory only.
    """

    def __init__(self, path=None):
        self.path = Path(path) if path is not None else None
        self._entries: dict[str, str] = {}
        self._lock = threading.Lock()
        if self.path is not None and self.path.exists():
            self._load()

    @classmethod
    def default(cls):
        root = os.environ.get(CACHE_DIR_ENV)
        if not root:
            return cls()
        return cls(Path(root) / "translations.jsonl")

    def _load(self):
        with open(self.path, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, 1):
                if not line.strip():
                    continue
                try:
                    obj = json.loads(line)
                    key, text = obj["key"], obj["translation"]
                except (json.JSONDecodeError, KeyError, TypeError) as exc:
                    raise CacheCorrupt(f"{self.path}:{lineno}: {exc}") from exc
                expected = cache_key(obj.get("backend", ""), obj.get("source", ""),
                                     obj.get("target", ""), obj.get("text", ""))
                if key != expected:
                    raise CacheCorrupt(f"{self.path}:{lineno}: key does not match its content")
                self._entries[key] = text

    def __len__(self):
        return len(self._entries)

    def get(self, backend, source, target, text):
        return self._entries.get(cache_key(backend, source, target, text))

    def put(self, backend, source, target, text, translation):
        key = cache_key(backend, source, target, text)
        with self._lock:
            if key in self._entries:
                return
            self._entries[key] = translation
            if self.path is not None:
                self.path.parent.mkdir(parents=True, exist_ok=True)
                record = {
                    "key": key,
                    "backend": backend,
                    "source": source,
                    "target": target,
                    "text": text,
                    "translation": translation,
                }
                with open(self.path, "a", encoding="utf-8") as fh:
                    fh.write(json.dumps(record, ensure_ascii=False) + "\n")


@dataclass
class TranslationResult:
    manifest: DatasetManifest
    skipped: list[tuple[str, str]] = field(default_factory=list)
    backend_calls: int = 0


def translate_questions(
    manifest: DatasetManifest,
    targets,
    backend: TranslatorClient,
    cache: TranslationCache | None = None,
    max_workers: int = 1,
    replace_existing: bool = False,
) -> TranslationResult:
    """Add one translated record per English question and supported target.

    Answers and image links are copied from the English source. Unsupported
    ``(en, target)`` pairs end up in ``result.skipped``. Records already present
    for ``(question_id, target, backend.name)`` are kept unless
    ``replace_existing`` is set.
    """
    cache = cache if cache is not None else TranslationCache()
    sources = manifest.source_questions()
    targets = [t for t in sorted(set(targets)) if t != SOURCE_LANGUAGE]
    skipped = [(SOURCE_LANGUAGE, t) for t in targets if not backend.supports(SOURCE_LANGUAGE, t)]
    active = [t for t in targets if backend.supports(SOURCE_LANGUAGE, t)]

    jobs = sorted({(q.text, t) for q in sources for t in active})
    missing = [(text, t) for text, t in jobs if cache.get(backend.name, SOURCE_LANGUAGE, t, text) is None]

    def work(job):
        text, tgt = job
        out = backend.translate(text, SOURCE_LANGUAGE, tgt)
        cache.put(backend.name, SOURCE_LANGUAGE, tgt, text, out)

    if max_workers > 1 and len(missing) > 1:
        with ThreadPoolExecutor(max_workers) as pool:
            list(pool.map(work, missing))
    else:
        for job in missing:
            work(job)

    new_records = []
    for q in sources:
        for tgt in active:
            text = cache.get(backend.name, SOURCE_LANGUAGE, tgt, q.text)
            new_records.append(
                replace(q, text=text, language=tgt, translator=backend.name,
                        source_question_id=q.question_id)
            )
    new_keys = {r.key for r in new_records}
    if replace_existing:
        kept = [q for q in manifest.questions if q.key not in new_keys]
    else:
        existing = {q.key for q in manifest.questions}
        kept = list(manifest.questions)
        new_records = [r for r in new_records if r.key not in existing]
    for lang in (t for _, t in skipped):
        logger.info("%s: skipped unsupported pair en->%s", backend.name, lang)
    return TranslationResult(manifest.replace_questions(kept + new_records), skipped, len(missing))
