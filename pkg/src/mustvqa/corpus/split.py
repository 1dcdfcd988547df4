"""IID / zero-shot split construction, grouped by source question."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass

import numpy as np

from ..exceptions import EmptyPartition, OverlappingLanguageSets, UnknownLanguage
from .types import DatasetManifest, QuestionRecord, is_language_tag, order_languages


@dataclass(frozen=True)
class SplitSpec:
    """Partition of a manifest into train / val / zero-shot evaluation records.

    Partitions are defined over source question ids, so a record key
    ``(question_id, language)`` is resolved against any translation of the
    same manifest, whichever translator produced it.
    """

    train_languages: tuple[str, ...]
    zeroshot_languages: tuple[str, ...]
    train_sources: tuple[str, ...]
    val_sources: tuple[str, ...]

    def __post_init__(self):
        overlap = set(self.train_languages) & set(self.zeroshot_languages)
        if overlap:
            raise OverlappingLanguageSets(f"languages in both sets: {sorted(overlap)}")

    def _select(self, manifest, languages, sources):
        languages, sources = set(languages), set(sources)
        return [
            q
            for q in manifest.questions
            if q.language in languages and q.source_question_id in sources
        ]

    def train(self, manifest: DatasetManifest) -> list[QuestionRecord]:
        return self._select(manifest, self.train_languages, self.train_sources)

    def val(self, manifest: DatasetManifest) -> list[QuestionRecord]:
        return self._select(manifest, self.train_languages, self.val_sources)

    def zeroshot(self, manifest: DatasetManifest, partition: str = "val") -> list[QuestionRecord]:
        sources = self.val_sources if partition == "val" else self.train_sources
        return self._select(manifest, self.zeroshot_languages, sources)

    def train_keys(self, manifest):
        return [(q.question_id, q.language) for q in self.train(manifest)]

    def val_keys(self, manifest):
        return [(q.question_id, q.language) for q in self.val(manifest)]

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=1, ensure_ascii=False)

    @classmethod
    def from_json(cls, text: str) -> "SplitSpec":
        obj = json.loads(text)
        return cls(**{k: tuple(v) for k, v in obj.items()})

    def save(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(self.to_json() + "\n")

    @classmethod
    def load(cls, path) -> "SplitSpec":
        with open(path, encoding="utf-8") as fh:
            return cls.from_json(fh.read())


def build_split(
    manifest: DatasetManifest,
    train_languages,
    zeroshot_languages=(),
    val_fraction: float = 0.2,
    seed: int = 0,
) -> SplitSpec:
    """Split source questions into train and val groups.

    Every translation of a source question lands in the partition of its
    source. Zero-shot languages never enter the train list.
    """
    train_languages = order_languages(set(train_languages))
    zeroshot_languages = order_languages(set(zeroshot_languages))
    overlap = set(train_languages) & set(zeroshot_languages)
    if overlap:
        raise OverlappingLanguageSets(f"languages in both sets: {sorted(overlap)}")
    for lang in train_languages + zeroshot_languages:
        if not is_language_tag(lang):
            raise UnknownLanguage(f"bad language tag {lang!r}")
    if not 0.0 < val_fraction < 1.0:
        raise ValueError(f"val_fraction must be in (0, 1), got {val_fraction}")

    sources = sorted({q.source_question_id for q in manifest.questions})
    order = np.random.default_rng(seed).permutation(len(sources))
    n_val = int(round(val_fraction * len(sources)))
    val = sorted(sources[i] for i in order[:n_val])
    train = sorted(sources[i] for i in order[n_val:])
    if not train or not val:
        raise EmptyPartition(
            f"{len(sources)} source question(s) give train={len(train)}, val={len(val)}"
        )
    return SplitSpec(tuple(train_languages), tuple(zeroshot_languages), tuple(train), tuple(val))
