"""Dataset model, manifest I/O, translation and split construction."""

from .manifest import load_manifest, read_features, save_manifest, validate_manifest, write_features
from .split import SplitSpec, build_split
from .synth import synthesize_toy_dataset, toy_translator
from .translate import (
    DictionaryTranslator,
    HTTPTranslator,
    IdentityTranslator,
    TranslationCache,
    TranslatorClient,
    translate_questions,
)
from .types import (
    LANGUAGE_ORDER,
    DatasetManifest,
    ImageRecord,
    OCRToken,
    QuestionRecord,
    VisualFeature,
    VQAInput,
    samples,
)

__all__ = [
    "DatasetManifest", "DictionaryTranslator", "HTTPTranslator", "IdentityTranslator",
    "ImageRecord", "LANGUAGE_ORDER", "OCRToken", "QuestionRecord", "SplitSpec",
    "TranslationCache", "TranslatorClient", "VQAInput", "VisualFeature", "build_split",
    "load_manifest", "read_features", "samples", "save_manifest", "synthesize_toy_dataset",
    "toy_translator", "translate_questions", "validate_manifest", "write_features",
]
