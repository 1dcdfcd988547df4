"""Named translation backends for the CLI and robustness sweeps."""

from __future__ import annotations

from ..corpus.synth import toy_translator
from ..corpus.translate import HTTPTranslator, IdentityTranslator, TranslatorClient

BACKENDS = ("identity", "reference", "toy-synonym", "toy-nocael", "http")


def make_backend(name: str, endpoint: str | None = None) -> TranslatorClient:
    """Build a backend by name; ``http`` needs ``endpoint``."""
    if name == "identity":
        return IdentityTranslator()
    if name == "reference":
        return toy_translator()
    if name == "toy-synonym":
        return toy_translator("toy-synonym", synonyms=True)
    if name == "toy-nocael":
        return toy_translator("toy-nocael", languages={"es", "zh", "it"})
    if name == "http":
        if not endpoint:
            raise ValueError("the http backend needs an endpoint URL")
        return HTTPTranslator(endpoint)
    raise ValueError(f"unknown backend {name!r}; known: {', '.join(BACKENDS)}")
