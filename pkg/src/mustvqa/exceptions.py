"""Exception hierarchy shared across the package."""


class MustVQAError(Exception):
    """Base class for every error raised by this package."""


class ManifestError(MustVQAError, ValueError):
    """A manifest failed validation.

    ``issues`` lists every offending record, not only the first one.
    """

    def __init__(self, issues):
        self.issues = list(issues)
        lines = "\n  ".join(str(i) for i in self.issues)
        super().__init__(f"{len(self.issues)} invalid record(s):\n  {lines}")


class MissingImage(ManifestError):
    pass


class MalformedBox(ManifestError):
    pass


class EmptyAnswers(ManifestError):
    pass


class TranslationError(MustVQAError):
    pass


class BackendUnavailable(TranslationError):
    pass


class CacheCorrupt(TranslationError):
    pass


class OverlappingLanguageSets(MustVQAError, ValueError):
    pass


class EmptyPartition(MustVQAError, ValueError):
    pass


class EmptyCorpus(MustVQAError, ValueError):
    pass


class IdOutOfRange(MustVQAError, IndexError):
    pass


class ShapeMismatch(MustVQAError, ValueError):
    pass


class EmptyGroundTruth(MustVQAError, ValueError):
    pass


class UnknownLanguage(MustVQAError, ValueError):
    pass


class IterOutOfRange(MustVQAError, ValueError):
    pass


class DivergenceDetected(MustVQAError, FloatingPointError):
    pass


class VocabMismatch(MustVQAError):
    pass


class CheckpointError(MustVQAError):
    pass
