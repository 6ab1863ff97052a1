"""Exception hierarchy for the acwg package."""


class AcwgError(Exception):
    """Base class for all package errors."""


class DatasetError(AcwgError):
    """A dataset file or record is malformed."""


class LexiconError(AcwgError):
    """An antonym or attribute-pair lexicon violates its invariants."""


class ConfigError(AcwgError):
    """A configuration value is invalid or inconsistent."""


class ModelError(AcwgError):
    """Model construction, evaluation, or persistence failed."""


class AttributionError(AcwgError):
    """Attribution produced a non-finite value or inconsistent bookkeeping."""


class SearchError(AcwgError):
    """Word-group search was called with inconsistent inputs."""


class TrainingError(AcwgError):
    """Training diverged or was configured inconsistently."""


class EvaluationError(AcwgError):
    """An evaluation routine received an empty or inconsistent input."""


class DependencyError(AcwgError):
    """A pipeline stage is missing an upstream artifact."""
