"""Exception types shared across the pipeline.

Every error carries a ``stage`` attribute so the CLI can map failures to
stable exit codes.
"""


class AhpError(Exception):
    """Base class for all pipeline errors."""

    stage = "general"


class ConfigError(AhpError):
    stage = "config"


class CorpusError(AhpError):
    stage = "corpus"


class ClusterError(AhpError):
    stage = "cluster"


class HierarchyError(AhpError):
    stage = "hierarchy"


class WeightsError(AhpError):
    stage = "weights"


class InferenceError(AhpError):
    stage = "inference"


class EvalError(AhpError):
    stage = "eval"


class ArtifactError(AhpError):
    """A persisted artifact is missing, unreadable, or fails validation."""

    stage = "artifact"


class ProviderError(AhpError):
    """Transport-level or provider-side failure."""

    stage = "provider"


class GrammarError(ProviderError):
    """Provider output did not match the task grammar.

    Carries the raw text for auditability.
    """

    def __init__(self, message: str, raw_text: str = ""):
        super().__init__(message)
        self.raw_text = raw_text
