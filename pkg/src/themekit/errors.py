"""Exception hierarchy shared across the engine.

Every error carries a stable ``code`` string so the HTTP layer can emit
``{code, message, detail}`` payloads without inspecting types.
"""

from __future__ import annotations


class ThemekitError(Exception):
    code = "error"

    def __init__(self, message: str, detail: object = None):
        super().__init__(message)
        self.detail = detail

    @property
    def message(self) -> str:
        return str(self)


class DuplicateIdError(ThemekitError):
    code = "duplicate_id"


class UnknownInstanceError(ThemekitError):
    code = "unknown_instance"


class UnknownThemeError(ThemekitError):
    code = "unknown_theme"


class SchemaViolationError(ThemekitError):
    code = "schema_violation"


class DimensionMismatchError(ThemekitError):
    code = "dimension_mismatch"


class ZeroVectorError(ThemekitError):
    code = "zero_vector"


class EmbedderUnavailableError(ThemekitError):
    code = "embedder_unavailable"


class StoreNotReadyError(ThemekitError):
    code = "store_not_ready"


class DuplicateThemeNameError(ThemekitError):
    code = "duplicate_theme_name"


class InvalidThemeNameError(ThemekitError):
    code = "invalid_theme_name"


class ExemplarConflictError(ThemekitError):
    code = "exemplar_conflict"


class ExemplarNotFoundError(ThemekitError):
    code = "exemplar_not_found"


class UnscoreableThemeError(ThemekitError):
    code = "unscoreable_theme"


class NoPositiveExemplarsError(ThemekitError):
    code = "no_positive_exemplars"


class DegenerateTrainingError(ThemekitError):
    code = "degenerate_training_data"


class EmptyMappingError(ThemekitError):
    code = "empty_mapping"


class CorpusMismatchError(ThemekitError):
    code = "corpus_mismatch"


class UnknownConceptError(ThemekitError):
    code = "unknown_concept"


class GoldLabelError(ThemekitError):
    code = "invalid_gold_labels"


class PhaseConflictError(ThemekitError):
    code = "phase_conflict"


class SnapshotVersionError(ThemekitError):
    code = "snapshot_version"


class SnapshotCorruptError(ThemekitError):
    code = "snapshot_corrupt"


class InvalidArgumentError(ThemekitError):
    code = "invalid_argument"
