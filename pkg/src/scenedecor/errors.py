"""Exception hierarchy shared across the package."""


class SceneDecorError(Exception):
    """Base class for all package errors."""


class VocabularyError(SceneDecorError):
    """Unknown class name or out-of-range class index."""


class GeometryError(SceneDecorError):
    """Degenerate or out-of-bounds object geometry."""


class ShapeError(SceneDecorError):
    """Array/tensor dimensions incompatible with an operation."""


class MissingStatsError(SceneDecorError):
    """Size statistics requested for a class with no observations."""


class LayoutParseError(SceneDecorError):
    """Layout document violates the schema.

    ``path`` locates the offending field (e.g. ``objects[2].class``).
    """

    def __init__(self, message: str, path: str = ""):
        super().__init__(message)
        self.path = path


class VersionError(LayoutParseError):
    """Document or checkpoint written with an unsupported schema version."""


class AlignmentError(SceneDecorError):
    """Paired source images disagree in dimensions."""


class IngestionError(SceneDecorError):
    """Dataset root missing expected directories or files."""


class CheckpointError(SceneDecorError):
    """Checkpoint container corrupt or incompatible with the config."""


class MetricError(SceneDecorError):
    """Metric computation impossible (extractor missing, bad statistics)."""


class NumericError(SceneDecorError):
    """Non-finite value encountered where finiteness is required."""
