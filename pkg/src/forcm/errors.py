"""Exception hierarchy shared by all forcm modules."""


class ForcmError(Exception):
    """Base class for all errors raised by this package."""


class UnsupportedFormatError(ForcmError):
    """File exists but is not a raster layout this package accepts."""


class CorruptRasterError(ForcmError):
    """Raster file is structurally broken (truncated data, bad offsets)."""


class InvalidArgumentError(ForcmError, ValueError):
    """A parameter value violates its documented domain."""


class InvalidLabelsError(ForcmError):
    """Mask values are outside {0,1,2} or mix both storage conventions."""


class OutOfRangeError(ForcmError):
    """Heatmap probabilities fall outside [0,1] beyond float tolerance."""


class IoError(ForcmError):
    """Write failure (unwritable path, disk error)."""


class DimensionMismatchError(ForcmError):
    """Paired rasters/masks/heatmaps do not share width x height."""


class MissingHeatmapError(ForcmError):
    """Fusion mode requested but no heatmap supplied."""


class TooFewRowsError(ForcmError):
    """Standardization needs at least two feature rows."""


class SingleClassTrainingError(ForcmError):
    """SVM training set contains only one class."""


class NonFiniteFeatureError(ForcmError):
    """Feature matrix contains NaN or Inf."""


class SingleClassSceneError(ForcmError):
    """All segments carry the same label; stratified sampling impossible."""


class InvalidSpecError(ForcmError, ValueError):
    """Synthetic scene specification violates its invariants."""


class RequiresNirError(ForcmError):
    """Operation needs a 4-band (R,G,B,NIR) raster."""


class EmptyMaskError(ForcmError):
    """Confusion matrix has zero total pixels."""
