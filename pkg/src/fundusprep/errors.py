"""Exception hierarchy shared across the toolkit."""

from __future__ import annotations


class FundusprepError(Exception):
    """Base class for all toolkit errors."""


class GeometryError(FundusprepError):
    pass


class TooFewPairsError(GeometryError):
    """Fewer than two reference-point pairs were supplied."""


class DegenerateConfigurationError(GeometryError):
    """The point configuration does not determine a similarity transform."""


class NonFiniteInputError(GeometryError):
    """A coordinate or parameter was NaN or infinite."""


class RasterError(FundusprepError):
    pass


class InvalidThresholdError(RasterError):
    """Binarization threshold outside [0, 1]."""


class DimensionMismatchError(FundusprepError):
    """Two rasters that must share dimensions do not."""


class PngFormatError(RasterError):
    """A PNG file is not 8-bit grayscale or RGB without alpha."""


class DatasetError(FundusprepError):
    pass


class MaskDimensionMismatchError(DatasetError):
    """Mask dimensions do not match the 512x512 training-set frame."""


class NotFoundError(DatasetError):
    """No set with the requested id exists."""


class CorruptSetError(DatasetError):
    """A stored set violates an invariant; `invariant` names which one."""

    def __init__(self, message: str, invariant: str = "unknown"):
        super().__init__(message)
        self.invariant = invariant


class EmptyCorpusError(FundusprepError):
    """An evaluation was requested over zero prediction/truth pairs."""


class PipelineError(FundusprepError):
    pass


class MissingSegmentationMapError(PipelineError):
    """The classifier gate fired but no segmentation map was supplied."""


class SyncError(FundusprepError):
    pass


class RevisionConflictError(SyncError):
    """Optimistic-concurrency check failed; carries the current revision."""

    def __init__(self, message: str, current_revision: int):
        super().__init__(message)
        self.current_revision = current_revision


class ValidationFailedError(SyncError):
    """The server rejected an upload; `invariant` names the violation."""

    def __init__(self, message: str, invariant: str = "unknown"):
        super().__init__(message)
        self.invariant = invariant


class PayloadTooLargeError(SyncError):
    """An upload exceeded the server's size limit."""
