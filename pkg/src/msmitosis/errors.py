"""Exception types raised across the pipeline.

``DataError`` subclasses signal bad inputs (exit code 2 from the CLI);
everything else derives from ``MitosisError``.
"""

from __future__ import annotations


class MitosisError(Exception):
    """Base class for all package errors."""


class DataError(MitosisError):
    """Input data is missing, malformed, or inconsistent."""


class MissingImage(DataError):
    def __init__(self, band: int, plane: int, path: str | None = None):
        self.band = band
        self.plane = plane
        self.path = path
        msg = f"missing image for band {band}, plane {plane}"
        if path:
            msg += f" ({path})"
        super().__init__(msg)


class DimensionMismatch(DataError):
    pass


class UnreadableFile(DataError):
    pass


class MalformedRow(DataError):
    def __init__(self, line_no: int, detail: str = ""):
        self.line_no = line_no
        super().__init__(f"malformed row at line {line_no}" + (f": {detail}" if detail else ""))


class OutOfBoundsCoordinate(DataError):
    pass


class InvalidSpec(DataError):
    pass


class InvalidConfig(MitosisError):
    pass


class InfeasiblePlacement(MitosisError):
    pass


class ImageTooSmall(DataError):
    pass


class BandOutOfRange(DataError):
    pass


class EmptyMask(DataError):
    pass


class DegenerateImage(DataError):
    pass


class EmptyRegion(DataError):
    pass


class WindowTooSmall(DataError):
    pass


class EmptyMatrix(DataError):
    pass


class SingleClassData(DataError):
    pass


class NonFiniteFeature(DataError):
    pass


class SchemaMismatch(DataError):
    pass


class InsufficientData(DataError):
    pass
