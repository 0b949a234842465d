"""Exception types shared across the library."""


class MoanaError(Exception):
    """Base class for every error raised by this package."""


class PointAtInfinity(MoanaError):
    """A back-projected or projected point has no finite representative."""


class DegenerateHeight(MoanaError):
    """The vertical-extent solve for a bounding box has no stable solution."""


class ParseError(MoanaError):
    """A text input could not be parsed.  Carries the 1-based line number."""

    def __init__(self, message: str, line: int | None = None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class EmptyInput(MoanaError):
    """An input file contained no usable rows."""


class DecodeError(MoanaError):
    """An image file was missing or could not be decoded."""


class IoError(MoanaError):
    """A file could not be written."""


class TooSmall(MoanaError):
    """An image or patch is below the minimum size for the operation."""


class EmptyIntersection(MoanaError):
    """A bounding box does not intersect the image it was taken from."""


class DimensionMismatch(MoanaError):
    """Two grids/masks/models with incompatible shapes were combined."""


class EmptyCell(MoanaError):
    """An operation that needs stored samples hit a cell with none."""


class ModeMismatch(MoanaError):
    """Evaluation mode requires data the input rows do not carry."""


class NonMonotonicFrame(MoanaError):
    """Frames must be fed to the tracker in strictly increasing order."""


class ConfigError(MoanaError):
    """A configuration file or value is invalid."""
