"""Exception types raised by formnet."""

from typing import Sequence, Tuple


class FormNetError(Exception):
    """Base class for every error raised by the library."""


class ShapeError(FormNetError, ValueError):
    """Operand shapes do not conform for an operation."""

    def __init__(self, op: str, *shapes: Tuple[int, ...]) -> None:
        self.op = op
        self.shapes = shapes
        rendered = " and ".join(str(tuple(shape)) for shape in shapes)
        super().__init__(f"{op}: incompatible shapes {rendered}")


class DatasetError(FormNetError, ValueError):
    """A dataset file or document violates the documented schema."""

    def __init__(
        self, message: str, doc_id: str = "", path: Sequence[object] = ()
    ) -> None:
        self.doc_id = doc_id
        self.path = ".".join(str(part) for part in path)
        prefix = f"document {doc_id}" if doc_id else "dataset"
        location = f" at {self.path}" if self.path else ""
        super().__init__(f"{prefix}{location}: {message}")


class ImageFormatError(FormNetError, ValueError):
    """A raster file is not a readable 8-bit PGM/PPM image."""


class GraphError(FormNetError, ValueError):
    """Invalid document graph input."""


class RegionError(FormNetError, ValueError):
    """A pooling region collapses to zero area."""


class CheckpointError(FormNetError, ValueError):
    """A checkpoint cannot be read or does not match the model."""


class ConfigError(FormNetError, ValueError):
    """A configuration file is invalid."""
