"""8-bit PGM/PPM raster codec.

Rasters are float32 arrays of shape (height, width) with values in [0, 1];
colour images are converted to gray with the 0.299/0.587/0.114 luma weights.
"""

import logging
from pathlib import Path
from typing import Union
import numpy as np
from PIL import Image
from ..errors import ImageFormatError

logger = logging.getLogger(__name__)

_LUMA = np.array([0.299, 0.587, 0.114])
_MAGIC = {b"P5": "L", b"P6": "RGB"}


def load_image(path: Union[str, Path]) -> np.ndarray:
    """Read a binary PGM (P5) or PPM (P6) file."""
    path = Path(path)
    try:
        with open(path, "rb") as handle:
            magic = handle.read(2)
    except OSError as e:
        raise ImageFormatError(f"Cannot read image {path}: {e}") from e
    if magic not in _MAGIC:
        raise ImageFormatError(f"{path}: unsupported magic bytes {magic!r}")
    try:
        with Image.open(path) as image:
            image.load()
            mode = image.mode
            pixels = np.asarray(image)
    except (OSError, SyntaxError, ValueError) as e:
        raise ImageFormatError(f"{path}: corrupt or truncated payload ({e})") from e
    if mode != _MAGIC[magic]:
        raise ImageFormatError(
            f"{path}: expected 8-bit {_MAGIC[magic]} data, got {mode}"
        )
    if mode == "RGB":
        gray = pixels.astype(np.float64) @ _LUMA / 255.0
    else:
        gray = pixels.astype(np.float64) / 255.0
    logger.debug(f"Loaded {path.name} mode={mode} size={gray.shape[1]}x{gray.shape[0]}")
    return gray.astype(np.float32)


def to_uint8(raster: np.ndarray) -> np.ndarray:
    return np.rint(np.clip(raster, 0.0, 1.0) * 255.0).astype(np.uint8)


def save_image(raster: np.ndarray, path: Union[str, Path]) -> None:
    """Write a gray raster as binary PGM (P5)."""
    if raster.ndim != 2:
        raise ImageFormatError(f"Expected a 2-D gray raster, got shape {raster.shape}")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(to_uint8(raster)).save(path, format="PPM")
