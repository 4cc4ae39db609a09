"""PNG encode/decode for the raster types.

Only 8-bit grayscale and 8-bit RGB are accepted; anything carrying an
alpha channel, palette, or wider samples is rejected with a clear error.
Encoding uses fixed settings so identical pixels always produce identical
bytes.
"""

from __future__ import annotations

import io
from pathlib import Path

import numpy as np
from PIL import Image

from .errors import PngFormatError
from .raster import BinaryMask, ImageBuffer, ProbabilityMap

# Pinned encoder settings; checksums depend on them.
_COMPRESS_LEVEL = 6

_MODE_16BIT = {"I", "I;16", "I;16B", "I;16L", "I;16N"}


def _to_buffer(im: Image.Image, source: str) -> ImageBuffer:
    if im.mode in ("RGBA", "LA", "PA") or "transparency" in im.info:
        raise PngFormatError(f"{source}: alpha channels are not supported")
    if im.mode in _MODE_16BIT:
        raise PngFormatError(f"{source}: 16-bit images are not supported")
    if im.mode not in ("L", "RGB"):
        raise PngFormatError(
            f"{source}: unsupported mode {im.mode!r}; expected 8-bit grayscale or RGB"
        )
    return ImageBuffer.from_array(np.asarray(im, dtype=np.uint8))


def read_image(path: str | Path) -> ImageBuffer:
    with Image.open(path) as im:
        return _to_buffer(im, str(path))


def decode_image(data: bytes, source: str = "<bytes>") -> ImageBuffer:
    with Image.open(io.BytesIO(data)) as im:
        return _to_buffer(im, source)


def encode_image(img: ImageBuffer) -> bytes:
    arr = img.pixels[:, :, 0] if img.channels == 1 else img.pixels
    pil = Image.fromarray(np.asarray(arr), mode="L" if img.channels == 1 else "RGB")
    buf = io.BytesIO()
    pil.save(buf, format="PNG", compress_level=_COMPRESS_LEVEL)
    return buf.getvalue()


def write_image(img: ImageBuffer, path: str | Path) -> None:
    Path(path).write_bytes(encode_image(img))


def read_probability_map(path: str | Path) -> ProbabilityMap:
    """Load an 8-bit grayscale PNG as probabilities value/255."""
    img = read_image(path)
    if img.channels != 1:
        raise PngFormatError(f"{path}: probability maps must be grayscale")
    return ProbabilityMap.from_grayscale(img)


def read_mask(path: str | Path) -> BinaryMask:
    """Load a {0, 255} grayscale PNG as a binary mask."""
    img = read_image(path)
    if img.channels != 1:
        raise PngFormatError(f"{path}: masks must be grayscale")
    try:
        return BinaryMask.from_image(img)
    except ValueError as exc:
        raise PngFormatError(f"{path}: {exc}") from exc


def write_mask(mask: BinaryMask, path: str | Path) -> None:
    write_image(mask.to_image(), path)
