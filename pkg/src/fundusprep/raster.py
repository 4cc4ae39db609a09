"""Pixel-level image operations on 8-bit rasters.

Conventions shared by every operation here:

* pixel centres sit at integer coordinates, origin at the top-left pixel;
* interpolation is bilinear;
* 8-bit outputs are rounded half-up.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatchError, InvalidThresholdError
from .geometry import SimilarityTransform


def _readonly(arr: np.ndarray) -> np.ndarray:
    out = np.ascontiguousarray(arr)
    out.setflags(write=False)
    return out


def _round_u8(values: np.ndarray) -> np.ndarray:
    """Round half-up and clip into the uint8 range."""
    return np.clip(np.floor(values + 0.5), 0, 255).astype(np.uint8)


@dataclass(frozen=True, eq=False)
class ImageBuffer:
    """An owned 8-bit raster, grayscale (1 channel) or RGB (3 channels).

    ``pixels`` has shape (height, width, channels), dtype uint8, and is
    frozen read-only so buffers can be shared across threads.
    """

    width: int
    height: int
    channels: int
    pixels: np.ndarray

    def __post_init__(self) -> None:
        if self.channels not in (1, 3):
            raise ValueError(f"channels must be 1 or 3, got {self.channels}")
        if self.width < 1 or self.height < 1:
            raise ValueError(f"dimensions must be >= 1, got {self.width}x{self.height}")
        px = np.asarray(self.pixels)
        if px.dtype != np.uint8:
            raise ValueError(f"pixels must be uint8, got {px.dtype}")
        if px.shape != (self.height, self.width, self.channels):
            raise ValueError(
                f"pixel shape {px.shape} does not match "
                f"{self.height}x{self.width}x{self.channels}"
            )
        object.__setattr__(self, "pixels", _readonly(px))

    @classmethod
    def from_array(cls, arr: np.ndarray) -> ImageBuffer:
        """Build from an (h, w) or (h, w, c) array of 8-bit samples."""
        a = np.asarray(arr)
        if a.ndim == 2:
            a = a[:, :, None]
        if a.ndim != 3:
            raise ValueError(f"expected 2 or 3 array dimensions, got {a.ndim}")
        h, w, c = a.shape
        return cls(w, h, c, a.astype(np.uint8, copy=True))

    @property
    def data(self) -> bytes:
        """Row-major samples, length width*height*channels."""
        return self.pixels.tobytes()

    def plane(self) -> np.ndarray:
        """The (h, w) sample plane of a grayscale image."""
        if self.channels != 1:
            raise ValueError("plane() requires a grayscale image")
        return self.pixels[:, :, 0]

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, ImageBuffer):
            return NotImplemented
        return (
            self.width == other.width
            and self.height == other.height
            and self.channels == other.channels
            and np.array_equal(self.pixels, other.pixels)
        )


@dataclass(frozen=True, eq=False)
class ProbabilityMap:
    """Per-pixel lesion likelihoods in [0, 1]."""

    values: np.ndarray

    def __post_init__(self) -> None:
        vals = np.asarray(self.values, dtype=np.float64)
        if vals.ndim != 2 or vals.shape[0] < 1 or vals.shape[1] < 1:
            raise ValueError(f"probability map must be 2D and non-empty, got shape {vals.shape}")
        if not np.isfinite(vals).all() or vals.min() < 0.0 or vals.max() > 1.0:
            raise ValueError("probability values must lie in [0, 1]")
        object.__setattr__(self, "values", _readonly(vals))

    @classmethod
    def from_grayscale(cls, img: ImageBuffer) -> ProbabilityMap:
        """Interpret an 8-bit grayscale image as probabilities value/255."""
        return cls(img.plane() / 255.0)

    @property
    def width(self) -> int:
        return self.values.shape[1]

    @property
    def height(self) -> int:
        return self.values.shape[0]


@dataclass(frozen=True, eq=False)
class BinaryMask:
    """Boolean lesion mask; True marks a lesion pixel."""

    bits: np.ndarray

    def __post_init__(self) -> None:
        b = np.asarray(self.bits)
        if b.dtype != np.bool_:
            raise ValueError(f"mask bits must be boolean, got {b.dtype}")
        if b.ndim != 2 or b.shape[0] < 1 or b.shape[1] < 1:
            raise ValueError(f"mask must be 2D and non-empty, got shape {b.shape}")
        object.__setattr__(self, "bits", _readonly(b))

    @classmethod
    def empty(cls, width: int, height: int) -> BinaryMask:
        return cls(np.zeros((height, width), dtype=bool))

    @classmethod
    def from_image(cls, img: ImageBuffer) -> BinaryMask:
        """From a {0, 255} grayscale image; other sample values are rejected."""
        plane = img.plane()
        if not np.isin(plane, (0, 255)).all():
            raise ValueError("mask values must be 0 or 255")
        return cls(plane == 255)

    def to_image(self) -> ImageBuffer:
        """As an 8-bit grayscale image with values in {0, 255}."""
        return ImageBuffer.from_array(np.where(self.bits, 255, 0).astype(np.uint8))

    @property
    def width(self) -> int:
        return self.bits.shape[1]

    @property
    def height(self) -> int:
        return self.bits.shape[0]

    def count(self) -> int:
        return int(self.bits.sum())

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, BinaryMask):
            return NotImplemented
        return np.array_equal(self.bits, other.bits)


def _bilinear_sample(pixels: np.ndarray, u: np.ndarray, v: np.ndarray, border: str) -> np.ndarray:
    """Sample (h, w, c) pixels at continuous coordinates (u, v).

    border="zero": neighbours outside the image contribute 0 (black).
    border="clamp": coordinates are clamped to the edge pixels.
    Returns float64 with shape u.shape + (c,).
    """
    h, w = pixels.shape[:2]
    if border == "clamp":
        u = np.clip(u, 0.0, w - 1.0)
        v = np.clip(v, 0.0, h - 1.0)
    x0f = np.floor(u)
    y0f = np.floor(v)
    fx = (u - x0f)[..., None]
    fy = (v - y0f)[..., None]
    x0 = x0f.astype(np.int64)
    y0 = y0f.astype(np.int64)
    x1 = x0 + 1
    y1 = y0 + 1

    def fetch(xi, yi):
        inside = (xi >= 0) & (xi < w) & (yi >= 0) & (yi < h)
        vals = pixels[np.clip(yi, 0, h - 1), np.clip(xi, 0, w - 1)].astype(np.float64)
        if border == "zero":
            vals *= inside[..., None]
        return vals

    return (
        fetch(x0, y0) * (1.0 - fx) * (1.0 - fy)
        + fetch(x1, y0) * fx * (1.0 - fy)
        + fetch(x0, y1) * (1.0 - fx) * fy
        + fetch(x1, y1) * fx * fy
    )


def warp(src: ImageBuffer, t: SimilarityTransform, out_width: int, out_height: int) -> ImageBuffer:
    """Resample src under t by inverse mapping.

    Output pixel (x, y) is the bilinear sample of src at invert(t)(x, y);
    samples falling outside src are black. Channel count is preserved and
    the identity transform reproduces src bit-exactly.
    """
    if out_width < 1 or out_height < 1:
        raise ValueError(f"output dimensions must be >= 1, got {out_width}x{out_height}")
    inv = t.inverse()
    gx, gy = np.meshgrid(
        np.arange(out_width, dtype=np.float64), np.arange(out_height, dtype=np.float64)
    )
    u, v = inv.apply_xy(gx, gy)
    return ImageBuffer.from_array(_round_u8(_bilinear_sample(src.pixels, u, v, border="zero")))


def equalize_histogram(img: ImageBuffer) -> ImageBuffer:
    """Equalize each channel independently with the classic CDF remap.

    v' = round((cdf(v) - cdf_min) / (N - cdf_min) * 255); a channel whose
    pixels all share one value is returned unchanged.
    """
    out = img.pixels.copy()
    n = img.width * img.height
    for c in range(img.channels):
        channel = out[:, :, c]
        cdf = np.cumsum(np.bincount(channel.ravel(), minlength=256))
        cdf_min = int(cdf[int(channel.min())])
        if cdf_min == n:
            continue
        lut = _round_u8((cdf - cdf_min) / (n - cdf_min) * 255.0)
        out[:, :, c] = lut[channel]
    return ImageBuffer.from_array(out)


def center_crop_scale(img: ImageBuffer, out_width: int, out_height: int) -> ImageBuffer:
    """Uniformly scale so the tighter dimension fits, then crop the centre.

    The scale factor is max(out_width/width, out_height/height); the scaled
    image (rounded dimensions) is center-cropped to exactly the requested
    size. Sampling uses the symmetric half-pixel convention so that an
    identity request is bit-exact.
    """
    if out_width < 1 or out_height < 1:
        raise ValueError(f"output dimensions must be >= 1, got {out_width}x{out_height}")
    f = max(out_width / img.width, out_height / img.height)
    scaled_w = int(math.floor(img.width * f + 0.5))
    scaled_h = int(math.floor(img.height * f + 0.5))
    left = (scaled_w - out_width) // 2
    top = (scaled_h - out_height) // 2
    # sampling uses the exact uniform factor; the rounded dims only place the crop
    xs = (np.arange(out_width, dtype=np.float64) + left + 0.5) / f - 0.5
    ys = (np.arange(out_height, dtype=np.float64) + top + 0.5) / f - 0.5
    u, v = np.meshgrid(xs, ys)
    return ImageBuffer.from_array(_round_u8(_bilinear_sample(img.pixels, u, v, border="clamp")))


def binarize(pmap: ProbabilityMap, threshold: float) -> BinaryMask:
    """Threshold a probability map; a value equal to the threshold is lesion."""
    if not (isinstance(threshold, (int, float)) and math.isfinite(threshold)) or not (
        0.0 <= threshold <= 1.0
    ):
        raise InvalidThresholdError(f"threshold must be in [0, 1], got {threshold!r}")
    return BinaryMask(pmap.values >= threshold)


def overlay(
    rgb: ImageBuffer,
    mask: BinaryMask,
    tint: tuple[int, int, int] = (255, 0, 0),
    alpha: float = 0.4,
) -> ImageBuffer:
    """Blend tint over the masked pixels of an RGB image.

    Masked pixels become round((1-alpha)*pixel + alpha*tint); unmasked
    pixels pass through untouched.
    """
    if rgb.channels != 3:
        raise DimensionMismatchError(f"overlay requires an RGB image, got {rgb.channels} channel(s)")
    if (mask.height, mask.width) != (rgb.height, rgb.width):
        raise DimensionMismatchError(
            f"mask {mask.width}x{mask.height} does not match image {rgb.width}x{rgb.height}"
        )
    if not 0.0 <= alpha <= 1.0:
        raise ValueError(f"alpha must be in [0, 1], got {alpha}")
    blended = _round_u8(
        (1.0 - alpha) * rgb.pixels.astype(np.float64) + alpha * np.asarray(tint, dtype=np.float64)
    )
    out = rgb.pixels.copy()
    out[mask.bits] = blended[mask.bits]
    return ImageBuffer.from_array(out)
