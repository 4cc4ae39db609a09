"""Least-squares similarity transforms from reference-point pairs.

Coordinates are continuous image-space pixels: origin at the top-left
pixel centre, x growing rightward, y downward. A transform maps a
source-frame point p to ``translation + scale * R(rotation) @ p`` where
R is the standard 2D rotation matrix. Scale is always positive; there is
no shear, reflection, or perspective component.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .errors import (
    DegenerateConfigurationError,
    NonFiniteInputError,
    TooFewPairsError,
)

# Source spread below which scale and rotation are unobservable.
COINCIDENT_EPS = 1e-9


def _wrap_angle(theta: float) -> float:
    """Wrap an angle to (-pi, pi]."""
    wrapped = math.remainder(theta, math.tau)
    if wrapped <= -math.pi:
        wrapped += math.tau
    return wrapped


@dataclass(frozen=True)
class Point2:
    """A finite 2D point in pixel coordinates."""

    x: float
    y: float

    def __post_init__(self) -> None:
        object.__setattr__(self, "x", float(self.x))
        object.__setattr__(self, "y", float(self.y))
        if not (math.isfinite(self.x) and math.isfinite(self.y)):
            raise NonFiniteInputError(f"point must be finite, got ({self.x}, {self.y})")


@dataclass(frozen=True)
class PointPair:
    """One placed correspondence: contrast-frame point -> RGB-frame point."""

    source: Point2
    target: Point2


@dataclass(frozen=True)
class SimilarityTransform:
    """Uniform scale + rotation + translation, the 4-DOF alignment map.

    ``rotation`` is stored in radians and normalized to (-pi, pi] at
    construction. ``scale`` must be finite and strictly positive.
    """

    scale: float
    rotation: float
    tx: float
    ty: float

    def __post_init__(self) -> None:
        scale = float(self.scale)
        rotation = float(self.rotation)
        tx = float(self.tx)
        ty = float(self.ty)
        if not (math.isfinite(scale) and scale > 0.0):
            raise NonFiniteInputError(f"scale must be finite and > 0, got {scale}")
        if not all(math.isfinite(v) for v in (rotation, tx, ty)):
            raise NonFiniteInputError("rotation and translation must be finite")
        object.__setattr__(self, "scale", scale)
        object.__setattr__(self, "rotation", _wrap_angle(rotation))
        object.__setattr__(self, "tx", tx)
        object.__setattr__(self, "ty", ty)

    @classmethod
    def identity(cls) -> SimilarityTransform:
        return cls(1.0, 0.0, 0.0, 0.0)

    @property
    def translation(self) -> tuple[float, float]:
        return (self.tx, self.ty)

    def matrix(self) -> np.ndarray:
        """2x3 matrix [[a, -b, tx], [b, a, ty]] with a+bi = scale*exp(i*rotation)."""
        a = self.scale * math.cos(self.rotation)
        b = self.scale * math.sin(self.rotation)
        return np.array([[a, -b, self.tx], [b, a, self.ty]])

    def apply(self, p: Point2) -> Point2:
        a = self.scale * math.cos(self.rotation)
        b = self.scale * math.sin(self.rotation)
        return Point2(a * p.x - b * p.y + self.tx, b * p.x + a * p.y + self.ty)

    def apply_xy(self, xs: np.ndarray, ys: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Vectorized forward map of coordinate arrays (same shapes in, same out)."""
        a = self.scale * math.cos(self.rotation)
        b = self.scale * math.sin(self.rotation)
        return a * xs - b * ys + self.tx, b * xs + a * ys + self.ty

    def inverse(self) -> SimilarityTransform:
        """Inverse map: scale 1/s, rotation -r, translation -(1/s)*R(-r)@t."""
        inv_scale = 1.0 / self.scale
        a = inv_scale * math.cos(-self.rotation)
        b = inv_scale * math.sin(-self.rotation)
        return SimilarityTransform(
            inv_scale,
            -self.rotation,
            -(a * self.tx - b * self.ty),
            -(b * self.tx + a * self.ty),
        )

    def to_dict(self) -> dict:
        return {"scale": self.scale, "rotation_rad": self.rotation, "tx": self.tx, "ty": self.ty}

    @classmethod
    def from_dict(cls, obj: dict) -> SimilarityTransform:
        try:
            return cls(
                float(obj["scale"]),
                float(obj["rotation_rad"]),
                float(obj["tx"]),
                float(obj["ty"]),
            )
        except (KeyError, TypeError) as exc:
            raise ValueError(f"malformed transform object: {obj!r}") from exc


def estimate_similarity(pairs: Sequence[PointPair]) -> SimilarityTransform:
    """Fit the least-squares-optimal similarity transform to point pairs.

    Minimizes ``sum(|T(source_i) - target_i|^2)`` over scale, rotation and
    translation in closed form (planar Procrustes via complex regression;
    reflections are never considered). With exactly two distinct pairs the
    fit is exact.

    Raises TooFewPairsError for fewer than two pairs and
    DegenerateConfigurationError when the sources are coincident (spread
    below ``COINCIDENT_EPS``) or the correspondence forces a zero scale.
    """
    pairs = list(pairs)
    if len(pairs) < 2:
        raise TooFewPairsError(f"need at least 2 point pairs, got {len(pairs)}")
    src = np.array([complex(p.source.x, p.source.y) for p in pairs])
    dst = np.array([complex(p.target.x, p.target.y) for p in pairs])

    src_mean = src.mean()
    dst_mean = dst.mean()
    src_zero = src - src_mean
    dst_zero = dst - dst_mean

    if np.max(np.abs(src_zero)) < COINCIDENT_EPS:
        raise DegenerateConfigurationError(
            f"source points coincide within {COINCIDENT_EPS} px; "
            "scale and rotation are unobservable"
        )

    # w = s*exp(i*r) solves the linear least-squares problem exactly.
    w = np.sum(dst_zero * np.conj(src_zero)) / np.sum(np.abs(src_zero) ** 2)
    scale = abs(w)
    if not (math.isfinite(scale) and scale > 0.0):
        raise DegenerateConfigurationError(
            "pairs admit only a zero-scale fit (targets carry no source-correlated spread)"
        )
    translation = dst_mean - w * src_mean
    return SimilarityTransform(scale, math.atan2(w.imag, w.real), translation.real, translation.imag)


def residuals(t: SimilarityTransform, pairs: Sequence[PointPair]) -> list[float]:
    """Per-pair distance |T(source) - target| in target pixels."""
    if not pairs:
        raise ValueError("residuals require at least one pair")
    out = []
    for p in pairs:
        mapped = t.apply(p.source)
        out.append(math.hypot(mapped.x - p.target.x, mapped.y - p.target.y))
    return out


def pairs_to_jsonable(pairs: Iterable[PointPair]) -> list[dict]:
    """Point pairs as the wire format: [{"source": [x, y], "target": [x, y]}, ...]."""
    return [
        {"source": [p.source.x, p.source.y], "target": [p.target.x, p.target.y]}
        for p in pairs
    ]


def pairs_from_jsonable(obj) -> list[PointPair]:
    """Parse the wire format back into PointPair objects; ValueError on malformed input."""
    if not isinstance(obj, list):
        raise ValueError(f"point pairs must be a JSON array, got {type(obj).__name__}")
    out = []
    for i, entry in enumerate(obj):
        try:
            sx, sy = entry["source"]
            tx, ty = entry["target"]
            out.append(PointPair(Point2(float(sx), float(sy)), Point2(float(tx), float(ty))))
        except NonFiniteInputError:
            raise
        except (KeyError, TypeError, ValueError) as exc:
            raise ValueError(f"malformed point pair at index {i}: {entry!r}") from exc
    return out
