"""Training-set triplets and the on-disk store.

A set is one directory under the store root holding exactly five files:
rgb.png, contrast.png, mask.png, alignment.json, manifest.json. All images
are 512x512, the mask carries only 0/255, and the manifest records a
sha256 per data file. Writes stage into a temp directory and swap in with
renames so a partially written set is never visible.
"""

from __future__ import annotations

import hashlib
import json
import math
import os
import re
import shutil
import uuid
from dataclasses import dataclass, replace
from datetime import datetime, timezone
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import CorruptSetError, MaskDimensionMismatchError, NotFoundError
from .geometry import (
    PointPair,
    SimilarityTransform,
    estimate_similarity,
    pairs_from_jsonable,
    pairs_to_jsonable,
    residuals,
)
from .pngio import encode_image, read_image
from .raster import BinaryMask, ImageBuffer, center_crop_scale, warp

SET_SIZE = 512
LABELS = ("amd", "healthy")
DATA_FILES = ("rgb.png", "contrast.png", "mask.png", "alignment.json")
SET_FILES = DATA_FILES + ("manifest.json",)

_ID_RE = re.compile(r"^[A-Za-z0-9_-]{1,64}$")


def new_set_id() -> str:
    return uuid.uuid4().hex[:12]


def _utc_now_rfc3339() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds").replace("+00:00", "Z")


def _sha256(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def _canonical_json(obj) -> bytes:
    return (json.dumps(obj, indent=2, sort_keys=True) + "\n").encode("ascii")


@dataclass(frozen=True)
class SetManifest:
    """Summary of one stored set, including per-file checksums."""

    id: str
    revision: int
    label: str
    created_at: str
    residual_max_px: float
    residual_mean_px: float
    checksums: dict[str, str]

    def to_jsonable(self) -> dict:
        return {
            "id": self.id,
            "revision": self.revision,
            "label": self.label,
            "created_at": self.created_at,
            "residual_max_px": self.residual_max_px,
            "residual_mean_px": self.residual_mean_px,
            "checksums": dict(self.checksums),
        }

    @classmethod
    def from_jsonable(cls, obj: dict) -> SetManifest:
        try:
            return cls(
                id=str(obj["id"]),
                revision=int(obj["revision"]),
                label=str(obj["label"]),
                created_at=str(obj["created_at"]),
                residual_max_px=float(obj["residual_max_px"]),
                residual_mean_px=float(obj["residual_mean_px"]),
                checksums={str(k): str(v) for k, v in obj["checksums"].items()},
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise ValueError(f"malformed manifest: {exc}") from exc


@dataclass(frozen=True)
class TrainingSet:
    """The RGB / contrast / mask triplet plus alignment provenance."""

    id: str
    rgb: ImageBuffer
    contrast: ImageBuffer
    mask: ImageBuffer
    transform: SimilarityTransform
    point_pairs: tuple[PointPair, ...]
    revision: int
    label: str
    created_at: str

    def __post_init__(self) -> None:
        object.__setattr__(self, "point_pairs", tuple(self.point_pairs))
        if not _ID_RE.match(self.id):
            raise ValueError(f"set id must match {_ID_RE.pattern}, got {self.id!r}")
        for name, img in (("rgb", self.rgb), ("contrast", self.contrast), ("mask", self.mask)):
            if (img.width, img.height) != (SET_SIZE, SET_SIZE):
                raise ValueError(f"{name} image must be {SET_SIZE}x{SET_SIZE}, got {img.width}x{img.height}")
        if self.rgb.channels != 3:
            raise ValueError("rgb image must have 3 channels")
        if self.mask.channels != 1:
            raise ValueError("mask image must be grayscale")
        if not np.isin(self.mask.plane(), (0, 255)).all():
            raise ValueError("mask values must be 0 or 255")
        if self.revision < 1:
            raise ValueError(f"revision must be >= 1, got {self.revision}")
        if self.label not in LABELS:
            raise ValueError(f"label must be one of {LABELS}, got {self.label!r}")

    def mask_bits(self) -> BinaryMask:
        return BinaryMask.from_image(self.mask)


@dataclass(frozen=True)
class CorruptEntry:
    """A store entry that failed validation during listing."""

    id: str
    invariant: str
    reason: str


def normalization_transform(width: int, height: int, out_size: int = SET_SIZE) -> SimilarityTransform:
    """The similarity map from raw-image coordinates into the normalized frame.

    Mirrors center_crop_scale exactly: uniform scale so the tighter
    dimension fits, then a centred crop, with half-pixel sampling offsets.
    """
    f = max(out_size / width, out_size / height)
    scaled_w = int(math.floor(width * f + 0.5))
    scaled_h = int(math.floor(height * f + 0.5))
    left = (scaled_w - out_size) // 2
    top = (scaled_h - out_size) // 2
    # x_norm = f*(x_raw + 0.5) - 0.5 - left, and likewise for y
    return SimilarityTransform(f, 0.0, 0.5 * f - 0.5 - left, 0.5 * f - 0.5 - top)


def assemble_set(
    rgb_raw: ImageBuffer,
    contrast_raw: ImageBuffer,
    pairs: Sequence[PointPair],
    mask: BinaryMask,
    label: str = "amd",
    set_id: str | None = None,
    created_at: str | None = None,
) -> TrainingSet:
    """Build a normalized training set from raw captures.

    Pair targets are given in raw RGB coordinates; they are re-expressed in
    the normalized 512x512 frame before the transform is estimated, so the
    stored transform maps contrast coordinates straight into the stored
    RGB frame. The mask must already be 512x512 (it is painted in the
    normalized view).
    """
    if (mask.width, mask.height) != (SET_SIZE, SET_SIZE):
        raise MaskDimensionMismatchError(
            f"mask must be {SET_SIZE}x{SET_SIZE}, got {mask.width}x{mask.height}"
        )
    norm = normalization_transform(rgb_raw.width, rgb_raw.height)
    normalized_pairs = [PointPair(p.source, norm.apply(p.target)) for p in pairs]
    transform = estimate_similarity(normalized_pairs)
    rgb = center_crop_scale(rgb_raw, SET_SIZE, SET_SIZE)
    contrast = warp(contrast_raw, transform, SET_SIZE, SET_SIZE)
    return TrainingSet(
        id=set_id or new_set_id(),
        rgb=rgb,
        contrast=contrast,
        mask=mask.to_image(),
        transform=transform,
        point_pairs=tuple(normalized_pairs),
        revision=1,
        label=label,
        created_at=created_at or _utc_now_rfc3339(),
    )


def assemble_healthy_set(
    rgb_raw: ImageBuffer,
    set_id: str | None = None,
    created_at: str | None = None,
) -> TrainingSet:
    """A healthy-control set: normalized RGB, black contrast, all-zero mask."""
    rgb = center_crop_scale(rgb_raw, SET_SIZE, SET_SIZE)
    black = ImageBuffer.from_array(np.zeros((SET_SIZE, SET_SIZE), dtype=np.uint8))
    return TrainingSet(
        id=set_id or new_set_id(),
        rgb=rgb,
        contrast=black,
        mask=black,
        transform=SimilarityTransform.identity(),
        point_pairs=(),
        revision=1,
        label="healthy",
        created_at=created_at or _utc_now_rfc3339(),
    )


def _residual_summary(ts: TrainingSet) -> tuple[float, float]:
    if not ts.point_pairs:
        return 0.0, 0.0
    res = residuals(ts.transform, ts.point_pairs)
    return max(res), sum(res) / len(res)


def encode_set_files(ts: TrainingSet) -> tuple[dict[str, bytes], SetManifest]:
    """Deterministic bytes for all five files plus the manifest they imply."""
    alignment = _canonical_json(
        {"transform": ts.transform.to_dict(), "pairs": pairs_to_jsonable(ts.point_pairs)}
    )
    files = {
        "rgb.png": encode_image(ts.rgb),
        "contrast.png": encode_image(ts.contrast),
        "mask.png": encode_image(ts.mask),
        "alignment.json": alignment,
    }
    res_max, res_mean = _residual_summary(ts)
    manifest = SetManifest(
        id=ts.id,
        revision=ts.revision,
        label=ts.label,
        created_at=ts.created_at,
        residual_max_px=res_max,
        residual_mean_px=res_mean,
        checksums={name: _sha256(data) for name, data in files.items()},
    )
    files["manifest.json"] = _canonical_json(manifest.to_jsonable())
    return files, manifest


def install_set_dir(store_root: Path, set_id: str, prepared: Path) -> None:
    """Atomically make `prepared` the visible directory for set_id.

    Fresh ids are a single rename. Replacement renames the old directory
    aside first; last rename wins if two writers race.
    """
    final = Path(store_root) / set_id
    if final.exists():
        trash = Path(store_root) / f".old-{set_id}-{uuid.uuid4().hex[:8]}"
        os.rename(final, trash)
        os.rename(prepared, final)
        shutil.rmtree(trash, ignore_errors=True)
    else:
        os.rename(prepared, final)


def save_set(ts: TrainingSet, store_root: str | Path) -> SetManifest:
    """Write a set under store_root/<id>/; returns its manifest.

    Encoding is deterministic, and the set appears in the store only once
    all five files are in place.
    """
    store_root = Path(store_root)
    store_root.mkdir(parents=True, exist_ok=True)
    files, manifest = encode_set_files(ts)
    tmp = store_root / f".tmp-{ts.id}-{uuid.uuid4().hex[:8]}"
    tmp.mkdir()
    try:
        for name, data in files.items():
            (tmp / name).write_bytes(data)
        install_set_dir(store_root, ts.id, tmp)
    except BaseException:
        shutil.rmtree(tmp, ignore_errors=True)
        raise
    return manifest


def read_manifest(store_root: str | Path, set_id: str) -> SetManifest:
    """Parse manifest.json for a set; NotFoundError / CorruptSetError on failure."""
    set_dir = Path(store_root) / set_id
    if not set_dir.is_dir():
        raise NotFoundError(f"no set {set_id!r} under {store_root}")
    path = set_dir / "manifest.json"
    if not path.is_file():
        raise CorruptSetError(f"{set_id}: manifest.json is missing", invariant="missing_file")
    try:
        manifest = SetManifest.from_jsonable(json.loads(path.read_text()))
    except (json.JSONDecodeError, ValueError) as exc:
        raise CorruptSetError(f"{set_id}: unreadable manifest: {exc}", invariant="manifest") from exc
    if manifest.id != set_id:
        raise CorruptSetError(
            f"{set_id}: manifest claims id {manifest.id!r}", invariant="id"
        )
    return manifest


def load_set(store_root: str | Path, set_id: str) -> TrainingSet:
    """Load and fully re-validate a stored set.

    Raises NotFoundError for unknown ids and CorruptSetError (naming the
    violated invariant) for anything that fails checksum or invariant
    checks; an invalid set is never returned.
    """
    set_dir = Path(store_root) / set_id
    manifest = read_manifest(store_root, set_id)

    blobs: dict[str, bytes] = {}
    for name in DATA_FILES:
        path = set_dir / name
        if not path.is_file():
            raise CorruptSetError(f"{set_id}: {name} is missing", invariant="missing_file")
        blobs[name] = path.read_bytes()
        expected = manifest.checksums.get(name)
        if expected is None:
            raise CorruptSetError(
                f"{set_id}: manifest has no checksum for {name}", invariant="checksum"
            )
        actual = _sha256(blobs[name])
        if actual != expected:
            raise CorruptSetError(
                f"{set_id}: checksum mismatch for {name}", invariant="checksum"
            )

    def _image(name: str) -> ImageBuffer:
        try:
            return read_image(set_dir / name)
        except Exception as exc:
            raise CorruptSetError(f"{set_id}: unreadable {name}: {exc}", invariant="image") from exc

    rgb = _image("rgb.png")
    contrast = _image("contrast.png")
    mask = _image("mask.png")

    for name, img in (("rgb.png", rgb), ("contrast.png", contrast), ("mask.png", mask)):
        if (img.width, img.height) != (SET_SIZE, SET_SIZE):
            raise CorruptSetError(
                f"{set_id}: {name} is {img.width}x{img.height}, expected {SET_SIZE}x{SET_SIZE}",
                invariant="image_size",
            )
    if rgb.channels != 3:
        raise CorruptSetError(f"{set_id}: rgb.png must be RGB", invariant="rgb_channels")
    if mask.channels != 1:
        raise CorruptSetError(f"{set_id}: mask.png must be grayscale", invariant="mask_channels")
    if not np.isin(mask.plane(), (0, 255)).all():
        raise CorruptSetError("mask values must be 0 or 255", invariant="mask_values")

    try:
        alignment = json.loads(blobs["alignment.json"])
        transform = SimilarityTransform.from_dict(alignment["transform"])
        pairs = tuple(pairs_from_jsonable(alignment["pairs"]))
    except Exception as exc:
        raise CorruptSetError(
            f"{set_id}: unreadable alignment.json: {exc}", invariant="alignment"
        ) from exc

    if manifest.revision < 1:
        raise CorruptSetError(f"{set_id}: revision must be >= 1", invariant="revision")
    if manifest.label not in LABELS:
        raise CorruptSetError(
            f"{set_id}: label must be one of {LABELS}", invariant="label"
        )

    return TrainingSet(
        id=set_id,
        rgb=rgb,
        contrast=contrast,
        mask=mask,
        transform=transform,
        point_pairs=pairs,
        revision=manifest.revision,
        label=manifest.label,
        created_at=manifest.created_at,
    )


def list_sets(store_root: str | Path) -> tuple[list[SetManifest], list[CorruptEntry]]:
    """All valid manifests sorted by id, plus a report of corrupt entries."""
    store_root = Path(store_root)
    if not store_root.is_dir():
        raise FileNotFoundError(f"store root {store_root} does not exist")
    manifests: list[SetManifest] = []
    corrupt: list[CorruptEntry] = []
    for child in sorted(store_root.iterdir()):
        if not child.is_dir() or child.name.startswith("."):
            continue
        try:
            load_set(store_root, child.name)
            manifests.append(read_manifest(store_root, child.name))
        except CorruptSetError as exc:
            corrupt.append(CorruptEntry(child.name, exc.invariant, str(exc)))
    return manifests, corrupt


def with_revision(ts: TrainingSet, revision: int) -> TrainingSet:
    return replace(ts, revision=revision)
