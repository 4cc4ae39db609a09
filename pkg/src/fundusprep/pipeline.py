"""Case evaluation flow: classifier gate, then conditional segmentation.

A case is an RGB image plus a scalar classifier score in [0, 1]. Scores at
or above the gate (default 0.5) are positive; only then is the probability
map binarized into a lesion mask and blended over the RGB image. Negative
cases return the scalar alone.
"""

from __future__ import annotations

import json
import shutil
import uuid
from dataclasses import dataclass, field
from pathlib import Path

from .errors import (
    DimensionMismatchError,
    FundusprepError,
    MissingSegmentationMapError,
)
from .pngio import encode_image, read_image, read_probability_map
from .raster import BinaryMask, ImageBuffer, ProbabilityMap, binarize, overlay

DEFAULT_GATE = 0.5
DEFAULT_SEG_THRESHOLD = 0.05
DEFAULT_TINT = (255, 0, 0)
DEFAULT_ALPHA = 0.4


@dataclass(frozen=True)
class EvaluationResult:
    """Scalar decision plus, for positive cases only, mask and overlay."""

    score: float
    decision: bool
    mask: BinaryMask | None = None
    overlay: ImageBuffer | None = None

    def __post_init__(self) -> None:
        has_images = self.mask is not None and self.overlay is not None
        lacks_images = self.mask is None and self.overlay is None
        if self.decision and not has_images:
            raise ValueError("positive decisions must carry mask and overlay")
        if not self.decision and not lacks_images:
            raise ValueError("negative decisions must not carry mask or overlay")


@dataclass(frozen=True)
class CaseError:
    case_id: str
    message: str


@dataclass(frozen=True)
class BatchSummary:
    positive: int
    negative: int
    errors: list[CaseError] = field(default_factory=list)

    @property
    def total(self) -> int:
        return self.positive + self.negative + len(self.errors)


def run_case(
    rgb: ImageBuffer,
    score: float,
    seg_map: ProbabilityMap | None = None,
    seg_threshold: float = DEFAULT_SEG_THRESHOLD,
    gate: float = DEFAULT_GATE,
    tint: tuple[int, int, int] = DEFAULT_TINT,
    alpha: float = DEFAULT_ALPHA,
) -> EvaluationResult:
    """Gate one case; a score equal to the gate counts as positive."""
    if not 0.0 <= score <= 1.0:
        raise ValueError(f"score must be in [0, 1], got {score}")
    if not 0.0 <= gate <= 1.0:
        raise ValueError(f"gate must be in [0, 1], got {gate}")
    decision = score >= gate
    if not decision:
        return EvaluationResult(score=score, decision=False)
    if seg_map is None:
        raise MissingSegmentationMapError(
            f"score {score} is at or above the gate {gate} but no segmentation map was supplied"
        )
    if (seg_map.height, seg_map.width) != (rgb.height, rgb.width):
        raise DimensionMismatchError(
            f"segmentation map {seg_map.width}x{seg_map.height} does not match "
            f"rgb {rgb.width}x{rgb.height}"
        )
    mask = binarize(seg_map, seg_threshold)
    return EvaluationResult(
        score=score,
        decision=True,
        mask=mask,
        overlay=overlay(rgb, mask, tint, alpha),
    )


def _load_case(entry: dict, base: Path) -> tuple[str, ImageBuffer, float, ProbabilityMap | None]:
    if not isinstance(entry, dict) or "id" not in entry:
        raise ValueError(f"manifest entry must be an object with an id, got {entry!r}")
    case_id = str(entry["id"])
    if "rgb" not in entry or "score" not in entry:
        raise ValueError(f"case {case_id}: manifest entry needs rgb and score")
    rgb = read_image(base / str(entry["rgb"]))
    try:
        score = float(entry["score"])
    except (TypeError, ValueError) as exc:
        raise ValueError(f"case {case_id}: score {entry['score']!r} is not a number") from exc
    seg_map = None
    if entry.get("seg_map"):
        seg_map = read_probability_map(base / str(entry["seg_map"]))
    return case_id, rgb, score, seg_map


def run_batch(
    manifest_path: str | Path,
    out_dir: str | Path,
    gate: float = DEFAULT_GATE,
    seg_threshold: float = DEFAULT_SEG_THRESHOLD,
) -> BatchSummary:
    """Evaluate every case in a manifest file, continuing past failures.

    The manifest is a JSON array of {"id", "rgb", "score", "seg_map"?}
    with paths relative to the manifest's directory. Each case writes
    result.json (plus mask.png and overlay.png when positive) under
    out_dir/<id>/, staged and renamed so a case directory is never
    half-written.
    """
    manifest_path = Path(manifest_path)
    out_dir = Path(out_dir)
    entries = json.loads(manifest_path.read_text())
    if not isinstance(entries, list):
        raise ValueError("manifest must be a JSON array of case objects")
    out_dir.mkdir(parents=True, exist_ok=True)

    positive = negative = 0
    errors: list[CaseError] = []
    for i, entry in enumerate(entries):
        case_id = str(entry.get("id", f"case-{i}")) if isinstance(entry, dict) else f"case-{i}"
        try:
            case_id, rgb, score, seg_map = _load_case(entry, manifest_path.parent)
            result = run_case(rgb, score, seg_map, seg_threshold=seg_threshold, gate=gate)
            _write_case(out_dir, case_id, result)
        except (FundusprepError, ValueError, OSError) as exc:
            errors.append(CaseError(case_id, str(exc)))
            continue
        if result.decision:
            positive += 1
        else:
            negative += 1

    summary = BatchSummary(positive=positive, negative=negative, errors=errors)
    summary_obj = {
        "positive": summary.positive,
        "negative": summary.negative,
        "errors": [{"id": e.case_id, "message": e.message} for e in errors],
    }
    (out_dir / "summary.json").write_text(json.dumps(summary_obj, indent=2) + "\n")
    return summary


def _write_case(out_dir: Path, case_id: str, result: EvaluationResult) -> None:
    if "/" in case_id or case_id.startswith("."):
        raise ValueError(f"case id {case_id!r} is not a safe directory name")
    tmp = out_dir / f".tmp-{case_id}-{uuid.uuid4().hex[:8]}"
    tmp.mkdir()
    try:
        payload = {"id": case_id, "score": result.score, "decision": result.decision}
        (tmp / "result.json").write_text(json.dumps(payload, indent=2) + "\n")
        if result.decision:
            (tmp / "mask.png").write_bytes(encode_image(result.mask.to_image()))
            (tmp / "overlay.png").write_bytes(encode_image(result.overlay))
        final = out_dir / case_id
        if final.exists():
            shutil.rmtree(final)
        tmp.rename(final)
    except BaseException:
        shutil.rmtree(tmp, ignore_errors=True)
        raise
