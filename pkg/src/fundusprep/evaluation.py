"""Confusion-matrix scoring of binarized predictions against truth masks.

Lesion pixels are the positive class. A sweep binarizes every probability
map at each threshold, pools the pixel counts over the corpus
(micro-average; a per-image macro average is available as an option), and
emits one row per (model, threshold).
"""

from __future__ import annotations

import io
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import DimensionMismatchError, EmptyCorpusError
from .raster import BinaryMask, ProbabilityMap, binarize

DEFAULT_THRESHOLDS = (0.01, 0.05, 0.1, 0.5)


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int
    fp: int
    tn: int
    fn: int

    def __post_init__(self) -> None:
        for name in ("tp", "fp", "tn", "fn"):
            v = getattr(self, name)
            if not isinstance(v, int) or v < 0:
                raise ValueError(f"{name} must be a non-negative integer, got {v!r}")

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.tn + self.fn

    def __add__(self, other: ConfusionCounts) -> ConfusionCounts:
        return ConfusionCounts(
            self.tp + other.tp, self.fp + other.fp, self.tn + other.tn, self.fn + other.fn
        )


@dataclass(frozen=True)
class Metrics:
    """Derived ratios; sensitivity/specificity are None when undefined."""

    sensitivity: float | None
    specificity: float | None
    accuracy: float
    dice: float
    dice_both_empty: bool = False


@dataclass(frozen=True)
class MetricsRow:
    model: str
    threshold: float
    counts: ConfusionCounts
    sensitivity: float | None
    specificity: float | None
    accuracy: float
    dice: float
    dice_both_empty: bool = False

    @classmethod
    def from_counts(cls, model: str, threshold: float, counts: ConfusionCounts) -> MetricsRow:
        m = metrics_from_counts(counts)
        return cls(
            model=model,
            threshold=threshold,
            counts=counts,
            sensitivity=m.sensitivity,
            specificity=m.specificity,
            accuracy=m.accuracy,
            dice=m.dice,
            dice_both_empty=m.dice_both_empty,
        )


def confusion(pred: BinaryMask, truth: BinaryMask) -> ConfusionCounts:
    """Per-pixel confusion counts; lesion (True) is the positive class."""
    if (pred.height, pred.width) != (truth.height, truth.width):
        raise DimensionMismatchError(
            f"prediction {pred.width}x{pred.height} does not match "
            f"truth {truth.width}x{truth.height}"
        )
    p = pred.bits
    t = truth.bits
    tp = int(np.count_nonzero(p & t))
    fp = int(np.count_nonzero(p & ~t))
    fn = int(np.count_nonzero(~p & t))
    tn = int(np.count_nonzero(~p & ~t))
    return ConfusionCounts(tp, fp, tn, fn)


def metrics_from_counts(counts: ConfusionCounts) -> Metrics:
    """Ratios over pooled counts.

    Undefined ratios (zero denominator) come back as None, never NaN.
    Dice over two empty masks is defined as 1.0 and flagged so it cannot
    silently inflate a corpus average.
    """
    if counts.total <= 0:
        raise ValueError("metrics require at least one counted pixel")
    tp, fp, tn, fn = counts.tp, counts.fp, counts.tn, counts.fn
    sensitivity = tp / (tp + fn) if tp + fn > 0 else None
    specificity = tn / (tn + fp) if tn + fp > 0 else None
    accuracy = (tp + tn) / counts.total
    if 2 * tp + fp + fn > 0:
        return Metrics(sensitivity, specificity, accuracy, 2 * tp / (2 * tp + fp + fn))
    return Metrics(sensitivity, specificity, accuracy, 1.0, dice_both_empty=True)


def _mean_or_none(values: list[float]) -> float | None:
    return sum(values) / len(values) if values else None


def sweep(
    preds: Sequence[tuple[str, ProbabilityMap]],
    truths: Sequence[BinaryMask],
    thresholds: Sequence[float] = DEFAULT_THRESHOLDS,
    aggregate: str = "micro",
) -> list[MetricsRow]:
    """Score every model at every threshold over an index-aligned corpus.

    ``preds[i]`` is compared against ``truths[i]``; a model name may appear
    many times, once per image it covers. Rows come back grouped by model
    (first-appearance order) with thresholds ascending.
    """
    if not preds:
        raise EmptyCorpusError("no predictions to evaluate")
    if len(preds) != len(truths):
        raise ValueError(f"{len(preds)} predictions but {len(truths)} truth masks")
    if aggregate not in ("micro", "macro"):
        raise ValueError(f"aggregate must be 'micro' or 'macro', got {aggregate!r}")
    for (_, pmap), truth in zip(preds, truths):
        if (pmap.height, pmap.width) != (truth.height, truth.width):
            raise DimensionMismatchError(
                f"map {pmap.width}x{pmap.height} does not match "
                f"truth {truth.width}x{truth.height}"
            )

    models: list[str] = []
    for name, _ in preds:
        if name not in models:
            models.append(name)

    rows = []
    for model in models:
        indexed = [(pmap, truth) for (name, pmap), truth in zip(preds, truths) if name == model]
        for threshold in sorted(thresholds):
            per_image = [confusion(binarize(pmap, threshold), truth) for pmap, truth in indexed]
            pooled = ConfusionCounts(0, 0, 0, 0)
            for c in per_image:
                pooled = pooled + c
            if aggregate == "micro":
                rows.append(MetricsRow.from_counts(model, threshold, pooled))
            else:
                image_metrics = [metrics_from_counts(c) for c in per_image]
                rows.append(
                    MetricsRow(
                        model=model,
                        threshold=threshold,
                        counts=pooled,
                        sensitivity=_mean_or_none(
                            [m.sensitivity for m in image_metrics if m.sensitivity is not None]
                        ),
                        specificity=_mean_or_none(
                            [m.specificity for m in image_metrics if m.specificity is not None]
                        ),
                        accuracy=sum(m.accuracy for m in image_metrics) / len(image_metrics),
                        dice=sum(m.dice for m in image_metrics) / len(image_metrics),
                        dice_both_empty=any(m.dice_both_empty for m in image_metrics),
                    )
                )
    return rows


def _ordered(rows: Sequence[MetricsRow]) -> list[MetricsRow]:
    models: list[str] = []
    for row in rows:
        if row.model not in models:
            models.append(row.model)
    return [
        row
        for model in models
        for row in sorted((r for r in rows if r.model == model), key=lambda r: r.threshold)
    ]


def _fmt_threshold(value: float) -> str:
    return f"{value:g}"


def _fmt_pct(value: float | None) -> str:
    return "—" if value is None else f"{value * 100:.2f}"


def _fmt_frac(value: float | None) -> str:
    return "" if value is None else f"{value:.6f}"


def render_report(rows: Sequence[MetricsRow], format: str = "markdown") -> str:
    """Rows as CSV (fractions, 6 decimals) or a markdown table (percent, 2).

    Rows are grouped by model with thresholds ascending; in markdown the
    model name is shown only on the first row of its group.
    """
    if not rows:
        raise ValueError("report requires at least one row")
    ordered = _ordered(rows)
    if format == "csv":
        out = io.StringIO()
        out.write("model,threshold,tp,fp,tn,fn,sensitivity,specificity,accuracy,dice\n")
        for r in ordered:
            c = r.counts
            out.write(
                f"{r.model},{_fmt_threshold(r.threshold)},{c.tp},{c.fp},{c.tn},{c.fn},"
                f"{_fmt_frac(r.sensitivity)},{_fmt_frac(r.specificity)},"
                f"{_fmt_frac(r.accuracy)},{_fmt_frac(r.dice)}\n"
            )
        return out.getvalue()
    if format == "markdown":
        lines = [
            "| Network model | Threshold | Sensitivity | Specificity | Accuracy | Dice |",
            "| --- | ---: | ---: | ---: | ---: | ---: |",
        ]
        previous = None
        for r in ordered:
            label = r.model if r.model != previous else ""
            previous = r.model
            lines.append(
                f"| {label} | {_fmt_threshold(r.threshold)} | {_fmt_pct(r.sensitivity)} "
                f"| {_fmt_pct(r.specificity)} | {_fmt_pct(r.accuracy)} | {_fmt_pct(r.dice)} |"
            )
        return "\n".join(lines) + "\n"
    raise ValueError(f"unknown report format {format!r}")
