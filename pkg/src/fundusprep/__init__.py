"""Dataset preparation and evaluation toolkit for AMD fundus imaging."""

from .dataset import (
    SetManifest,
    TrainingSet,
    assemble_healthy_set,
    assemble_set,
    list_sets,
    load_set,
    save_set,
)
from .evaluation import (
    ConfusionCounts,
    MetricsRow,
    confusion,
    metrics_from_counts,
    render_report,
    sweep,
)
from .geometry import (
    Point2,
    PointPair,
    SimilarityTransform,
    estimate_similarity,
    residuals,
)
from .pipeline import EvaluationResult, run_batch, run_case
from .raster import (
    BinaryMask,
    ImageBuffer,
    ProbabilityMap,
    binarize,
    center_crop_scale,
    equalize_histogram,
    overlay,
    warp,
)

__version__ = "0.1.0"

__all__ = [
    "BinaryMask",
    "ConfusionCounts",
    "EvaluationResult",
    "ImageBuffer",
    "MetricsRow",
    "Point2",
    "PointPair",
    "ProbabilityMap",
    "SetManifest",
    "SimilarityTransform",
    "TrainingSet",
    "assemble_healthy_set",
    "assemble_set",
    "binarize",
    "center_crop_scale",
    "confusion",
    "equalize_histogram",
    "estimate_similarity",
    "list_sets",
    "load_set",
    "metrics_from_counts",
    "overlay",
    "render_report",
    "residuals",
    "run_batch",
    "run_case",
    "save_set",
    "sweep",
    "warp",
    "__version__",
]
