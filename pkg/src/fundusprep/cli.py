"""Command-line entry point: every workflow, headless.

Exit codes: 0 success, 2 usage or validation problem, 1 runtime/I-O
failure. With --json, errors also go to stderr as single-line JSON.
"""

from __future__ import annotations

import argparse
import json
import socket
import sys
from pathlib import Path

from . import __version__, dataset, evaluation, pipeline
from .errors import (
    CorruptSetError,
    DimensionMismatchError,
    EmptyCorpusError,
    FundusprepError,
    GeometryError,
    InvalidThresholdError,
    MaskDimensionMismatchError,
    MissingSegmentationMapError,
    NotFoundError,
    PngFormatError,
)
from .geometry import estimate_similarity, pairs_from_jsonable, residuals
from .pngio import read_image, read_mask, read_probability_map, write_image
from .raster import center_crop_scale, equalize_histogram, warp

VALIDATION_ERRORS = (
    GeometryError,
    InvalidThresholdError,
    DimensionMismatchError,
    MaskDimensionMismatchError,
    MissingSegmentationMapError,
    PngFormatError,
    CorruptSetError,
    NotFoundError,
    EmptyCorpusError,
    json.JSONDecodeError,
    ValueError,
)

# flags a config file may default; values are coerced like CLI input
CONFIG_KEYS = {
    "store": str,
    "bind": str,
    "gate": float,
    "seg_threshold": float,
    "thresholds": str,
    "format": str,
    "size": int,
    "label": str,
    "ui_dir": str,
}


def _read_config(path: str) -> dict:
    values = {}
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ValueError(f"{path}:{lineno}: expected key=value, got {line!r}")
        key, _, raw = line.partition("=")
        key = key.strip().replace("-", "_")
        if key not in CONFIG_KEYS:
            raise ValueError(f"{path}:{lineno}: unknown config key {key!r}")
        values[key] = CONFIG_KEYS[key](raw.strip())
    return values


def _load_pairs(path: str):
    pairs = pairs_from_jsonable(json.loads(Path(path).read_text()))
    return pairs


def _print_residuals(t, pairs) -> None:
    res = residuals(t, pairs)
    print(f"pairs: {len(pairs)}")
    print(f"residuals px: {[round(r, 6) for r in res]}")
    print(f"residual max: {round(max(res), 6)} px")
    print(f"residual mean: {round(sum(res) / len(res), 6)} px")


def cmd_register(args) -> int:
    pairs = _load_pairs(args.points)
    transform = estimate_similarity(pairs)
    rgb = read_image(args.rgb)
    contrast = read_image(args.contrast)
    Path(args.out_transform).write_text(json.dumps(transform.to_dict(), indent=2) + "\n")
    write_image(warp(contrast, transform, rgb.width, rgb.height), args.out_warped)
    print(
        f"scale={transform.scale:.6f} rotation={transform.rotation:.6f} rad "
        f"tx={transform.tx:.6f} ty={transform.ty:.6f}"
    )
    _print_residuals(transform, pairs)
    return 0


def cmd_pack(args) -> int:
    rgb = read_image(args.rgb)
    if args.label == "healthy" and args.contrast is None:
        ts = dataset.assemble_healthy_set(rgb, set_id=args.id, created_at=args.created_at)
    else:
        for flag, value in (("--contrast", args.contrast), ("--points", args.points), ("--mask", args.mask)):
            if value is None:
                raise ValueError(f"{flag} is required unless packing a healthy set without contrast")
        contrast = read_image(args.contrast)
        pairs = _load_pairs(args.points)
        mask = read_mask(args.mask)
        ts = dataset.assemble_set(
            rgb, contrast, pairs, mask,
            label=args.label, set_id=args.id, created_at=args.created_at,
        )
    manifest = dataset.save_set(ts, args.store)
    print(f"saved set {manifest.id} revision {manifest.revision} under {args.store}")
    print(f"residual max: {manifest.residual_max_px} px")
    print(f"residual mean: {manifest.residual_mean_px} px")
    return 0


def cmd_equalize(args) -> int:
    write_image(equalize_histogram(read_image(args.infile)), args.outfile)
    return 0


def cmd_normalize(args) -> int:
    write_image(center_crop_scale(read_image(args.infile), args.size, args.size), args.outfile)
    return 0


def _collect_eval_corpus(pred_dir: Path, truth_dir: Path):
    """Pair prediction maps with truth masks by filename.

    pred_dir either holds PNGs directly (one model, named after the
    directory) or one subdirectory per model.
    """
    model_dirs = sorted(d for d in pred_dir.iterdir() if d.is_dir())
    if not model_dirs:
        model_dirs = [pred_dir]
    truths = {}
    preds = []
    aligned_truths = []
    for model_dir in model_dirs:
        for png in sorted(model_dir.glob("*.png")):
            truth_path = truth_dir / png.name
            if not truth_path.is_file():
                raise ValueError(f"no truth mask for {png}: expected {truth_path}")
            pmap = read_probability_map(png)
            if png.name not in truths:
                truths[png.name] = read_mask(truth_path)
            truth = truths[png.name]
            if (pmap.width, pmap.height) != (truth.width, truth.height):
                raise DimensionMismatchError(
                    f"{png}: map is {pmap.width}x{pmap.height} but truth "
                    f"{truth_path} is {truth.width}x{truth.height}"
                )
            preds.append((model_dir.name, pmap))
            aligned_truths.append(truth)
    return preds, aligned_truths


def cmd_evaluate(args) -> int:
    thresholds = [float(v) for v in args.thresholds.split(",") if v.strip() != ""]
    preds, truths = _collect_eval_corpus(Path(args.pred_dir), Path(args.truth_dir))
    rows = evaluation.sweep(preds, truths, thresholds=thresholds, aggregate=args.aggregate)
    report = evaluation.render_report(rows, format=args.format)
    if args.out:
        Path(args.out).write_text(report)
        print(f"wrote {args.format} report for {len(rows)} rows to {args.out}")
    else:
        print(report, end="")
    return 0


def cmd_pipeline(args) -> int:
    summary = pipeline.run_batch(
        args.manifest, args.out_dir, gate=args.gate, seg_threshold=args.seg_threshold
    )
    print(f"positive: {summary.positive}")
    print(f"negative: {summary.negative}")
    print(f"errors: {len(summary.errors)}")
    for err in summary.errors:
        print(f"  {err.case_id}: {err.message}", file=sys.stderr)
    return 1 if summary.errors else 0


def cmd_serve(args) -> int:
    import uvicorn

    from .syncservice import create_app

    host, _, port_text = args.bind.rpartition(":")
    if not host or not port_text.isdigit():
        raise ValueError(f"--bind must look like addr:port, got {args.bind!r}")
    port = int(port_text)
    # surface bind conflicts as a plain runtime error before uvicorn boots
    probe = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
    try:
        probe.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
        probe.bind((host, port))
    finally:
        probe.close()
    app = create_app(args.store, ui_dir=args.ui_dir)
    print(f"serving store {args.store} on http://{host}:{port}")
    uvicorn.run(app, host=host, port=port, log_level="warning")
    return 0


def build_parser(config: dict) -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fundusprep",
        description="Dataset preparation and evaluation toolkit for AMD fundus imaging.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("--json", action="store_true", help="emit errors as single-line JSON on stderr")
    parser.add_argument("--config", help="key=value file supplying flag defaults")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("register", help="estimate a transform from point pairs and warp the contrast image")
    p.add_argument("--rgb", required=True, help="RGB image (defines the output frame)")
    p.add_argument("--contrast", required=True, help="contrast image to warp")
    p.add_argument("--points", required=True, help="point-pairs JSON")
    p.add_argument("--out-transform", required=True, help="where to write the transform JSON")
    p.add_argument("--out-warped", required=True, help="where to write the warped contrast PNG")
    p.set_defaults(func=cmd_register)

    p = sub.add_parser("pack", help="assemble and store a training set")
    p.add_argument("--rgb", required=True)
    p.add_argument("--contrast")
    p.add_argument("--points")
    p.add_argument("--mask")
    p.add_argument("--store", default=config.get("store"), required="store" not in config)
    p.add_argument("--label", choices=dataset.LABELS, default=config.get("label", "amd"))
    p.add_argument("--id", help="set id (generated when omitted)")
    p.add_argument("--created-at", help="override the creation timestamp (RFC3339)")
    p.set_defaults(func=cmd_pack)

    p = sub.add_parser("equalize", help="per-channel histogram equalization")
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--out", dest="outfile", required=True)
    p.set_defaults(func=cmd_equalize)

    p = sub.add_parser("normalize", help="scale, center and crop to a square size")
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--out", dest="outfile", required=True)
    p.add_argument("--size", type=int, default=config.get("size", dataset.SET_SIZE))
    p.set_defaults(func=cmd_normalize)

    p = sub.add_parser("evaluate", help="threshold sweep over prediction maps vs truth masks")
    p.add_argument("--pred-dir", required=True, help="model outputs: PNGs or one subdirectory per model")
    p.add_argument("--truth-dir", required=True, help="ground-truth masks matched by filename")
    p.add_argument("--thresholds", default=config.get("thresholds", "0.01,0.05,0.1,0.5"))
    p.add_argument("--format", choices=("csv", "markdown"), default=config.get("format", "markdown"))
    p.add_argument("--aggregate", choices=("micro", "macro"), default="micro")
    p.add_argument("--out", help="write the report here instead of stdout")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("pipeline", help="run the gated evaluation flow over a case manifest")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--gate", type=float, default=config.get("gate", pipeline.DEFAULT_GATE))
    p.add_argument(
        "--seg-threshold",
        type=float,
        default=config.get("seg_threshold", pipeline.DEFAULT_SEG_THRESHOLD),
    )
    p.set_defaults(func=cmd_pipeline)

    p = sub.add_parser("serve", help="start the sync service (and annotator UI when present)")
    p.add_argument("--store", default=config.get("store"), required="store" not in config)
    p.add_argument("--bind", default=config.get("bind", "127.0.0.1:8321"))
    p.add_argument("--ui-dir", default=config.get("ui_dir"), help="static annotator assets to host")
    p.set_defaults(func=cmd_serve)

    return parser


def _report_error(exc: Exception, as_json: bool) -> None:
    message = f"{type(exc).__name__}: {exc}"
    if as_json:
        print(json.dumps({"error": type(exc).__name__, "message": str(exc)}), file=sys.stderr)
    else:
        print(f"fundusprep: {message}", file=sys.stderr)


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    as_json = "--json" in argv

    # --config must be read before parsing so it can supply defaults
    config: dict = {}
    if "--config" in argv:
        idx = argv.index("--config")
        if idx + 1 >= len(argv):
            print("fundusprep: --config needs a path", file=sys.stderr)
            return 2
        try:
            config = _read_config(argv[idx + 1])
        except OSError as exc:
            _report_error(exc, as_json)
            return 1
        except ValueError as exc:
            _report_error(exc, as_json)
            return 2

    parser = build_parser(config)
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except VALIDATION_ERRORS as exc:
        _report_error(exc, as_json)
        return 2
    except (OSError, FundusprepError) as exc:
        _report_error(exc, as_json)
        return 1


if __name__ == "__main__":
    sys.exit(main())
