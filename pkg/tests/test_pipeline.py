from __future__ import annotations

import json

import numpy as np
import pytest

from fundusprep.errors import DimensionMismatchError, MissingSegmentationMapError
from fundusprep.pipeline import (
    BatchSummary,
    EvaluationResult,
    run_batch,
    run_case,
)
from fundusprep.pngio import write_image
from fundusprep.raster import BinaryMask, ImageBuffer, ProbabilityMap


def rgb(w=8, h=8, value=100) -> ImageBuffer:
    return ImageBuffer.from_array(np.full((h, w, 3), value, dtype=np.uint8))


class TestRunCase:
    def test_below_gate_returns_scalar_only(self):
        result = run_case(rgb(), 0.3)
        assert result.decision is False
        assert result.mask is None
        assert result.overlay is None
        assert result.score == 0.3

    def test_gate_boundary_is_positive(self):
        pmap = ProbabilityMap(np.zeros((8, 8)))
        result = run_case(rgb(), 0.5, pmap)
        assert result.decision is True

    def test_positive_case_masks_and_overlays(self):
        pmap = ProbabilityMap(np.full((8, 8), 0.2))
        result = run_case(rgb(), 0.9, pmap, seg_threshold=0.1)
        assert result.mask.bits.all()
        # fully tinted with the default red at default alpha
        expected = round(0.6 * 100 + 0.4 * 255)
        assert tuple(result.overlay.pixels[0, 0]) == (expected, 60, 60)

    def test_positive_without_map_fails(self):
        with pytest.raises(MissingSegmentationMapError):
            run_case(rgb(), 0.8)

    def test_dimension_mismatch(self):
        with pytest.raises(DimensionMismatchError):
            run_case(rgb(8, 8), 0.8, ProbabilityMap(np.zeros((4, 4))))

    def test_score_validation(self):
        with pytest.raises(ValueError):
            run_case(rgb(), 1.5)

    def test_gate_monotonicity(self):
        pmap = ProbabilityMap(np.zeros((8, 8)))
        for score in (0.0, 0.3, 0.5, 0.7, 1.0):
            decisions = []
            for gate in (0.2, 0.5, 0.8):
                seg = pmap if score >= gate else None
                try:
                    decisions.append(run_case(rgb(), score, seg, gate=gate).decision)
                except MissingSegmentationMapError:
                    decisions.append(True)  # gate fired; map just absent
            # raising the gate never flips negative -> positive
            for earlier, later in zip(decisions, decisions[1:]):
                assert earlier or not later

    def test_result_invariant_enforced(self):
        with pytest.raises(ValueError):
            EvaluationResult(score=0.9, decision=True)
        with pytest.raises(ValueError):
            EvaluationResult(
                score=0.1,
                decision=False,
                mask=BinaryMask.empty(2, 2),
                overlay=rgb(2, 2),
            )


class TestRunBatch:
    def write_case_files(self, root, case_id, score, seg_value=None, size=8):
        write_image(rgb(size, size), root / f"{case_id}.png")
        entry = {"id": case_id, "rgb": f"{case_id}.png", "score": score}
        if seg_value is not None:
            seg = ImageBuffer.from_array(
                np.full((size, size), int(seg_value * 255), dtype=np.uint8)
            )
            write_image(seg, root / f"{case_id}-seg.png")
            entry["seg_map"] = f"{case_id}-seg.png"
        return entry

    def test_empty_manifest(self, tmp_path):
        manifest = tmp_path / "cases.json"
        manifest.write_text("[]")
        summary = run_batch(manifest, tmp_path / "out")
        assert summary == BatchSummary(positive=0, negative=0, errors=[])

    def test_gate_arithmetic(self, tmp_path):
        entries = [
            self.write_case_files(tmp_path, "a", 0.2),
            self.write_case_files(tmp_path, "b", 0.6, seg_value=0.5),
            self.write_case_files(tmp_path, "c", 0.5, seg_value=0.5),
        ]
        manifest = tmp_path / "cases.json"
        manifest.write_text(json.dumps(entries))
        summary = run_batch(manifest, tmp_path / "out")
        assert summary.positive == 2
        assert summary.negative == 1
        assert summary.errors == []

    def test_outputs_exist_iff_positive(self, tmp_path):
        entries = [
            self.write_case_files(tmp_path, "neg", 0.4),
            self.write_case_files(tmp_path, "pos", 0.9, seg_value=0.3),
        ]
        manifest = tmp_path / "cases.json"
        manifest.write_text(json.dumps(entries))
        out = tmp_path / "out"
        run_batch(manifest, out)
        assert (out / "neg" / "result.json").exists()
        assert not (out / "neg" / "mask.png").exists()
        assert not (out / "neg" / "overlay.png").exists()
        assert (out / "pos" / "mask.png").exists()
        assert (out / "pos" / "overlay.png").exists()
        neg = json.loads((out / "neg" / "result.json").read_text())
        assert neg == {"id": "neg", "score": 0.4, "decision": False}

    def test_failures_do_not_stop_the_batch(self, tmp_path):
        entries = [
            self.write_case_files(tmp_path, "ok", 0.2),
            {"id": "broken", "rgb": "missing.png", "score": 0.8},
            self.write_case_files(tmp_path, "late", 0.7, seg_value=0.9),
        ]
        manifest = tmp_path / "cases.json"
        manifest.write_text(json.dumps(entries))
        out = tmp_path / "out"
        summary = run_batch(manifest, out)
        assert summary.positive == 1
        assert summary.negative == 1
        assert len(summary.errors) == 1
        assert summary.errors[0].case_id == "broken"
        assert (out / "late" / "overlay.png").exists()
        written = json.loads((out / "summary.json").read_text())
        assert written["positive"] == 1
        assert written["errors"][0]["id"] == "broken"

    def test_positive_case_with_missing_seg_errors(self, tmp_path):
        entries = [self.write_case_files(tmp_path, "gated", 0.8)]
        manifest = tmp_path / "cases.json"
        manifest.write_text(json.dumps(entries))
        summary = run_batch(manifest, tmp_path / "out")
        assert summary.positive == 0
        assert len(summary.errors) == 1
        assert "segmentation map" in summary.errors[0].message

    def test_bad_score_collected(self, tmp_path):
        entry = self.write_case_files(tmp_path, "odd", 0.0)
        entry["score"] = "high"
        manifest = tmp_path / "cases.json"
        manifest.write_text(json.dumps([entry]))
        summary = run_batch(manifest, tmp_path / "out")
        assert summary.errors and summary.errors[0].case_id == "odd"
