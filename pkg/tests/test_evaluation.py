from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from fundusprep.errors import DimensionMismatchError, EmptyCorpusError
from fundusprep.evaluation import (
    DEFAULT_THRESHOLDS,
    ConfusionCounts,
    MetricsRow,
    confusion,
    metrics_from_counts,
    render_report,
    sweep,
)
from fundusprep.raster import BinaryMask, ProbabilityMap

from oracles import naive_confusion, naive_metrics


def mask(rows) -> BinaryMask:
    return BinaryMask(np.asarray(rows, dtype=bool))


class TestConfusion:
    def test_equal_masks_have_no_errors(self):
        m = mask([[1, 0], [0, 1]])
        c = confusion(m, m)
        assert (c.fp, c.fn) == (0, 0)
        assert c.tp == 2
        assert c.tn == 2

    def test_hand_counted_two_by_two(self):
        truth = mask([[1, 0], [0, 1]])
        pred = mask([[1, 1], [0, 0]])
        c = confusion(pred, truth)
        assert (c.tp, c.fp, c.fn, c.tn) == (1, 1, 1, 1)

    def test_all_false_pred_against_all_true_truth(self):
        pred = BinaryMask(np.zeros((4, 4), dtype=bool))
        truth = BinaryMask(np.ones((4, 4), dtype=bool))
        c = confusion(pred, truth)
        assert (c.tp, c.fn, c.fp, c.tn) == (0, 16, 0, 0)

    def test_dimension_mismatch(self):
        with pytest.raises(DimensionMismatchError):
            confusion(BinaryMask(np.zeros((2, 2), dtype=bool)), BinaryMask(np.zeros((3, 3), dtype=bool)))

    def test_swapping_arguments_swaps_fp_fn(self):
        rng = np.random.default_rng(0)
        a = BinaryMask(rng.random((8, 8)) > 0.5)
        b = BinaryMask(rng.random((8, 8)) > 0.5)
        ab = confusion(a, b)
        ba = confusion(b, a)
        assert (ab.tp, ab.tn) == (ba.tp, ba.tn)
        assert (ab.fp, ab.fn) == (ba.fn, ba.fp)


class TestMetrics:
    def test_balanced_counts(self):
        m = metrics_from_counts(ConfusionCounts(1, 1, 1, 1))
        assert m.sensitivity == 0.5
        assert m.specificity == 0.5
        assert m.accuracy == 0.5
        assert m.dice == pytest.approx(2 * 1 / (2 + 1 + 1))

    def test_empty_mask_conventions(self):
        m = metrics_from_counts(ConfusionCounts(0, 0, 100, 0))
        assert m.sensitivity is None
        assert m.specificity == 1.0
        assert m.accuracy == 1.0
        assert m.dice == 1.0
        assert m.dice_both_empty

    def test_zero_total_rejected(self):
        with pytest.raises(ValueError):
            metrics_from_counts(ConfusionCounts(0, 0, 0, 0))

    def test_negative_count_rejected(self):
        with pytest.raises(ValueError):
            ConfusionCounts(-1, 0, 0, 0)

    def test_published_row_shape(self):
        # counts chosen to hit sens 69.06% and spec 96.94% with the
        # prevalence that makes the dice formula produce 69.71%
        n = 10_000_000
        p = 0.0952280
        tp = round(0.6906 * p * n)
        fn = round((1 - 0.6906) * p * n)
        tn = round(0.9694 * (1 - p) * n)
        fp = round((1 - 0.9694) * (1 - p) * n)
        m = metrics_from_counts(ConfusionCounts(tp, fp, tn, fn))
        assert m.sensitivity * 100 == pytest.approx(69.06, abs=0.01)
        assert m.specificity * 100 == pytest.approx(96.94, abs=0.01)
        assert m.dice * 100 == pytest.approx(69.71, abs=0.01)

    @settings(max_examples=100, deadline=None)
    @given(
        tp=st.integers(0, 500),
        fp=st.integers(0, 500),
        tn=st.integers(0, 500),
        fn=st.integers(0, 500),
    )
    def test_matches_naive_formulas(self, tp, fp, tn, fn):
        if tp + fp + tn + fn == 0:
            return
        m = metrics_from_counts(ConfusionCounts(tp, fp, tn, fn))
        sens, spec, acc, dice = naive_metrics(tp, fp, tn, fn)
        assert m.sensitivity == sens
        assert m.specificity == spec
        assert m.accuracy == acc
        assert m.dice == dice
        for v in (m.sensitivity, m.specificity, m.accuracy, m.dice):
            if v is not None:
                assert 0.0 <= v <= 1.0

    def test_dice_harmonic_consistency(self):
        rng = np.random.default_rng(5)
        for _ in range(50):
            tp, fp, tn, fn = (int(v) for v in rng.integers(1, 400, size=4))
            m = metrics_from_counts(ConfusionCounts(tp, fp, tn, fn))
            precision = tp / (tp + fp)
            recall = m.sensitivity
            assert m.dice == pytest.approx(
                2 * precision * recall / (precision + recall), abs=1e-12
            )


class TestSweep:
    def test_perfect_prediction(self):
        vals = np.zeros((4, 4))
        vals[1:3, 1:3] = 1.0
        truth = BinaryMask(vals == 1.0)
        rows = sweep([("m", ProbabilityMap(vals))], [truth], thresholds=(0.2, 0.9))
        for row in rows:
            assert row.sensitivity == 1.0
            assert row.specificity == 1.0
            assert row.accuracy == 1.0
            assert row.dice == 1.0

    def test_constant_map_step_behavior(self):
        vals = np.full((4, 4), 0.07)
        truth = BinaryMask(np.zeros((4, 4), dtype=bool) | (np.arange(4)[:, None] < 2))
        rows = sweep([("m", ProbabilityMap(vals))], [truth])
        by_thr = {row.threshold: row for row in rows}
        for thr in (0.01, 0.05):
            assert by_thr[thr].counts.tp + by_thr[thr].counts.fp == 16
        for thr in (0.1, 0.5):
            assert by_thr[thr].counts.tn + by_thr[thr].counts.fn == 16

    def test_matches_naive_recount(self):
        rng = np.random.default_rng(11)
        vals = rng.random((16, 16))
        truth_bits = rng.random((16, 16)) > 0.6
        rows = sweep(
            [("m", ProbabilityMap(vals))], [BinaryMask(truth_bits)], thresholds=DEFAULT_THRESHOLDS
        )
        for row in rows:
            pred = vals >= row.threshold
            tp, fp, tn, fn = naive_confusion(pred.tolist(), truth_bits.tolist())
            assert (row.counts.tp, row.counts.fp, row.counts.tn, row.counts.fn) == (tp, fp, tn, fn)

    def test_micro_pooling_sums_per_image_counts(self):
        rng = np.random.default_rng(12)
        maps = [ProbabilityMap(rng.random((8, 8))) for _ in range(3)]
        truths = [BinaryMask(rng.random((8, 8)) > 0.5) for _ in range(3)]
        rows = sweep([("m", p) for p in maps], truths, thresholds=(0.3,))
        total = rows[0].counts
        assert total.total == 3 * 64

    def test_model_grouping_and_order(self):
        rng = np.random.default_rng(13)
        pm = lambda: ProbabilityMap(rng.random((4, 4)))
        truth = BinaryMask(rng.random((4, 4)) > 0.5)
        rows = sweep(
            [("zebra", pm()), ("alpha", pm())],
            [truth, truth],
            thresholds=(0.5, 0.1),
        )
        assert [r.model for r in rows] == ["zebra", "zebra", "alpha", "alpha"]
        assert [r.threshold for r in rows] == [0.1, 0.5, 0.1, 0.5]

    def test_empty_corpus(self):
        with pytest.raises(EmptyCorpusError):
            sweep([], [])

    def test_threshold_monotonicity(self):
        rng = np.random.default_rng(14)
        maps = [ProbabilityMap(rng.random((16, 16))) for _ in range(4)]
        truths = [BinaryMask(rng.random((16, 16)) > 0.5) for _ in range(4)]
        rows = sweep([("m", p) for p in maps], truths)
        sens = [r.sensitivity for r in rows]
        spec = [r.specificity for r in rows]
        assert sens == sorted(sens, reverse=True)
        assert spec == sorted(spec)

    def test_macro_average_differs_and_flags_empty(self):
        vals_a = np.zeros((4, 4))
        truth_a = BinaryMask(np.zeros((4, 4), dtype=bool))  # both empty at high thr
        vals_b = np.ones((4, 4))
        truth_b = BinaryMask(np.ones((4, 4), dtype=bool))
        rows = sweep(
            [("m", ProbabilityMap(vals_a)), ("m", ProbabilityMap(vals_b))],
            [truth_a, truth_b],
            thresholds=(0.5,),
            aggregate="macro",
        )
        assert rows[0].dice == 1.0
        assert rows[0].dice_both_empty


class TestRender:
    def row(self, model="m", thr=0.5, tp=1, fp=1, tn=1, fn=1):
        return MetricsRow.from_counts(model, thr, ConfusionCounts(tp, fp, tn, fn))

    def test_markdown_fifty_percent_row(self):
        text = render_report([self.row()], format="markdown")
        assert "| m | 0.5 | 50.00 | 50.00 | 50.00 | 50.00 |" in text

    def test_csv_fractions(self):
        text = render_report([self.row()], format="csv")
        lines = text.strip().splitlines()
        assert lines[0] == "model,threshold,tp,fp,tn,fn,sensitivity,specificity,accuracy,dice"
        assert lines[1] == "m,0.5,1,1,1,1,0.500000,0.500000,0.500000,0.500000"

    def test_undefined_rendering(self):
        row = MetricsRow.from_counts("m", 0.5, ConfusionCounts(0, 0, 4, 0))
        md = render_report([row], format="markdown")
        assert "| — |" in md
        csv = render_report([row], format="csv")
        assert ",,1.000000,1.000000" in csv  # empty sensitivity field

    def test_grouping_two_models_four_thresholds(self):
        rows = [
            self.row(model=m, thr=t)
            for m in ("b-net", "a-net")
            for t in (0.5, 0.01, 0.1, 0.05)
        ]
        text = render_report(rows, format="markdown")
        lines = text.strip().splitlines()[2:]
        assert len(lines) == 8
        # model label only on the first row of each block
        assert lines[0].startswith("| b-net | 0.01 |")
        assert lines[1].startswith("|  | 0.05 |")
        assert lines[4].startswith("| a-net | 0.01 |")

    def test_empty_rows_rejected(self):
        with pytest.raises(ValueError):
            render_report([], format="csv")

    def test_unknown_format_rejected(self):
        with pytest.raises(ValueError):
            render_report([self.row()], format="xml")


@settings(max_examples=50, deadline=None)
@given(
    vals=hnp.arrays(
        dtype=np.float64,
        shape=st.tuples(st.integers(2, 10), st.integers(2, 10)),
        elements=st.floats(0, 1),
    ),
    truth=st.data(),
)
def test_sweep_rows_match_naive_recount_property(vals, truth):
    bits = truth.draw(
        hnp.arrays(dtype=np.bool_, shape=vals.shape, elements=st.booleans())
    )
    rows = sweep([("m", ProbabilityMap(vals))], [BinaryMask(bits)], thresholds=(0.25, 0.75))
    for row in rows:
        tp, fp, tn, fn = naive_confusion((vals >= row.threshold).tolist(), bits.tolist())
        assert (row.counts.tp, row.counts.fp, row.counts.tn, row.counts.fn) == (tp, fp, tn, fn)
