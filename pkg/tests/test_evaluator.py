from fractions import Fraction

import numpy as np
import pytest

from cadelta.errors import DimensionMismatch, EmptyBatch, LabelOutOfTable
from cadelta.evaluator import (
    REFERENCE_MODEL_IOU,
    evaluate,
    evaluate_batch,
    format_report_table,
)
from cadelta.geo import ClassMask


def _mask(arr, table=(0, 1)):
    return ClassMask.from_array(np.asarray(arr, dtype=np.uint8), class_table=table)


def _worked_pair():
    gt = np.zeros((4, 4), dtype=np.uint8)
    gt[0:2, 0:2] = 1  # house at rows 0-1, cols 0-1
    pred = np.zeros((4, 4), dtype=np.uint8)
    pred[1:3, 1:3] = 1
    return _mask(gt), _mask(pred)


def test_identity_scores_one():
    rng = np.random.default_rng(2)
    arr = rng.integers(0, 3, size=(9, 7), dtype=np.uint8)
    r = evaluate(_mask(arr, (0, 1, 2)), _mask(arr, (0, 1, 2)))
    assert r.micro_iou == 1.0
    assert r.macro_iou == 1.0
    assert r.pixel_accuracy == 1.0
    for s in r.per_class.values():
        assert s.iou in (None, 1.0)


def test_worked_four_by_four():
    gt, pred = _worked_pair()
    r = evaluate(gt, pred)
    assert r.per_class[1].intersection == 1
    assert r.per_class[1].union == 7
    assert r.per_class[1].iou == pytest.approx(1 / 7)
    assert r.per_class[0].intersection == 9
    assert r.per_class[0].union == 15
    assert r.per_class[0].iou == pytest.approx(3 / 5)
    assert r.micro_iou == pytest.approx(10 / 22)
    assert r.macro_iou == pytest.approx(13 / 35)
    assert r.n_pixels == 16
    assert sum(r.confusion.values()) == 16


def test_two_class_reduction_matches_printed_formulas():
    # micro = (I_house + I_bg)/(U_house + U_bg); macro = (IoU_house + IoU_bg)/2
    rng = np.random.default_rng(10)
    for _ in range(50):
        gt = rng.integers(0, 2, size=(8, 8), dtype=np.uint8)
        pred = rng.integers(0, 2, size=(8, 8), dtype=np.uint8)
        r = evaluate(_mask(gt), _mask(pred))
        i_h = int(((gt == 1) & (pred == 1)).sum())
        u_h = int(((gt == 1) | (pred == 1)).sum())
        i_b = int(((gt == 0) & (pred == 0)).sum())
        u_b = int(((gt == 0) | (pred == 0)).sum())
        assert r.micro_iou == (i_h + i_b) / (u_h + u_b)
        if u_h and u_b:
            assert r.macro_iou == (i_h / u_h + i_b / u_b) / 2


def test_degenerate_all_background():
    z = np.zeros((4, 4), dtype=np.uint8)
    r = evaluate(_mask(z), _mask(z), class_table=(0, 1))
    assert r.per_class[0].iou == 1.0
    assert r.per_class[1].iou is None  # absent
    assert r.micro_iou == 1.0
    assert r.macro_iou == 1.0


def test_symmetry():
    rng = np.random.default_rng(4)
    gt = rng.integers(0, 4, size=(12, 12), dtype=np.uint8)
    pred = rng.integers(0, 4, size=(12, 12), dtype=np.uint8)
    table = (0, 1, 2, 3)
    a = evaluate(_mask(gt, table), _mask(pred, table))
    b = evaluate(_mask(pred, table), _mask(gt, table))
    assert a.micro_iou == b.micro_iou
    assert a.macro_iou == b.macro_iou
    for cid in table:
        assert a.per_class[cid].iou == b.per_class[cid].iou
    for (g, p), n in a.confusion.items():
        assert b.confusion[(p, g)] == n


def test_brute_force_oracle_exact():
    # independent oracle: count pixels with Fractions, no numpy reductions
    rng = np.random.default_rng(6)
    for _ in range(40):
        h = int(rng.integers(1, 20))
        w = int(rng.integers(1, 20))
        k = int(rng.integers(2, 5))
        table = tuple(range(k))
        gt = rng.integers(0, k, size=(h, w), dtype=np.uint8)
        pred = rng.integers(0, k, size=(h, w), dtype=np.uint8)
        r = evaluate(_mask(gt, table), _mask(pred, table))
        sum_i = 0
        sum_u = 0
        ious = []
        for cid in table:
            inter = 0
            union = 0
            for y in range(h):
                for x in range(w):
                    a = gt[y, x] == cid
                    b = pred[y, x] == cid
                    inter += int(a and b)
                    union += int(a or b)
            assert r.per_class[cid].intersection == inter
            assert r.per_class[cid].union == union
            sum_i += inter
            sum_u += union
            if union:
                ious.append(Fraction(inter, union))
        assert abs(r.micro_iou - Fraction(sum_i, sum_u)) < 1e-12
        assert abs(r.macro_iou - sum(ious) / len(ious)) < 1e-12


def test_dimension_and_label_errors():
    with pytest.raises(DimensionMismatch):
        evaluate(_mask(np.zeros((2, 2))), _mask(np.zeros((2, 3))))
    with pytest.raises(LabelOutOfTable):
        evaluate(_mask(np.zeros((2, 2))), _mask(np.ones((2, 2))), class_table=(0,))


def test_batch_means():
    gt, pred = _worked_pair()
    perfect = evaluate(gt, gt)
    assert perfect.micro_iou == 1.0
    batch = evaluate_batch([(gt, gt), (gt, pred)])
    assert batch.mean_micro == pytest.approx((1 + 10 / 22) / 2)
    assert batch.mean_micro == pytest.approx(16 / 22)
    assert batch.mean_macro == pytest.approx((1 + 13 / 35) / 2)
    assert len(batch.reports) == 2


def test_batch_of_one_and_empty():
    gt, pred = _worked_pair()
    b = evaluate_batch([(gt, pred)])
    assert b.mean_micro == b.reports[0].micro_iou
    assert b.mean_macro == b.reports[0].macro_iou
    with pytest.raises(EmptyBatch):
        evaluate_batch([])


def test_batch_pooled_variant_labeled():
    gt, pred = _worked_pair()
    b = evaluate_batch([(gt, gt), (gt, pred)])
    d = b.to_dict()
    assert "pooled_micro" in d and "mean_micro" in d
    # pooled pools pixels: (16+10) / (16+22)
    assert b.pooled_micro == pytest.approx(26 / 38)


def test_report_table_six_decimals():
    gt, pred = _worked_pair()
    table = format_report_table(evaluate(gt, pred))
    assert "0.454545" in table
    assert "0.371429" in table


def test_reference_metadata_is_metadata_only():
    # sanity: the stored reference numbers stay exactly as documented
    assert REFERENCE_MODEL_IOU["historical_buildings"]["micro"] == 0.990389
    assert REFERENCE_MODEL_IOU["historical_buildings"]["macro"] == 0.89516
    assert REFERENCE_MODEL_IOU["present_buildings"]["macro"] == 0.537755
    assert REFERENCE_MODEL_IOU["present_buildings"]["micro"] == 0.795838
