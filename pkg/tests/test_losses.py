"""Loss terms against analytic values and basic optimization properties."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nucleitk import (
    LossWeights,
    combine_terms,
    count_l2,
    dice_loss,
    dir_cross_entropy,
    encode_direction_map,
    seg_cross_entropy,
    total_loss,
)

LN7 = 1.9459101490553132    # -ln(1/7)
LN4 = 1.3862943611198906    # -ln(1/4)
CLAMP_CE = 27.631021115928547   # -ln(1e-12)


def one_hot(labels, channels):
    labels = np.asarray(labels)
    out = np.zeros(labels.shape + (channels,), dtype=np.float64)
    rows, cols = np.indices(labels.shape)
    out[rows, cols, labels] = 1.0
    return out


def dir_one_hot(dirs, channels):
    # sentinel pixels get an arbitrary valid distribution; they are excluded
    filled = np.where(dirs == 255, 0, dirs).astype(np.int64)
    return one_hot(filled, channels)


def test_seg_ce_one_hot_correct_is_zero():
    gt = np.array([[0, 3], [6, 1]], dtype=np.uint8)
    assert seg_cross_entropy(one_hot(gt, 7), gt) <= 1e-12


def test_seg_ce_uniform_is_ln7():
    gt = np.array([[0, 3], [6, 1]], dtype=np.uint8)
    pred = np.full((2, 2, 7), 1.0 / 7.0)
    assert abs(seg_cross_entropy(pred, gt) - LN7) < 1e-9
    assert abs(seg_cross_entropy(pred, gt) - math.log(7)) < 1e-9


def test_seg_ce_clamps_zero_probability():
    gt = np.array([[2]], dtype=np.uint8)
    pred = one_hot(np.array([[5]]), 7)   # confidently wrong
    assert seg_cross_entropy(pred, gt) == CLAMP_CE


def test_seg_ce_mixed_hand_value():
    gt = np.array([[1, 1]], dtype=np.uint8)
    pred = np.zeros((1, 2, 7))
    pred[0, 0, 1] = math.exp(-1.0)
    pred[0, 0, 0] = 1.0 - math.exp(-1.0)
    pred[0, 1, 1] = math.exp(-2.0)
    pred[0, 1, 0] = 1.0 - math.exp(-2.0)
    assert seg_cross_entropy(pred, gt) == pytest.approx(1.5, abs=1e-12)


def test_seg_ce_rejects_unnormalized():
    gt = np.zeros((2, 2), dtype=np.uint8)
    bad = np.full((2, 2, 7), 0.2)
    with pytest.raises(ValueError, match="normalized"):
        seg_cross_entropy(bad, gt)
    with pytest.raises(ValueError, match="shape mismatch"):
        seg_cross_entropy(one_hot(gt, 7), np.zeros((3, 3), np.uint8))
    with pytest.raises(ValueError, match="7 channels"):
        seg_cross_entropy(np.ones((2, 2, 1)), gt)


def test_dir_ce_foreground_only():
    gt = np.array([[255, 1], [255, 255]], dtype=np.uint8)
    pred = np.full((2, 2, 4), 0.25)
    assert abs(dir_cross_entropy(pred, gt) - LN4) < 1e-9
    # background predictions are irrelevant
    pred2 = pred.copy()
    pred2[0, 0] = (1.0, 0.0, 0.0, 0.0)
    assert dir_cross_entropy(pred2, gt) == dir_cross_entropy(pred, gt)


def test_dir_ce_all_background_is_zero():
    gt = np.full((3, 3), 255, dtype=np.uint8)
    pred = np.full((3, 3, 4), 0.25)
    assert dir_cross_entropy(pred, gt) == 0.0


def test_dir_ce_correct_one_hot_is_zero():
    inst = np.ones((3, 3), dtype=np.uint16)
    dirs = encode_direction_map(inst)
    assert dir_cross_entropy(dir_one_hot(dirs, 4), dirs) <= 1e-12


def test_dir_ce_respects_channel_count():
    gt = np.array([[7]], dtype=np.uint8)   # class 7 needs N >= 8
    with pytest.raises(ValueError, match="out of range"):
        dir_cross_entropy(np.full((1, 1, 4), 0.25), gt)
    assert dir_cross_entropy(np.full((1, 1, 8), 0.125), gt) == \
        pytest.approx(math.log(8), abs=1e-9)


def test_dice_one_hot_correct_near_zero():
    gt = np.array([[1, 2], [0, 2]], dtype=np.uint8)
    assert dice_loss(one_hot(gt, 7), gt) < 1e-5


def test_dice_total_miss_near_one():
    gt = np.array([[4, 4]], dtype=np.uint8)
    pred = one_hot(np.array([[0, 0]]), 7)
    assert dice_loss(pred, gt) == pytest.approx(1.0, abs=1e-5)


def test_dice_half_overlap_hand_value():
    gt = np.array([[1, 1]], dtype=np.uint8)
    pred = np.zeros((1, 2, 7))
    pred[0, 0, 1] = 1.0
    pred[0, 1, 0] = 1.0
    value = dice_loss(pred, gt)
    eps = 1e-6
    assert value == pytest.approx(1.0 - (2.0 + eps) / (3.0 + eps), abs=1e-12)
    assert value == pytest.approx(1.0 / 3.0, abs=1e-6)


def test_dice_ignores_absent_classes():
    gt = np.array([[2, 2], [0, 0]], dtype=np.uint8)
    pred = one_hot(gt, 7).astype(np.float64)
    base = dice_loss(pred, gt)
    noisy = pred.copy()
    noisy[:, :, 5] += 0.7     # class 5 absent from gt: must not matter
    assert dice_loss(noisy, gt) == base


def test_dice_empty_foreground_is_zero():
    gt = np.zeros((2, 2), dtype=np.uint8)
    assert dice_loss(one_hot(gt, 7), gt) == 0.0


def test_dice_permutation_invariant():
    rng = np.random.default_rng(3)
    gt = rng.integers(0, 7, size=(4, 5)).astype(np.uint8)
    pred = rng.random((4, 5, 7))
    order = rng.permutation(20)
    gt_flat = gt.reshape(-1)[order].reshape(4, 5)
    pred_flat = pred.reshape(-1, 7)[order].reshape(4, 5, 7)
    assert dice_loss(pred, gt) == pytest.approx(dice_loss(pred_flat, gt_flat),
                                                abs=1e-12)


def test_count_l2_hand_values():
    gt = np.array([0, 6, 0, 0, 0, 0], dtype=np.float64)
    assert count_l2(gt, gt) == 0.0
    assert count_l2(gt + 1, gt) == 1.0
    assert count_l2(np.zeros(6), gt) == 6.0


def test_combine_terms_default_weights_hand_value():
    breakdown = combine_terms(1.0, 0.5, 1.0, 100.0)
    assert breakdown.total == 5.5
    assert breakdown.weights == LossWeights(1.0, 4.0, 2.0, 0.005)
    zero = combine_terms(3.0, 2.0, 9.0, 50.0, LossWeights(0, 0, 0, 0))
    assert zero.total == 0.0
    with pytest.raises(ValueError, match="finite"):
        combine_terms(math.nan, 0, 0, 0)


def test_combine_terms_linear_in_each_term():
    base = combine_terms(1.0, 1.0, 1.0, 1.0)
    bumped = combine_terms(1.0, 1.0 + 0.25, 1.0, 1.0)
    assert bumped.total - base.total == pytest.approx(4.0 * 0.25, abs=1e-12)


def test_loss_weights_validation():
    with pytest.raises(ValueError):
        LossWeights(w_ce=-0.1)
    with pytest.raises(ValueError):
        LossWeights(w_l2=math.inf)


def test_total_loss_perfect_inputs_near_zero():
    inst = np.zeros((6, 6), dtype=np.uint16)
    inst[1:4, 1:4] = 1
    classes = np.where(inst > 0, 2, 0).astype(np.uint8)
    dirs = encode_direction_map(inst)
    counts = np.array([0, 1, 0, 0, 0, 0], dtype=np.float64)
    breakdown = total_loss(one_hot(classes, 7), classes, dir_one_hot(dirs, 4),
                           dirs, counts, counts)
    assert breakdown.ce <= 1e-12
    assert breakdown.dir_ce <= 1e-12
    assert breakdown.l2 == 0.0
    assert breakdown.total < 1e-4     # dice epsilon effects only


def test_total_loss_matches_components():
    rng = np.random.default_rng(8)
    classes = rng.integers(0, 7, size=(5, 5)).astype(np.uint8)
    inst = (classes > 0).astype(np.uint16)
    dirs = encode_direction_map(inst)
    seg_pred = rng.random((5, 5, 7))
    seg_pred /= seg_pred.sum(axis=2, keepdims=True)
    dir_pred = rng.random((5, 5, 4))
    dir_pred /= dir_pred.sum(axis=2, keepdims=True)
    pc = rng.random(6) * 5
    gc = rng.random(6) * 5
    weights = LossWeights(0.7, 1.1, 3.0, 0.25)
    breakdown = total_loss(seg_pred, classes, dir_pred, dirs, pc, gc, weights)
    assert breakdown.ce == seg_cross_entropy(seg_pred, classes)
    assert breakdown.dice == dice_loss(seg_pred, classes)
    assert breakdown.dir_ce == dir_cross_entropy(dir_pred, dirs)
    assert breakdown.l2 == count_l2(pc, gc)
    assert breakdown.total == (0.7 * breakdown.ce + 1.1 * breakdown.dice
                               + 3.0 * breakdown.dir_ce + 0.25 * breakdown.l2)
    data = breakdown.to_json_dict()
    assert data["weights"] == {"ce": 0.7, "dice": 1.1, "dir_ce": 3.0, "l2": 0.25}


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2 ** 32 - 1))
def test_one_hot_ground_truth_minimizes_cross_entropy(seed):
    rng = np.random.default_rng(seed)
    gt = rng.integers(0, 7, size=(3, 3)).astype(np.uint8)
    pred = rng.random((3, 3, 7)) + 1e-3
    pred /= pred.sum(axis=2, keepdims=True)
    assert seg_cross_entropy(pred, gt) >= seg_cross_entropy(one_hot(gt, 7), gt)


def test_lowering_correct_probability_raises_ce():
    gt = np.array([[3]], dtype=np.uint8)
    good = np.full((1, 1, 7), 0.1)
    good[0, 0, 3] = 0.4
    worse = np.full((1, 1, 7), 0.11666666666666667)
    worse[0, 0, 3] = 0.3
    assert seg_cross_entropy(worse, gt) > seg_cross_entropy(good, gt)


def test_terms_nonnegative_on_random_inputs():
    rng = np.random.default_rng(17)
    for _ in range(10):
        gt = rng.integers(0, 7, size=(4, 4)).astype(np.uint8)
        pred = rng.random((4, 4, 7))
        pred /= pred.sum(axis=2, keepdims=True)
        assert seg_cross_entropy(pred, gt) >= 0.0
        assert 0.0 <= dice_loss(pred, gt) <= 1.0 + 1e-5
