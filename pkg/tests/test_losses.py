"""
tests/test_losses.py
pytest を使って、アルファ推定用の損失関数 (BCE / IoU / SSIM) を検証します。
"""
import math

import numpy as np
import pytest

from src.layerpy._type import LossConfig
from src.layerpy.losses import gaussian_window, loss_bce, loss_iou, loss_ssim, loss_total, ssim_index


def naive_ssim(pred, gt, size=11, sigma=1.5, c1=0.01 ** 2, c2=0.03 ** 2):
    """パッチごとにループで計算する比較用実装（入力は float32 に丸めてから使う）"""
    pred = np.asarray(pred, dtype=np.float32).astype(np.float64)
    gt = np.asarray(gt, dtype=np.float32).astype(np.float64)
    window = gaussian_window(size, sigma)
    values = []
    for y in range(pred.shape[0] - size + 1):
        for x in range(pred.shape[1] - size + 1):
            p = pred[y:y + size, x:x + size]
            g = gt[y:y + size, x:x + size]
            mp, mg = (window * p).sum(), (window * g).sum()
            vp = (window * p * p).sum() - mp ** 2
            vg = (window * g * g).sum() - mg ** 2
            cov = (window * p * g).sum() - mp * mg
            values.append(((2 * mp * mg + c1) * (2 * cov + c2)) / ((mp ** 2 + mg ** 2 + c1) * (vp + vg + c2)))
    return float(np.mean(values))

# --- BCE / IoU ---

def test_bce_of_half_prediction_is_ln2():
    pred = np.full((4, 4), 0.5)
    gt = np.random.default_rng(0).integers(0, 2, size=(4, 4)).astype(np.float64)
    assert loss_bce(pred, gt) == pytest.approx(math.log(2.0))


def test_bce_clamps_confident_mistakes():
    value = loss_bce(np.zeros((2, 2)), np.ones((2, 2)))
    assert math.isfinite(value)
    assert value == pytest.approx(-math.log(1e-7), rel=1e-6)


def test_iou_half_overlap():
    pred = np.zeros((4, 4))
    pred[:2] = 1.0
    assert loss_iou(pred, np.ones((4, 4))) == pytest.approx(0.5)


def test_iou_both_empty_is_zero():
    assert loss_iou(np.zeros((3, 3)), np.zeros((3, 3))) == 0.0


def test_shape_mismatch_is_rejected():
    with pytest.raises(ValueError):
        loss_iou(np.zeros((3, 3)), np.zeros((4, 4)))

# --- SSIM ---

def test_gaussian_window_sums_to_one():
    assert gaussian_window(11, 1.5).sum() == pytest.approx(1.0)


def test_ssim_matches_patch_loop():
    rng = np.random.default_rng(1)
    pred = rng.random((16, 14))
    gt = rng.random((16, 14))
    assert ssim_index(pred, gt) == pytest.approx(naive_ssim(pred, gt), abs=1e-9)


def test_ssim_loss_of_identical_images_is_zero():
    gt = np.random.default_rng(2).random((20, 20))
    assert loss_ssim(gt, gt) == pytest.approx(0.0, abs=1e-9)


def test_ssim_window_shrinks_for_small_images():
    rng = np.random.default_rng(3)
    pred, gt = rng.random((6, 8)), rng.random((6, 8))
    assert ssim_index(pred, gt) == pytest.approx(naive_ssim(pred, gt, size=5), abs=1e-9)


def test_ssim_loss_is_bounded():
    pred = np.zeros((12, 12))
    pred[::2] = 1.0
    assert 0.0 <= loss_ssim(pred, 1.0 - pred) <= 1.0

# --- loss_total ---

def test_total_is_weighted_sum():
    rng = np.random.default_rng(4)
    pred, gt = rng.random((12, 12)), rng.random((12, 12))
    config = LossConfig(bce_weight=2.0, iou_weight=0.5, ssim_weight=1.0)
    expected = 2.0 * loss_bce(pred, gt, config) + 0.5 * loss_iou(pred, gt, config) + loss_ssim(pred, gt, config)
    assert loss_total(pred, gt, config) == pytest.approx(expected)


def test_total_ssim_only_schedule():
    rng = np.random.default_rng(5)
    pred, gt = rng.random((12, 12)), rng.random((12, 12))
    config = LossConfig(ssim_only=True, ssim_weight=0.5)
    assert loss_total(pred, gt, config) == pytest.approx(0.5 * loss_ssim(pred, gt, config))
