"""
src/layerpy/losses.py
アルファ推定の学習用損失関数（予測・正解とも [0,1] のアルファ面、二値化はしない）:
- loss_bce: 2値交差エントロピー（予測を [eps, 1-eps] にクランプ）
- loss_iou: 1 - Σpg / Σ(p + g - pg)
- loss_ssim: 1 - 平均 SSIM（ガウス窓、画像内に収まるパッチのみ）
- loss_total: 重み付き和。ssim_only のときは SSIM 項のみ
"""
from typing import Optional

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from ._type import LossConfig
from .validate import validate_alpha


def _pair(pred: np.ndarray, gt: np.ndarray):
    gt = validate_alpha(gt, what="target alpha").astype(np.float64)
    pred = validate_alpha(pred, shape=gt.shape, what="predicted alpha").astype(np.float64)
    return pred, gt


def loss_bce(pred: np.ndarray, gt: np.ndarray, config: Optional[LossConfig] = None) -> float:
    config = config or LossConfig()
    pred, gt = _pair(pred, gt)
    p = np.clip(pred, config.bce_eps, 1.0 - config.bce_eps)
    return float(-np.mean(gt * np.log(p) + (1.0 - gt) * np.log(1.0 - p)))


def loss_iou(pred: np.ndarray, gt: np.ndarray, config: Optional[LossConfig] = None) -> float:
    pred, gt = _pair(pred, gt)
    inter = np.sum(pred * gt)
    union = np.sum(pred + gt - pred * gt)
    if union == 0:
        return 0.0
    return float(1.0 - inter / union)


def gaussian_window(size: int, sigma: float) -> np.ndarray:
    """和が 1 の size×size ガウス窓"""
    coords = np.arange(size, dtype=np.float64) - (size - 1) / 2.0
    g = np.exp(-(coords ** 2) / (2.0 * sigma ** 2))
    g /= g.sum()
    return np.outer(g, g)


def ssim_index(pred: np.ndarray, gt: np.ndarray, config: Optional[LossConfig] = None) -> float:
    """
    画像内に完全に収まる全パッチの SSIM の平均。
    画像が窓より小さい場合は min(H, W) 以下の最大の奇数に窓を縮める。
    """
    config = config or LossConfig()
    pred, gt = _pair(pred, gt)
    size = min(config.ssim_window, *pred.shape)
    if size % 2 == 0:
        size -= 1
    window = gaussian_window(size, config.ssim_sigma)

    def local_mean(x: np.ndarray) -> np.ndarray:
        return np.einsum("ijkl,kl->ij", sliding_window_view(x, (size, size)), window)

    mu_p, mu_g = local_mean(pred), local_mean(gt)
    var_p = local_mean(pred * pred) - mu_p ** 2
    var_g = local_mean(gt * gt) - mu_g ** 2
    cov = local_mean(pred * gt) - mu_p * mu_g
    c1, c2 = config.c1, config.c2
    ssim_map = ((2 * mu_p * mu_g + c1) * (2 * cov + c2)) / ((mu_p ** 2 + mu_g ** 2 + c1) * (var_p + var_g + c2))
    return float(np.mean(ssim_map))


def loss_ssim(pred: np.ndarray, gt: np.ndarray, config: Optional[LossConfig] = None) -> float:
    # 逆相関のパッチでは SSIM が負になるため [0,1] に収める
    return float(np.clip(1.0 - ssim_index(pred, gt, config), 0.0, 1.0))


def loss_total(pred: np.ndarray, gt: np.ndarray, config: Optional[LossConfig] = None) -> float:
    config = config or LossConfig()
    if config.ssim_only:
        return config.ssim_weight * loss_ssim(pred, gt, config)
    return (
        config.bce_weight * loss_bce(pred, gt, config)
        + config.iou_weight * loss_iou(pred, gt, config)
        + config.ssim_weight * loss_ssim(pred, gt, config)
    )
