"""
src/layerpy/validate.py

画素配列やレイヤー列に関するバリデーション／ユーティリティ関数を提供するモジュール:
- グローバルな許容範囲定義
- RGB画像・アルファ・マスク・RGBAレイヤーの形状と値域のチェック
- バックエンド出力の契約チェック
- レイヤー列の警告収集
"""
import logging
from typing import Any, List, Optional, Tuple

import numpy as np

from ._errors import DimensionMismatchError, MalformedOutputError

logger = logging.getLogger(__name__)

# --- グローバル定義 ---
# この値未満のアルファでは unblend の色を 0 とする
EPS_ALPHA = 1.0 / 255.0
# [0,1] 範囲チェックの許容誤差（浮動小数の丸め分）
RANGE_TOLERANCE = 1e-6
# 内部表現の精度
PIXEL_DTYPE = np.float32


def _check_range(arr: np.ndarray, what: str) -> np.ndarray:
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{what} contains NaN or infinite samples.")
    lo, hi = float(arr.min()), float(arr.max())
    if lo < -RANGE_TOLERANCE or hi > 1.0 + RANGE_TOLERANCE:
        raise ValueError(f"{what} samples out of range [0, 1]: min={lo}, max={hi}.")
    return np.clip(arr, 0.0, 1.0)


def validate_rgb(image: Any, what: str = "image") -> np.ndarray:
    """
    H×W×3 の RGB 画像であることを検証し、float32 の配列として返す。
    """
    arr = np.asarray(image, dtype=PIXEL_DTYPE)
    if arr.ndim != 3 or arr.shape[2] != 3:
        raise ValueError(f"{what} must have shape (H, W, 3), got {arr.shape}.")
    if arr.shape[0] < 1 or arr.shape[1] < 1:
        raise ValueError(f"{what} must be at least 1x1, got {arr.shape[:2]}.")
    return _check_range(arr, what)


def validate_alpha(alpha: Any, shape: Optional[Tuple[int, int]] = None, what: str = "alpha") -> np.ndarray:
    """
    H×W のアルファ面であることを検証する。shape を渡すと寸法も照合する。
    """
    arr = np.asarray(alpha, dtype=PIXEL_DTYPE)
    if arr.ndim != 2:
        raise ValueError(f"{what} must have shape (H, W), got {arr.shape}.")
    if shape is not None and arr.shape != tuple(shape):
        raise DimensionMismatchError(f"{what} shape {arr.shape} does not match canvas {tuple(shape)}.")
    return _check_range(arr, what)


def validate_mask(mask: Any, shape: Tuple[int, int], what: str = "mask") -> np.ndarray:
    arr = np.asarray(mask)
    if arr.shape != tuple(shape):
        raise DimensionMismatchError(f"{what} shape {arr.shape} does not match canvas {tuple(shape)}.")
    return arr.astype(bool)


def validate_rgba(layer: Any, what: str = "layer") -> np.ndarray:
    arr = np.asarray(layer, dtype=PIXEL_DTYPE)
    if arr.ndim != 3 or arr.shape[2] != 4:
        raise ValueError(f"{what} must have shape (H, W, 4), got {arr.shape}.")
    if arr.shape[0] < 1 or arr.shape[1] < 1:
        raise ValueError(f"{what} must be at least 1x1, got {arr.shape[:2]}.")
    return _check_range(arr, what)


def check_same_size(a: np.ndarray, b: np.ndarray, what: str = "inputs") -> Tuple[int, int]:
    """
    2つの配列の H×W が一致するか確認し、(H, W) を返す。
    """
    if a.shape[:2] != b.shape[:2]:
        raise DimensionMismatchError(
            f"Dimension mismatch between {what}: {a.shape[:2]} vs {b.shape[:2]}."
        )
    return a.shape[0], a.shape[1]


def validate_sequence(seq: Any) -> List[str]:
    """
    レイヤー列の警告を収集する。背景レイヤーのアルファが 1 未満の画素があれば警告。
    例外は送出しない（構造の不正は LayerSequence 生成時に検出済み）。
    """
    warnings: List[str] = []
    background = seq.layers[0]
    below = int(np.count_nonzero(background[..., 3] < 1.0))
    if below:
        msg = f"background layer has alpha < 1 at {below} pixels; it is treated as opaque"
        logger.warning("[WARN] %s", msg)
        warnings.append(msg)
    return warnings


def check_matting_output(alpha: Any, shape: Tuple[int, int]) -> np.ndarray:
    """
    マッティング出力の契約チェック（寸法一致・[0,1]）。
    """
    arr = np.asarray(alpha)
    if arr.shape != tuple(shape):
        raise MalformedOutputError(f"matting output shape {arr.shape} does not match input {tuple(shape)}")
    try:
        return validate_alpha(arr, what="matting output")
    except ValueError as e:
        raise MalformedOutputError(str(e)) from e


def check_inpainting_output(completed: Any, image: np.ndarray, mask: np.ndarray) -> np.ndarray:
    """
    インペインティング出力の契約チェック。マスク外の画素が入力と完全一致することも確認する。
    """
    arr = np.asarray(completed)
    if arr.shape != image.shape:
        raise MalformedOutputError(f"inpainting output shape {arr.shape} does not match input {image.shape}")
    try:
        arr = validate_rgb(arr, what="inpainting output")
    except ValueError as e:
        raise MalformedOutputError(str(e)) from e
    if not np.array_equal(arr[~mask], image[~mask]):
        raise MalformedOutputError("inpainting output changed pixels outside the mask")
    return arr
