"""
src/layerpy/color.py
sRGB と CIE L*a*b* (D65, 2°観測者) の相互変換を提供します:
- srgb_to_lab / lab_to_srgb: 任意形状 (..., 3) の配列に対するベクトル化変換
- delta_e: CIE76 色差
"""
from typing import Any, NamedTuple

import numpy as np

# D65 白色点 (Y=1 正規化)
WHITE_D65 = np.array([0.95047, 1.0, 1.08883])

_RGB_TO_XYZ = np.array([
    [0.4124564, 0.3575761, 0.1804375],
    [0.2126729, 0.7151522, 0.0721750],
    [0.0193339, 0.1191920, 0.9503041],
])
_XYZ_TO_RGB = np.linalg.inv(_RGB_TO_XYZ)

_DELTA = 6.0 / 29.0


class LabColor(NamedTuple):
    L: float
    a: float
    b: float


def _linearize(c: np.ndarray) -> np.ndarray:
    return np.where(c > 0.04045, ((c + 0.055) / 1.055) ** 2.4, c / 12.92)


def _gamma(c: np.ndarray) -> np.ndarray:
    c = np.clip(c, 0.0, None)
    return np.where(c > 0.0031308, 1.055 * np.power(c, 1.0 / 2.4) - 0.055, 12.92 * c)


def _f(t: np.ndarray) -> np.ndarray:
    return np.where(t > _DELTA ** 3, np.cbrt(t), t / (3 * _DELTA ** 2) + 4.0 / 29.0)


def _f_inv(t: np.ndarray) -> np.ndarray:
    return np.where(t > _DELTA, t ** 3, 3 * _DELTA ** 2 * (t - 4.0 / 29.0))


def srgb_to_lab(rgb: Any) -> np.ndarray:
    """
    [0,1] の sRGB を Lab に変換する。入力は (..., 3)、出力は float64 の (..., 3)。
    """
    rgb = np.asarray(rgb, dtype=np.float64)
    xyz = _linearize(rgb) @ _RGB_TO_XYZ.T
    f = _f(xyz / WHITE_D65)
    L = 116.0 * f[..., 1] - 16.0
    a = 500.0 * (f[..., 0] - f[..., 1])
    b = 200.0 * (f[..., 1] - f[..., 2])
    return np.stack([L, a, b], axis=-1)


def lab_to_srgb(lab: Any) -> np.ndarray:
    """
    Lab を sRGB に戻す。色域外は [0,1] にクリップする。
    """
    lab = np.asarray(lab, dtype=np.float64)
    fy = (lab[..., 0] + 16.0) / 116.0
    fx = fy + lab[..., 1] / 500.0
    fz = fy - lab[..., 2] / 200.0
    xyz = np.stack([_f_inv(fx), _f_inv(fy), _f_inv(fz)], axis=-1) * WHITE_D65
    rgb = _gamma(xyz @ _XYZ_TO_RGB.T)
    return np.clip(rgb, 0.0, 1.0)


def to_lab_color(rgb: Any) -> LabColor:
    """単色の sRGB 三つ組を LabColor にする"""
    L, a, b = srgb_to_lab(rgb).reshape(3)
    return LabColor(float(L), float(a), float(b))


def delta_e(lab1: Any, lab2: Any) -> np.ndarray:
    """CIE76 色差（ブロードキャスト可）"""
    diff = np.asarray(lab1, dtype=np.float64) - np.asarray(lab2, dtype=np.float64)
    return np.sqrt(np.sum(diff * diff, axis=-1))
