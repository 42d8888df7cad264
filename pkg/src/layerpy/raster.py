"""
src/layerpy/raster.py
レイヤー列のコンテナとアルファブレンド演算を提供します:
- LayerSequence: 背景 (z=0) から前面へ並んだ RGBA レイヤー列
- blend: 1枚のレイヤーを背景画像に合成
- composite: レイヤー列全体を合成
- unblend: 合成画像・背景・アルファから前景色を逆算
- merge_layers: 隣接する2レイヤーを1枚に統合 (Porter-Duff over)

画素は [0,1] の float32 で保持し、8bit への量子化はファイル入出力時のみ行う。
"""
from dataclasses import dataclass
from typing import Iterable, List, Sequence, Tuple

import numpy as np

from ._errors import DimensionMismatchError, EmptySequenceError
from .validate import EPS_ALPHA, PIXEL_DTYPE, check_same_size, validate_alpha, validate_rgb, validate_rgba


@dataclass(frozen=True)
class LayerSequence:
    """
    index が z 順（0 = 背景、末尾 = 最前面）のレイヤー列。
    canvas は (W, H)。
    """
    canvas: Tuple[int, int]
    layers: Tuple[np.ndarray, ...]

    def __post_init__(self):
        if not self.layers:
            raise EmptySequenceError("LayerSequence requires at least one layer.")
        width, height = self.canvas
        for z, layer in enumerate(self.layers):
            if layer.shape != (height, width, 4):
                raise DimensionMismatchError(
                    f"Layer {z} shape {layer.shape} does not match canvas {(height, width, 4)}."
                )

    @classmethod
    def from_layers(cls, layers: Iterable[np.ndarray]) -> "LayerSequence":
        checked = [validate_rgba(layer, what=f"layer {z}") for z, layer in enumerate(layers)]
        if not checked:
            raise EmptySequenceError("LayerSequence requires at least one layer.")
        height, width = checked[0].shape[:2]
        return cls(canvas=(width, height), layers=tuple(checked))

    @property
    def width(self) -> int:
        return self.canvas[0]

    @property
    def height(self) -> int:
        return self.canvas[1]

    def __len__(self) -> int:
        return len(self.layers)

    def __iter__(self):
        return iter(self.layers)

    def __getitem__(self, z: int) -> np.ndarray:
        return self.layers[z]


def opaque_layer(rgb: np.ndarray) -> np.ndarray:
    """RGB 画像をアルファ 1 のレイヤーにする"""
    rgb = validate_rgb(rgb)
    alpha = np.ones(rgb.shape[:2] + (1,), dtype=PIXEL_DTYPE)
    return np.concatenate([rgb, alpha], axis=2)


def make_layer(rgb: np.ndarray, alpha: np.ndarray) -> np.ndarray:
    rgb = validate_rgb(rgb, what="layer color")
    alpha = validate_alpha(alpha, shape=rgb.shape[:2])
    return np.concatenate([rgb, alpha[..., None]], axis=2)


def blend(layer: np.ndarray, backdrop: np.ndarray) -> np.ndarray:
    """
    out = l^C * l^A + backdrop * (1 - l^A)
    """
    check_same_size(layer, backdrop, "layer and backdrop")
    alpha = layer[..., 3:4]
    out = layer[..., :3] * alpha + backdrop * (1.0 - alpha)
    return np.clip(out, 0.0, 1.0).astype(PIXEL_DTYPE, copy=False)


def composite(seq: LayerSequence) -> np.ndarray:
    """
    背景レイヤーの色から始め、z=1..K を順に blend する。背景のアルファは不透明として扱う。
    """
    if len(seq) == 0:
        raise EmptySequenceError("Cannot composite an empty sequence.")
    image = np.array(seq.layers[0][..., :3], dtype=PIXEL_DTYPE)
    for layer in seq.layers[1:]:
        image = blend(layer, image)
    return image


def unblend(composited: np.ndarray, backdrop: np.ndarray, alpha: np.ndarray) -> np.ndarray:
    """
    fg = (x - bg * (1 - a)) / a
    a < EPS_ALPHA の画素は 0 とし、結果は [0,1] にクリップする。
    """
    check_same_size(composited, backdrop, "composited image and backdrop")
    if alpha.shape != composited.shape[:2]:
        raise DimensionMismatchError(
            f"Alpha shape {alpha.shape} does not match image {composited.shape[:2]}."
        )
    a = alpha.astype(PIXEL_DTYPE)[..., None]
    valid = a >= EPS_ALPHA
    safe = np.where(valid, a, 1.0)
    fg = (composited - backdrop * (1.0 - a)) / safe
    fg = np.where(valid, fg, 0.0)
    return np.clip(fg, 0.0, 1.0).astype(PIXEL_DTYPE, copy=False)


def merge_layers(lower: np.ndarray, upper: np.ndarray) -> np.ndarray:
    """
    2枚のレイヤーを over 合成で1枚にまとめる。
    片方のアルファが 0 の画素（または upper が不透明の画素）はもう一方の値をそのままコピーする。
    """
    check_same_size(lower, upper, "merged layers")
    a_lo = lower[..., 3:4].astype(np.float64)
    a_up = upper[..., 3:4].astype(np.float64)
    out_a = a_up + a_lo * (1.0 - a_up)
    safe = np.where(out_a > 0, out_a, 1.0)
    out_c = (upper[..., :3] * a_up + lower[..., :3] * a_lo * (1.0 - a_up)) / safe
    merged = np.concatenate([out_c, out_a], axis=2).astype(PIXEL_DTYPE)
    merged = np.where(a_lo == 0, upper, merged)
    merged = np.where((a_up == 0) & (a_lo > 0), lower, merged)
    merged = np.where(a_up == 1, upper, merged)
    return np.clip(merged, 0.0, 1.0).astype(PIXEL_DTYPE, copy=False)


def merge_all(layers: Sequence[np.ndarray]) -> np.ndarray:
    """z 順に並んだレイヤー群を1枚にまとめる"""
    if not layers:
        raise EmptySequenceError("Nothing to merge.")
    merged = layers[0]
    for layer in layers[1:]:
        merged = merge_layers(merged, layer)
    return merged


def stack_sequence(background_rgb: np.ndarray, foreground: List[np.ndarray]) -> LayerSequence:
    """背景 RGB と前景レイヤー（背面→前面）から LayerSequence を組み立てる"""
    return LayerSequence.from_layers([opaque_layer(background_rgb)] + list(foreground))
