"""
src/layerpy/backends.py
マッティング／インペインティングのバックエンド契約と組み込み実装を提供します:
- MattingBackend / InpaintingBackend: パイプラインが呼び出す関数の型
- OracleSource / OracleMatting: 正解レイヤー列からトップレイヤーのアルファを順に返す
- heuristic_flat_matting / HeuristicMatting: 単色領域を前景とみなす簡易マッティング
- harmonic_inpaint / HarmonicInpainting: ラプラス方程式によるマスク領域の補完
"""
import logging
import math
from typing import List, Optional, Protocol

import numpy as np
from scipy import ndimage

from ._errors import DimensionMismatchError, InpaintingError
from ._type import HeuristicMattingConfig
from .metrics import visibility_groups
from .raster import LayerSequence, merge_all
from .refine import FOUR_CONNECTIVITY
from .validate import PIXEL_DTYPE, validate_mask, validate_rgb

logger = logging.getLogger(__name__)

HARMONIC_TOLERANCE = 1e-4
HARMONIC_MAX_SWEEPS = 2000


class MattingBackend(Protocol):
    def __call__(self, image: np.ndarray) -> np.ndarray:
        ...


class InpaintingBackend(Protocol):
    def __call__(self, image: np.ndarray, mask: np.ndarray) -> np.ndarray:
        ...


class OracleSource:
    """
    正解レイヤー列のトップレイヤーグループを前面から順に保持するカーソル。
    1回の呼び出しごとに1グループ進み、尽きたら α ≡ 0 を返す。
    """

    def __init__(self, truth: LayerSequence, occlusion_cut: float = 0.5):
        self.truth = truth
        self._groups: List[np.ndarray] = [
            merge_all([truth.layers[k] for k in group])[..., 3]
            for group in visibility_groups(truth, occlusion_cut)
        ]
        self._cursor = 0

    @property
    def remaining(self) -> int:
        return len(self._groups) - self._cursor

    @property
    def exhausted(self) -> bool:
        return self.remaining <= 0

    def next_alpha(self) -> np.ndarray:
        if self.exhausted:
            self._cursor += 1
            return np.zeros((self.truth.height, self.truth.width), dtype=PIXEL_DTYPE)
        alpha = self._groups[self._cursor].astype(PIXEL_DTYPE, copy=True)
        self._cursor += 1
        return alpha


def oracle_matting(source: OracleSource, current: np.ndarray) -> np.ndarray:
    """現在の画像サイズを照合し、次のトップレイヤーグループのアルファを返す"""
    current = np.asarray(current)
    if current.shape[:2] != (source.truth.height, source.truth.width):
        raise DimensionMismatchError(
            f"Oracle canvas {source.truth.width}x{source.truth.height} does not match "
            f"image {current.shape[1]}x{current.shape[0]}."
        )
    return source.next_alpha()


class OracleMatting:
    def __init__(self, truth: LayerSequence, occlusion_cut: float = 0.5):
        self.source = OracleSource(truth, occlusion_cut)

    def __call__(self, image: np.ndarray) -> np.ndarray:
        return oracle_matting(self.source, image)


def heuristic_flat_matting(image: np.ndarray, config: Optional[HeuristicMattingConfig] = None) -> np.ndarray:
    """
    色を quantization_step で量子化し、最頻色を背景とする。
    背景以外の各色について 4 連結成分を取り、面積が min_region_area 以上の成分を α = 1 とする。
    """
    config = config or HeuristicMattingConfig()
    image = validate_rgb(image)
    levels = int(math.ceil(1.0 / config.quantization_step)) + 1
    q = np.rint(image.astype(np.float64) / config.quantization_step).astype(np.int64)
    keys = (q[..., 0] * levels + q[..., 1]) * levels + q[..., 2]
    uniq, inverse, counts = np.unique(keys.ravel(), return_inverse=True, return_counts=True)
    inverse = inverse.reshape(keys.shape)
    background = int(np.argmax(counts))

    alpha = np.zeros(keys.shape, dtype=PIXEL_DTYPE)
    for index in range(len(uniq)):
        # 総画素数が閾値未満の色は成分も閾値未満
        if index == background or counts[index] < config.min_region_area:
            continue
        labels, count = ndimage.label(inverse == index, structure=FOUR_CONNECTIVITY)
        areas = np.bincount(labels.ravel(), minlength=count + 1)
        keep = areas >= config.min_region_area
        keep[0] = False
        alpha[keep[labels]] = 1.0
    logger.debug("[BACKEND] heuristic matting: %d colors, %d foreground pixels",
                 len(uniq), int(alpha.sum()))
    return alpha


class HeuristicMatting:
    def __init__(self, config: Optional[HeuristicMattingConfig] = None):
        self.config = config or HeuristicMattingConfig()

    def __call__(self, image: np.ndarray) -> np.ndarray:
        return heuristic_flat_matting(image, self.config)


def _neighbor_sum(u: np.ndarray) -> np.ndarray:
    p = np.pad(u, ((1, 1), (1, 1)) + ((0, 0),) * (u.ndim - 2))
    return p[:-2, 1:-1] + p[2:, 1:-1] + p[1:-1, :-2] + p[1:-1, 2:]


def harmonic_inpaint(
    image: np.ndarray,
    mask: np.ndarray,
    tolerance: float = HARMONIC_TOLERANCE,
    max_sweeps: int = HARMONIC_MAX_SWEEPS,
) -> np.ndarray:
    """
    マスク画素を 4 近傍平均（画像外の近傍は除く）の固定点で埋める。
    マスクの外接矩形 + 1px の範囲で赤黒順の SOR を回し、1 スイープの最大変化量が
    tolerance 未満になるか max_sweeps に達したら終了する。マスク外の画素は変更しない。
    """
    image = validate_rgb(image)
    mask = validate_mask(mask, image.shape[:2])
    if not mask.any():
        return image.copy()
    if mask.all():
        raise InpaintingError("mask covers the entire image; there is no boundary to fill from")

    height, width = mask.shape
    rows, cols = np.nonzero(mask)
    top, bottom = max(rows.min() - 1, 0), min(rows.max() + 2, height)
    left, right = max(cols.min() - 1, 0), min(cols.max() + 2, width)
    m = mask[top:bottom, left:right]
    u = image[top:bottom, left:right].astype(np.float64)

    ring = ndimage.binary_dilation(m, structure=FOUR_CONNECTIVITY) & ~m
    u[m] = u[ring].mean(axis=0)

    count = _neighbor_sum(np.ones(m.shape))[..., None]
    yy, xx = np.mgrid[top:bottom, left:right]
    phases = [m & ((yy + xx) % 2 == parity) for parity in (0, 1)]
    omega = 2.0 / (1.0 + math.sin(math.pi / max(m.shape)))

    sweeps = 0
    for sweeps in range(1, max_sweeps + 1):
        change = 0.0
        for phase in phases:
            if not phase.any():
                continue
            target = _neighbor_sum(u)[phase] / count[phase]
            step = omega * (target - u[phase])
            u[phase] += step
            change = max(change, float(np.abs(step).max()))
        if change < tolerance:
            break
    logger.debug("[BACKEND] harmonic fill of %d pixels in %d sweeps", int(mask.sum()), sweeps)

    out = image.copy()
    window = out[top:bottom, left:right]
    window[m] = np.clip(u[m], 0.0, 1.0).astype(PIXEL_DTYPE)
    return out


class HarmonicInpainting:
    def __init__(self, tolerance: float = HARMONIC_TOLERANCE, max_sweeps: int = HARMONIC_MAX_SWEEPS):
        self.tolerance = tolerance
        self.max_sweeps = max_sweeps

    def __call__(self, image: np.ndarray, mask: np.ndarray) -> np.ndarray:
        return harmonic_inpaint(image, mask, self.tolerance, self.max_sweeps)
