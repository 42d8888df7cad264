"""
src/layerpy/refine.py
フラットな色面を前提としたパレットベースの補正処理を提供します:
- connected_components: アルファの 4 連結成分分解
- flatness: 色勾配ゼロの画素が占める割合
- extract_palette: 出現頻度順の代表色（パレット）抽出
- refine_background: 補完領域をまわりのパレット色にスナップ
- refine_foreground: パレット一致領域でアルファの取りこぼしと誤検出を直し、広げた境界を最小二乗で柔らかくする
"""
import logging
from dataclasses import dataclass
from typing import List, Optional, Tuple

import numpy as np
from scipy import ndimage

from ._type import RefineConfig
from .color import delta_e, srgb_to_lab
from .raster import unblend
from .validate import PIXEL_DTYPE, check_same_size, validate_alpha, validate_mask, validate_rgb

logger = logging.getLogger(__name__)

FOUR_CONNECTIVITY = ndimage.generate_binary_structure(2, 1)

# float32 画素差の丸め分
_GRADIENT_SLACK = 1e-6


@dataclass(frozen=True)
class ConnectedRegion:
    mask: np.ndarray
    # (top, left, bottom, right) 半開区間
    bbox: Tuple[int, int, int, int]
    area: int


@dataclass(frozen=True)
class Palette:
    rgb: np.ndarray
    lab: np.ndarray
    weights: np.ndarray

    def __len__(self) -> int:
        return int(self.rgb.shape[0])

    def nearest(self, lab_pixels: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        """各画素に最も近いパレット色の index と ΔE を返す"""
        dist = delta_e(lab_pixels[..., None, :], self.lab)
        idx = np.argmin(dist, axis=-1)
        return idx, np.take_along_axis(dist, idx[..., None], axis=-1)[..., 0]


def connected_components(alpha: np.ndarray, cut: float) -> List[ConnectedRegion]:
    """
    {alpha > cut} の 4 連結成分を面積の降順で返す。同面積は左上（ラスタ走査順）優先。
    """
    support = np.asarray(alpha) > cut
    labels, count = ndimage.label(support, structure=FOUR_CONNECTIVITY)
    if count == 0:
        return []
    flat = labels.ravel()
    areas = np.bincount(flat, minlength=count + 1)
    present, first_index = np.unique(flat, return_index=True)
    first = dict(zip(present.tolist(), first_index.tolist()))
    slices = ndimage.find_objects(labels)

    regions = []
    for label in range(1, count + 1):
        sl = slices[label - 1]
        regions.append((
            -int(areas[label]),
            first[label],
            ConnectedRegion(
                mask=labels == label,
                bbox=(sl[0].start, sl[1].start, sl[0].stop, sl[1].stop),
                area=int(areas[label]),
            ),
        ))
    regions.sort(key=lambda item: (item[0], item[1]))
    return [item[2] for item in regions]


def gradient_map(image: np.ndarray, region: Optional[np.ndarray] = None) -> np.ndarray:
    """
    画素ごとの前進差分の最大値（チャンネル・縦横の max）。
    右端・下端は後退差分で代用する。region を渡すと、両端が region 内の差分だけを数える。
    """
    height, width = image.shape[:2]
    grad = np.zeros((height, width), dtype=PIXEL_DTYPE)
    for axis, size in ((1, width), (0, height)):
        if size < 2:
            continue
        diff = np.abs(np.diff(image, axis=axis)).max(axis=2)
        if region is not None:
            if axis == 1:
                diff = np.where(region[:, :-1] & region[:, 1:], diff, 0.0)
            else:
                diff = np.where(region[:-1, :] & region[1:, :], diff, 0.0)
        full = np.zeros((height, width), dtype=PIXEL_DTYPE)
        if axis == 1:
            full[:, :-1] = diff
            full[:, -1] = diff[:, -1]
        else:
            full[:-1, :] = diff
            full[-1, :] = diff[-1, :]
        grad = np.maximum(grad, full)
    return grad


def flatness(image: np.ndarray, region: np.ndarray, config: RefineConfig, within_region: bool = False) -> float:
    """
    region 内で色勾配が gradient_epsilon 以下の画素の割合。
    """
    region = np.asarray(region, dtype=bool)
    area = int(region.sum())
    if area == 0:
        raise ValueError("flatness requires a non-empty region.")
    grad = gradient_map(image, region if within_region else None)
    flat = grad[region] <= config.gradient_epsilon + _GRADIENT_SLACK
    return float(np.count_nonzero(flat)) / area


def extract_palette(pixels: np.ndarray, max_colors: int, config: RefineConfig) -> Palette:
    """
    Lab の一様グリッドで量子化し、頻度の高いビンから中央値色を代表として採る。
    累積の被覆率が percentile_coverage に達するか max_colors に達したら打ち切り、
    palette_match_radius 未満の代表色は頻度の高い方に統合する。
    """
    pixels = np.asarray(pixels, dtype=PIXEL_DTYPE).reshape(-1, 3)
    if pixels.shape[0] == 0:
        raise ValueError("extract_palette requires at least one pixel.")
    total = pixels.shape[0]
    lab = srgb_to_lab(pixels)
    keys = np.floor(lab / config.palette_bin_size).astype(np.int64)
    _, inverse, counts = np.unique(keys, axis=0, return_inverse=True, return_counts=True)
    inverse = inverse.reshape(-1)
    order = np.argsort(-counts, kind="stable")

    reps: List[np.ndarray] = []
    weights: List[float] = []
    covered = 0
    for bin_index in order:
        if len(reps) >= max_colors:
            break
        members = pixels[inverse == bin_index]
        reps.append(np.median(members, axis=0).astype(PIXEL_DTYPE))
        weights.append(counts[bin_index] / total)
        covered += counts[bin_index]
        if covered / total >= config.percentile_coverage:
            break

    rep_rgb = np.stack(reps)
    rep_lab = srgb_to_lab(rep_rgb)
    keep: List[int] = []
    kept_weights: List[float] = []
    for i in range(len(reps)):
        if keep:
            dist = delta_e(rep_lab[keep], rep_lab[i])
            nearest = int(np.argmin(dist))
            if dist[nearest] < config.palette_match_radius:
                kept_weights[nearest] += weights[i]
                continue
        keep.append(i)
        kept_weights.append(weights[i])
    return Palette(rgb=rep_rgb[keep], lab=rep_lab[keep], weights=np.asarray(kept_weights))


def refine_background(completed: np.ndarray, mask: np.ndarray, config: RefineConfig) -> np.ndarray:
    """
    補完済み背景の各マスク連結領域について、周囲リング（マスク外）の平坦度を調べ、
    平坦ならリングのパレット色（Lab 最近傍）に領域内の画素を置き換える。
    マスク外の画素は変更しない。
    """
    completed = validate_rgb(completed, what="completed backdrop")
    mask = validate_mask(mask, completed.shape[:2])
    out = completed.copy()
    ring_structure = np.ones((2 * config.ring_width + 1,) * 2, dtype=bool)

    for region in connected_components(mask, 0.5):
        ring = ndimage.binary_dilation(region.mask, structure=ring_structure) & ~mask
        if not ring.any():
            continue
        score = flatness(completed, ring, config)
        if score < config.flatness_threshold:
            logger.debug("[REFINE] background region area=%d skipped (flatness %.3f)", region.area, score)
            continue
        palette = extract_palette(completed[ring], config.bg_max_colors, config)
        idx, _ = palette.nearest(srgb_to_lab(completed[region.mask]))
        out[region.mask] = palette.rgb[idx]
        logger.debug("[REFINE] background region area=%d snapped to %d colors", region.area, len(palette))
    return out


def boundary_alpha(
    pixels: np.ndarray, backdrop: np.ndarray, palette_rgb: np.ndarray
) -> Tuple[np.ndarray, np.ndarray]:
    """
    x = a*f + (1-a)*b を 3 チャンネルで最小二乗に解く。
    f は残差が最小になるパレット色。戻り値は (alpha, 解けたかどうか)。
    """
    x = np.asarray(pixels, dtype=np.float64)
    b = np.asarray(backdrop, dtype=np.float64)
    d = palette_rgb[None, :, :].astype(np.float64) - b[:, None, :]
    target = (x - b)[:, None, :]
    den = np.sum(d * d, axis=2)
    solvable = den > 1e-12
    a = np.where(solvable, np.sum(target * d, axis=2) / np.where(solvable, den, 1.0), 0.0)
    a = np.clip(a, 0.0, 1.0)
    residual = np.sum((target - a[..., None] * d) ** 2, axis=2)
    residual = np.where(solvable, residual, np.inf)
    best = np.argmin(residual, axis=1)
    alpha = np.take_along_axis(a, best[:, None], axis=1)[:, 0]
    ok = np.any(solvable, axis=1)
    return alpha, ok


def refine_foreground(
    image: np.ndarray,
    alpha: np.ndarray,
    backdrop: np.ndarray,
    config: RefineConfig,
    search_image: Optional[np.ndarray] = None,
    synthesized: Optional[np.ndarray] = None,
) -> np.ndarray:
    """
    アルファの各連結領域について:
      1. unblend で前景色を求め、α>0.5 のコア部の平坦度を判定
      2. 平坦ならパレットを抽出し、search_image 中でパレット色に一致する画素の連結成分を取る
         （synthesized の画素は補完で作られた色なので一致判定に使わない）
      3. α>0.5 との重なり率が overlap_threshold 以上の成分を採用する
      4. 採用成分のうち α<=0.5 の画素（取りこぼし）と、パレット色そのものの画素を α=1 にする
      5. 採用成分と一つも交わらない α>0.5 の塊は誤検出として α=0 にする
      6. 取りこぼしを埋めた部分の外周（元の α=0）は最小二乗でアルファを求める
    平坦でない領域、採用成分が無い領域、synthesized の画素は元のアルファを維持する。
    """
    image = validate_rgb(image)
    alpha = validate_alpha(alpha, shape=image.shape[:2])
    backdrop = validate_rgb(backdrop, what="backdrop")
    check_same_size(image, backdrop, "image and backdrop")
    search = image if search_image is None else validate_rgb(search_image, what="search image")
    check_same_size(image, search, "image and search image")
    if synthesized is None:
        synthesized = np.zeros(image.shape[:2], dtype=bool)
    else:
        synthesized = validate_mask(synthesized, image.shape[:2], what="synthesized mask")

    colors = unblend(image, backdrop, alpha)
    core_all = alpha > 0.5
    core_labels, _ = ndimage.label(core_all, structure=FOUR_CONNECTIVITY)
    search_lab = srgb_to_lab(search)
    fringe_structure = np.ones((3, 3), dtype=bool)

    out = alpha.copy()
    for region in connected_components(alpha, config.region_alpha_cut):
        core = region.mask & core_all
        if not core.any():
            continue
        score = flatness(colors, core, config, within_region=True)
        if score < config.flatness_threshold:
            logger.debug("[REFINE] foreground region area=%d kept (flatness %.3f)", region.area, score)
            continue
        palette = extract_palette(colors[core], config.fg_max_colors, config)
        _, dist = palette.nearest(search_lab)
        matched = (dist <= config.palette_match_radius) & ~synthesized
        labels, count = ndimage.label(matched, structure=FOUR_CONNECTIVITY)
        if count == 0:
            continue
        flat_labels = labels.ravel()
        comp_area = np.bincount(flat_labels, minlength=count + 1)
        comp_overlap = np.bincount(flat_labels, weights=core_all.ravel(), minlength=count + 1)
        frac = comp_overlap / np.maximum(comp_area, 1)
        touching = np.unique(labels[region.mask])
        chosen = [int(c) for c in touching if c > 0 and frac[c] >= config.overlap_threshold]
        if not chosen:
            logger.debug("[REFINE] foreground region area=%d kept (no component selected)", region.area)
            continue
        selected = np.isin(labels, chosen)

        region_cores = np.unique(core_labels[core])
        confirmed = np.unique(core_labels[selected & core_all])
        spurious = np.isin(core_labels, np.setdiff1d(region_cores, confirmed)) & ~synthesized
        out[spurious] = 0.0

        grown = selected & (alpha <= 0.5)
        solid = selected & (dist <= config.solid_match_radius)
        out[grown | solid] = 1.0

        fringe = ndimage.binary_dilation(grown, structure=fringe_structure) \
            & ~selected & (alpha == 0.0) & ~synthesized
        if fringe.any():
            soft, ok = boundary_alpha(image[fringe], backdrop[fringe], palette.rgb)
            soft = np.where(ok, soft, 0.0).astype(PIXEL_DTYPE)
            out[fringe] = np.maximum(out[fringe], soft)
        logger.debug(
            "[REFINE] foreground region area=%d: grown=%d dropped=%d (%d colors)",
            region.area, int(grown.sum()), int(spurious.sum()), len(palette),
        )
    return out
