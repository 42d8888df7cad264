"""
src/layerpy/synth.py
シード固定の合成デザイン生成と、マッティング学習用ペアの作成を提供します:
- generate_design: DesignSpec から背景＋単色図形のレイヤー列を生成
- generate_batch: seed, seed+1, ... で複数生成
- make_matting_pairs: トップレイヤーを前面から順に剥がした (入力画像, 目標アルファ) の組
- write_pairs: pairs/ ディレクトリへの書き出し
"""
import logging
import os
from dataclasses import dataclass
from typing import List, Optional, Tuple

import numpy as np
from PIL import Image, ImageDraw
from scipy import ndimage

from ._errors import GenerationError
from ._type import DesignSpec, PairRecord, ShapeKind
from .backends import InpaintingBackend
from .color import delta_e, srgb_to_lab
from .metrics import visibility_groups
from .raster import LayerSequence, composite, merge_all
from .sequence_io import save_alpha, save_rgb
from .validate import PIXEL_DTYPE

logger = logging.getLogger(__name__)

SUPERSAMPLE = 4
MIN_COLOR_DISTANCE = 20.0
MAX_ATTEMPTS = 200
DISJOINT_MARGIN = 2
# 学習ペアの補完マスクの膨張幅
PAIR_MASK_DILATION = 3

Box = Tuple[int, int, int, int]


@dataclass
class MattingPair:
    image: np.ndarray
    target: np.ndarray
    iteration: int
    provenance: str


def _quantized(rgb: np.ndarray) -> np.ndarray:
    """8bit で往復しても変わらない色にそろえる"""
    return (np.rint(np.clip(rgb, 0.0, 1.0) * 255.0) / 255.0).astype(PIXEL_DTYPE)


def _pick_colors(rng: np.random.Generator, count: int, avoid: List[np.ndarray]) -> List[np.ndarray]:
    """互いに、また avoid の色と ΔE が MIN_COLOR_DISTANCE 以上離れた色を count 個選ぶ"""
    chosen: List[np.ndarray] = []
    for _ in range(count):
        for _attempt in range(MAX_ATTEMPTS * 5):
            candidate = _quantized(rng.random(3))
            others = avoid + chosen
            if not others or np.min(delta_e(srgb_to_lab(np.stack(others)), srgb_to_lab(candidate))) >= MIN_COLOR_DISTANCE:
                chosen.append(candidate)
                break
        else:
            raise GenerationError(f"cannot find {count} colors at least {MIN_COLOR_DISTANCE} apart")
    return chosen


def _background(rng: np.random.Generator, spec: DesignSpec) -> Tuple[np.ndarray, List[np.ndarray]]:
    width, height = spec.canvas_width, spec.canvas_height
    if spec.background == "flat":
        colors = _pick_colors(rng, 1, [])
        return np.broadcast_to(colors[0], (height, width, 3)).astype(PIXEL_DTYPE), colors
    colors = _pick_colors(rng, 2, [])
    if spec.background == "two-tone":
        seam = int(rng.integers(width // 3, 2 * width // 3 + 1))
        rgb = np.empty((height, width, 3), dtype=PIXEL_DTYPE)
        rgb[:, :seam] = colors[0]
        rgb[:, seam:] = colors[1]
        return rgb, colors
    t = np.linspace(0.0, 1.0, width, dtype=np.float64)[None, :, None]
    rgb = colors[0] * (1.0 - t) + colors[1] * t
    return _quantized(np.broadcast_to(rgb, (height, width, 3))), colors


def _draw_masks(rng: np.random.Generator, kind: ShapeKind, box: Box, scale: int, canvas: Tuple[int, int]):
    """
    図形を scale 倍の解像度で描き、(主色マスク, 副色マスク or None) を返す。
    """
    width, height = canvas
    x0, y0, x1, y1 = (v * scale for v in box)
    primary = Image.new("L", (width * scale, height * scale), 0)
    draw = ImageDraw.Draw(primary)
    secondary = None
    if kind == "rect":
        draw.rectangle([x0, y0, x1 - 1, y1 - 1], fill=255)
    elif kind == "ellipse":
        draw.ellipse([x0, y0, x1 - 1, y1 - 1], fill=255)
    elif kind == "ring":
        thickness = max(2 * scale, min(x1 - x0, y1 - y0) // 5)
        draw.ellipse([x0, y0, x1 - 1, y1 - 1], fill=255)
        if x0 + thickness < x1 - 1 - thickness and y0 + thickness < y1 - 1 - thickness:
            draw.ellipse([x0 + thickness, y0 + thickness, x1 - 1 - thickness, y1 - 1 - thickness], fill=0)
    elif kind == "bar":
        if x1 - x0 >= y1 - y0:
            mid, half = (y0 + y1) // 2, max(scale, (y1 - y0) // 8)
            draw.rectangle([x0, mid - half, x1 - 1, mid + half - 1], fill=255)
        else:
            mid, half = (x0 + x1) // 2, max(scale, (x1 - x0) // 8)
            draw.rectangle([mid - half, y0, mid + half - 1, y1 - 1], fill=255)
    else:
        # glyph-blob: 太いポリライン2本（2色目は後から重ねる）
        stroke = max(2 * scale, min(x1 - x0, y1 - y0) // 5)
        secondary = Image.new("L", primary.size, 0)
        for image in (primary, secondary):
            points = [
                (int(rng.integers(x0 + stroke, max(x0 + stroke + 1, x1 - stroke))),
                 int(rng.integers(y0 + stroke, max(y0 + stroke + 1, y1 - stroke))))
                for _ in range(int(rng.integers(3, 6)))
            ]
            ImageDraw.Draw(image).line(points, fill=255, width=stroke, joint="curve")
    return primary, secondary


def _downsample(mask: Image.Image, scale: int) -> np.ndarray:
    arr = np.asarray(mask, dtype=np.float64) / 255.0
    if scale == 1:
        return arr.astype(PIXEL_DTYPE)
    height, width = arr.shape[0] // scale, arr.shape[1] // scale
    return arr.reshape(height, scale, width, scale).mean(axis=(1, 3)).astype(PIXEL_DTYPE)


def _random_box(rng: np.random.Generator, spec: DesignSpec, anchor: Optional[Box] = None) -> Box:
    width, height = spec.canvas_width, spec.canvas_height
    w = int(rng.integers(max(4, width // 8), max(5, width // 3) + 1))
    h = int(rng.integers(max(4, height // 8), max(5, height // 3) + 1))
    if anchor is None:
        x = int(rng.integers(0, width - w + 1))
        y = int(rng.integers(0, height - h + 1))
    else:
        # 直前の図形の内部に中心を置く
        ax0, ay0, ax1, ay1 = anchor
        cx = int(rng.integers(ax0, ax1))
        cy = int(rng.integers(ay0, ay1))
        x = int(np.clip(cx - w // 2, 0, width - w))
        y = int(np.clip(cy - h // 2, 0, height - h))
    return x, y, x + w, y + h


def _boxes_overlap(a: Box, b: Box, margin: int) -> bool:
    return not (a[2] + margin <= b[0] or b[2] + margin <= a[0] or a[3] + margin <= b[1] or b[3] + margin <= a[1])


def generate_design(spec: DesignSpec) -> LayerSequence:
    """
    背景 (z=0) と layer_count_min..layer_count_max 枚の前景図形からなるレイヤー列を生成する。
    同じ seed なら結果はビット単位で一致する。
    :raises GenerationError: 指定の重なり方で図形を配置できない、または色が選べない
    """
    rng = np.random.default_rng(spec.seed)
    width, height = spec.canvas_width, spec.canvas_height
    scale = SUPERSAMPLE if spec.edge == "antialiased" else 1

    background, bg_colors = _background(rng, spec)
    palette = _pick_colors(rng, spec.palette_size, bg_colors)
    count = int(rng.integers(spec.layer_count_min, spec.layer_count_max + 1))

    layers = [np.concatenate([background, np.ones((height, width, 1), dtype=PIXEL_DTYPE)], axis=2)]
    boxes: List[Box] = []
    previous_support: Optional[np.ndarray] = None
    for index in range(count):
        kind: ShapeKind = spec.shape_kinds[int(rng.integers(len(spec.shape_kinds)))]
        for _attempt in range(MAX_ATTEMPTS):
            anchor = boxes[-1] if spec.overlap_mode == "stacked" and boxes else None
            box = _random_box(rng, spec, anchor)
            if spec.overlap_mode == "disjoint" and any(_boxes_overlap(box, b, DISJOINT_MARGIN) for b in boxes):
                continue
            primary, secondary = _draw_masks(rng, kind, box, scale, (width, height))
            alpha = _downsample(primary, scale)
            second = _downsample(secondary, scale) if secondary is not None else None
            if second is not None:
                alpha = np.maximum(alpha, second)
            support = alpha > 0.5
            if not support.any():
                continue
            if spec.overlap_mode == "stacked" and previous_support is not None \
                    and not np.any(support & previous_support):
                continue
            break
        else:
            raise GenerationError(
                f"cannot place foreground layer {index + 1} of {count} with overlap_mode={spec.overlap_mode}"
            )

        picks = rng.choice(len(palette), size=2, replace=len(palette) < 2)
        rgb = np.broadcast_to(palette[int(picks[0])], (height, width, 3)).copy()
        if second is not None:
            rgb[second >= 0.5] = palette[int(picks[1])]
        layers.append(np.concatenate([rgb, alpha[..., None]], axis=2).astype(PIXEL_DTYPE))
        boxes.append(box)
        previous_support = support

    seq = LayerSequence.from_layers(layers)
    logger.debug("[SYNTH] seed=%d: %d foreground layers (%s)", spec.seed, count, spec.overlap_mode)
    return seq


def generate_batch(spec: DesignSpec, count: int) -> List[LayerSequence]:
    return [generate_design(spec.model_copy(update={"seed": spec.seed + i})) for i in range(count)]


def make_matting_pairs(
    seq: LayerSequence,
    inpainting: Optional[InpaintingBackend] = None,
    occlusion_cut: float = 0.5,
) -> List[MattingPair]:
    """
    トップレイヤーのグループを前面から順に取り除き、各段階の合成画像と
    そのグループのアルファを組にする。
    inpainting を渡すと、2段目以降について「直前に取り除いたグループの領域を補完した画像」も加える。
    ただし後ろのレイヤーにかかる部分は補完せず、正解の画素のままとする。
    """
    if len(seq) < 2:
        return []
    groups = visibility_groups(seq, occlusion_cut)
    structure = np.ones((2 * PAIR_MASK_DILATION + 1,) * 2, dtype=bool)

    pairs: List[MattingPair] = []
    removed: set = set()
    previous_image: Optional[np.ndarray] = None
    for k, group in enumerate(groups):
        kept = [0] + [z for z in range(1, len(seq)) if z not in removed]
        image = composite(LayerSequence(canvas=seq.canvas, layers=tuple(seq.layers[z] for z in kept)))
        target = merge_all([seq.layers[z] for z in group])[..., 3].copy()
        pairs.append(MattingPair(image=image, target=target, iteration=k, provenance="clean"))

        if inpainting is not None and previous_image is not None:
            prev_support = merge_all([seq.layers[z] for z in groups[k - 1]])[..., 3] > 0.5
            behind = np.zeros(prev_support.shape, dtype=bool)
            for z in kept[1:]:
                behind |= seq.layers[z][..., 3] > 0
            mask = ndimage.binary_dilation(prev_support, structure=structure) & ~behind
            if mask.any() and not mask.all():
                filled = inpainting(previous_image, mask)
                variant = np.where(mask[..., None], filled, image).astype(PIXEL_DTYPE)
                pairs.append(MattingPair(image=variant, target=target, iteration=k, provenance="inpainted-input"))

        removed.update(group)
        previous_image = image
    return pairs


def write_pairs(pairs: List[MattingPair], directory: str) -> List[PairRecord]:
    """pair_<n>_input.png / pair_<n>_alpha.png / pair_<n>.json を書き出す"""
    os.makedirs(directory, exist_ok=True)
    records = []
    for n, pair in enumerate(pairs):
        save_rgb(os.path.join(directory, f"pair_{n}_input.png"), pair.image)
        save_alpha(os.path.join(directory, f"pair_{n}_alpha.png"), pair.target)
        record = PairRecord(index=n, iteration=pair.iteration, provenance=pair.provenance)
        with open(os.path.join(directory, f"pair_{n}.json"), 'w', encoding='utf-8') as f:
            f.write(record.model_dump_json(indent=2))
        records.append(record)
    return records
