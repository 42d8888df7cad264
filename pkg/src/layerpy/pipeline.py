"""
src/layerpy/pipeline.py

マッティングとインペインティングのバックエンドを用いて、画像を前面から順にレイヤーへ分解します。
- 各イテレーションでトップレイヤーのアルファ推定 → 背景補完 → パレット補正 → 前景色の逆算
- バックエンドの呼び出しは log_io で前後をログ出力
- 途中で失敗した場合は、それまでのトレースを PipelineError に保持する
"""
import functools
import json
import logging
import os
from dataclasses import dataclass, field
from typing import Any, Callable, List, Literal, Optional, Tuple

import numpy as np
from scipy import ndimage

from ._errors import BackendError, PipelineError
from ._type import PipelineConfig, RefineConfig
from .backends import InpaintingBackend, MattingBackend
from .raster import LayerSequence, make_layer, stack_sequence, unblend
from .refine import refine_background, refine_foreground
from .sequence_io import save_alpha, save_rgb, save_rgba
from .validate import check_inpainting_output, check_matting_output, validate_alpha, validate_rgb

logger = logging.getLogger(__name__)

Termination = Literal["max-iters", "empty-matte"]


def _summary(value: Any) -> str:
    if isinstance(value, np.ndarray):
        if value.size == 0:
            return f"array{value.shape}"
        return f"array{value.shape} [{float(value.min()):.3f}, {float(value.max()):.3f}]"
    return repr(value)


def log_io(stage: Optional[str] = None) -> Callable:
    """
    各メソッドの呼び出し前後を DEBUG でログ出力するデコレーター。
    配列は形状と値域だけを表示する。
    """
    def decorator(func: Callable) -> Callable:
        name = stage or func.__name__

        @functools.wraps(func)
        def wrapper(self, *args, **kwargs):
            logger.debug("[CALL] %s args=%s", name, [_summary(a) for a in args])
            result = func(self, *args, **kwargs)
            logger.debug("[RETURN] %s -> %s", name, _summary(result))
            return result
        return wrapper
    return decorator


@dataclass
class IterationRecord:
    iteration: int
    input_image: np.ndarray
    raw_alpha: np.ndarray
    refined_alpha: np.ndarray
    mask: np.ndarray
    backdrop_raw: np.ndarray
    backdrop_refined: np.ndarray
    layer: np.ndarray


@dataclass
class DecompositionTrace:
    records: List[IterationRecord] = field(default_factory=list)
    termination: Optional[Termination] = None
    # バックエンドが失敗したイテレーション番号
    stopped_at: Optional[int] = None

    def __len__(self) -> int:
        return len(self.records)

    def save(self, directory: str) -> None:
        """iter_<n>/ 以下に中間画像を、trace.json に概要を書き出す"""
        os.makedirs(directory, exist_ok=True)
        summary = []
        for record in self.records:
            sub = os.path.join(directory, f"iter_{record.iteration}")
            os.makedirs(sub, exist_ok=True)
            save_rgb(os.path.join(sub, "input.png"), record.input_image)
            save_alpha(os.path.join(sub, "alpha_raw.png"), record.raw_alpha)
            save_alpha(os.path.join(sub, "alpha_refined.png"), record.refined_alpha)
            save_alpha(os.path.join(sub, "mask.png"), record.mask.astype(np.float32))
            save_rgb(os.path.join(sub, "backdrop_raw.png"), record.backdrop_raw)
            save_rgb(os.path.join(sub, "backdrop_refined.png"), record.backdrop_refined)
            save_rgba(os.path.join(sub, "layer.png"), record.layer)
            summary.append({
                "iteration": record.iteration,
                "alpha_pixels": int(np.count_nonzero(record.refined_alpha > 0)),
                "mask_pixels": int(np.count_nonzero(record.mask)),
            })
        with open(os.path.join(directory, "trace.json"), 'w', encoding='utf-8') as f:
            json.dump({"termination": self.termination, "stopped_at": self.stopped_at,
                       "iterations": summary}, f, indent=2)


def should_terminate(alpha: np.ndarray, config: PipelineConfig) -> bool:
    """α > termination_alpha の画素の割合が termination_fraction 未満なら True"""
    alpha = np.asarray(alpha)
    above = int(np.count_nonzero(alpha > config.termination_alpha))
    return above / alpha.size < config.termination_fraction


def mask_for_inpainting(alpha: np.ndarray, config: PipelineConfig) -> np.ndarray:
    """α > termination_alpha を (2d+1)×(2d+1) の正方形で膨張させたマスク"""
    support = np.asarray(alpha) > config.termination_alpha
    if config.inpaint_dilation == 0 or not support.any():
        return support
    size = 2 * config.inpaint_dilation + 1
    return ndimage.binary_dilation(support, structure=np.ones((size, size), dtype=bool))


class Decomposer:
    def __init__(
        self,
        matting: MattingBackend,
        inpainting: InpaintingBackend,
        config: Optional[PipelineConfig] = None,
        refine_config: Optional[RefineConfig] = None,
    ):
        self._matting = matting
        self._inpainting = inpainting
        self.config = config or PipelineConfig()
        self.refine_config = refine_config or RefineConfig()

    @log_io("matting")
    def matte(self, image: np.ndarray) -> np.ndarray:
        return check_matting_output(self._matting(image), image.shape[:2])

    @log_io("inpainting")
    def inpaint(self, image: np.ndarray, mask: np.ndarray) -> np.ndarray:
        return check_inpainting_output(self._inpainting(image, mask), image, mask)

    def _call_backend(self, what: str, iteration: int, trace: DecompositionTrace, func: Callable, *args) -> np.ndarray:
        try:
            return func(*args)
        except Exception as e:
            if isinstance(e, BackendError):
                e.iteration = iteration
            trace.stopped_at = iteration
            logger.error("[ITER] %d: %s backend failed: %s", iteration, what, e)
            raise PipelineError(f"{what} backend failed: {e}", iteration, trace, e) from e

    def run(self, image: np.ndarray) -> Tuple[LayerSequence, DecompositionTrace]:
        """
        前面から順にトップレイヤーを取り出し、残りを背景として再帰する。
        最後の画像が z=0 の背景になり、出力は背面→前面の順。
        """
        image = validate_rgb(image)
        cfg, rcfg = self.config, self.refine_config
        trace = DecompositionTrace()
        current = image
        extracted: List[np.ndarray] = []
        # これまでのイテレーションで補完した画素
        synthesized = np.zeros(image.shape[:2], dtype=bool)

        for iteration in range(1, cfg.max_iterations + 1):
            alpha = self._call_backend("matting", iteration, trace, self.matte, current)
            if should_terminate(alpha, cfg):
                trace.termination = "empty-matte"
                logger.info("[ITER] %d: empty matte, stopping", iteration)
                break

            mask = mask_for_inpainting(alpha, cfg)
            backdrop_raw = self._call_backend("inpainting", iteration, trace, self.inpaint, current, mask)
            backdrop = refine_background(backdrop_raw, mask, rcfg) if cfg.refine_background else backdrop_raw

            refined = alpha
            if cfg.refine_foreground:
                search = image if rcfg.fg_search_source == "input" else None
                refined = validate_alpha(refine_foreground(
                    current, alpha, backdrop, rcfg, search_image=search, synthesized=synthesized,
                ))

            layer = make_layer(unblend(current, backdrop, refined), refined)
            extracted.append(layer)
            trace.records.append(IterationRecord(
                iteration=iteration,
                input_image=current,
                raw_alpha=alpha,
                refined_alpha=refined,
                mask=mask,
                backdrop_raw=backdrop_raw,
                backdrop_refined=backdrop,
                layer=layer,
            ))
            logger.info("[ITER] %d: extracted layer with %d mask pixels", iteration, int(mask.sum()))
            current = backdrop
            synthesized = synthesized | mask
        else:
            trace.termination = "max-iters"

        seq = stack_sequence(current, extracted[::-1])
        return seq, trace


def decompose(
    image: np.ndarray,
    config: Optional[PipelineConfig],
    matting: MattingBackend,
    inpainting: InpaintingBackend,
    refine_config: Optional[RefineConfig] = None,
) -> Tuple[LayerSequence, DecompositionTrace]:
    return Decomposer(matting, inpainting, config, refine_config).run(image)
