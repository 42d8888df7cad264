"""
src/layerpy/cli.py
コマンドラインのエントリーポイント (layerpy):
- decompose: 画像をレイヤー列に分解し、レイヤー・トレース・preview.png・run.json を書き出す
- evaluate: 2つのレイヤー列ディレクトリを比較し、編集回数ごとの評価表を出力する
- synth: 合成デザイン（と学習ペア）を書き出す
- composite: レイヤー列ディレクトリを1枚の画像に合成する

終了コード: 0 成功 / 2 入出力エラー / 3 バックエンドエラー / 4 設定エラー
"""
import argparse
import logging
import os
import sys
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
from PIL import Image
from pydantic import ValidationError

from . import __version__
from ._errors import BackendError, CanvasMismatchError, PipelineError, SequenceLoadError
from ._type import DesignSpec, ResizeRecord, RunRecord, ToolkitConfig
from .backends import HarmonicInpainting, HeuristicMatting, OracleMatting
from .config_loader import DEFAULT_CONFIG_PATHS, load_toolkit_config
from .external import ExternalInpainting, ExternalMatting
from .metrics import evaluate, render_report
from .pipeline import Decomposer
from .raster import LayerSequence, blend, composite
from .sequence_io import from_uint8, read_sequence, save_rgb, write_sequence
from .synth import generate_batch, make_matting_pairs, write_pairs
from .validate import PIXEL_DTYPE

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_IO = 2
EXIT_BACKEND = 3
EXIT_CONFIG = 4

# (引数名, ToolkitConfig のセクション, フィールド名)
CONFIG_FLAGS: List[Tuple[str, str, str]] = [
    ("max_iters", "pipeline", "max_iterations"),
    ("termination_alpha", "pipeline", "termination_alpha"),
    ("termination_fraction", "pipeline", "termination_fraction"),
    ("inpaint_dilation", "pipeline", "inpaint_dilation"),
    ("refine_fg", "pipeline", "refine_foreground"),
    ("refine_bg", "pipeline", "refine_background"),
    ("fg_max_colors", "refine", "fg_max_colors"),
    ("bg_max_colors", "refine", "bg_max_colors"),
    ("flatness_threshold", "refine", "flatness_threshold"),
    ("gradient_epsilon", "refine", "gradient_epsilon"),
    ("overlap_threshold", "refine", "overlap_threshold"),
    ("ring_width", "refine", "ring_width"),
    ("palette_match_radius", "refine", "palette_match_radius"),
    ("percentile_coverage", "refine", "percentile_coverage"),
    ("fg_search_source", "refine", "fg_search_source"),
    ("quantization_step", "heuristic", "quantization_step"),
    ("min_region_area", "heuristic", "min_region_area"),
    ("max_edits", "evaluation", "max_edits"),
    ("occlusion_cut", "evaluation", "occlusion_cut"),
    ("hard_iou", "evaluation", "hard_iou"),
]


class ConfigError(ValueError):
    """コマンドライン引数の組み合わせが不正"""


def resolve_config(args: argparse.Namespace) -> ToolkitConfig:
    """
    プリセット (--preset) または --config ファイルを読み、指定されたフラグで上書きする
    """
    base = load_toolkit_config(getattr(args, "config", None), getattr(args, "preset", "default"))
    data = base.model_dump()
    for dest, section, name in CONFIG_FLAGS:
        value = getattr(args, dest, None)
        if value is not None:
            data[section][name] = value
    alpha_weight = getattr(args, "alpha_weight", None)
    if alpha_weight is not None:
        data["evaluation"]["distance"] = {"alpha_weight": alpha_weight, "color_weight": 1.0 - alpha_weight}
    return ToolkitConfig(**data)


def _arguments(args: argparse.Namespace) -> Dict[str, Any]:
    return {key: value for key, value in sorted(vars(args).items()) if key != "func"}


def _record_path(out: str) -> str:
    # 単一ファイル出力のコマンドは出力ファイルの隣に記録を置く
    return os.path.splitext(out)[0] + ".run.json"


def write_run_record(path: str, command: str, args: argparse.Namespace, config: Optional[ToolkitConfig]) -> None:
    """解決済みの設定とツールのバージョンを記録する"""
    record = RunRecord(
        version=__version__,
        command=command,
        arguments=_arguments(args),
        config=config.model_dump() if config is not None else {},
    )
    with open(path, 'w', encoding='utf-8') as f:
        f.write(record.model_dump_json(indent=2))


def load_input(path: str, short_side: Optional[int]) -> Tuple[np.ndarray, Optional[ResizeRecord]]:
    """
    入力画像を読み込む。short_side を指定すると、短辺がそれより長い場合のみ面積平均で縮小する。
    """
    if not os.path.isfile(path):
        raise FileNotFoundError(f"Input image not found: {path}")
    with Image.open(path) as img:
        img = img.convert("RGB")
        width, height = img.size
        resize = None
        if short_side is not None and min(width, height) > short_side:
            ratio = short_side / min(width, height)
            size = (max(1, round(width * ratio)), max(1, round(height * ratio)))
            img = img.resize(size, resample=Image.BOX)
            resize = ResizeRecord(original_width=width, original_height=height, short_side=short_side)
            logger.info("[LOAD] resized %dx%d -> %dx%d", width, height, size[0], size[1])
        arr = np.asarray(img)
    return from_uint8(arr), resize


def checkerboard(height: int, width: int, cell: int = 8) -> np.ndarray:
    yy, xx = np.mgrid[0:height, 0:width]
    tone = np.where(((yy // cell) + (xx // cell)) % 2 == 0, 1.0, 0.8).astype(PIXEL_DTYPE)
    return np.repeat(tone[..., None], 3, axis=2)


def render_contact_sheet(image: np.ndarray, seq: LayerSequence, gap: int = 4) -> np.ndarray:
    """入力 | 各レイヤー（背面→前面、市松模様の上） | 再合成 を横に並べた画像"""
    height, width = image.shape[:2]
    board = checkerboard(height, width)
    panels = [image] + [blend(layer, board) for layer in seq.layers] + [composite(seq)]
    spacer = np.ones((height, gap, 3), dtype=PIXEL_DTYPE)
    row: List[np.ndarray] = []
    for panel in panels:
        if row:
            row.append(spacer)
        row.append(panel)
    return np.concatenate(row, axis=1)


def build_matting(args: argparse.Namespace, config: ToolkitConfig):
    spec = args.backend
    if spec == "heuristic":
        return HeuristicMatting(config.heuristic)
    if spec == "oracle":
        if not args.gt:
            raise ConfigError("--backend oracle requires --gt <layer-sequence directory>")
        return OracleMatting(read_sequence(args.gt), config.evaluation.occlusion_cut)
    if spec.startswith("external:"):
        path = spec[len("external:"):]
        if not os.path.exists(path):
            raise FileNotFoundError(f"External backend not found: {path}")
        return ExternalMatting.from_path(path, timeout=args.timeout)
    raise ConfigError(f"Unknown matting backend: {spec}")


def build_inpainting(args: argparse.Namespace):
    spec = args.inpainter
    if spec == "harmonic":
        return HarmonicInpainting()
    if spec.startswith("external:"):
        path = spec[len("external:"):]
        if not os.path.exists(path):
            raise FileNotFoundError(f"External backend not found: {path}")
        return ExternalInpainting.from_path(path, timeout=args.timeout)
    raise ConfigError(f"Unknown inpainting backend: {spec}")


def cmd_decompose(args: argparse.Namespace) -> int:
    if not os.path.isfile(args.input):
        raise FileNotFoundError(f"Input image not found: {args.input}")
    config = resolve_config(args)
    matting = build_matting(args, config)
    inpainting = build_inpainting(args)
    image, resize = load_input(args.input, args.resize_short_side)

    os.makedirs(args.out, exist_ok=True)
    decomposer = Decomposer(matting, inpainting, config.pipeline, config.refine)
    try:
        seq, trace = decomposer.run(image)
    except PipelineError as e:
        e.trace.save(os.path.join(args.out, "trace"))
        raise

    write_sequence(seq, args.out, generator=f"layerpy {__version__} decompose", resize=resize)
    trace.save(os.path.join(args.out, "trace"))
    save_rgb(os.path.join(args.out, "preview.png"), render_contact_sheet(image, seq))
    write_run_record(os.path.join(args.out, "run.json"), "decompose", args, config)
    l1 = float(np.mean(np.abs(composite(seq) - image)))
    logger.info("[DONE] %d layers (%s), recomposite L1 %.4f", len(seq), trace.termination, l1)
    return EXIT_OK


def cmd_evaluate(args: argparse.Namespace) -> int:
    for path in (args.pred, args.gt):
        if not os.path.isdir(path):
            raise FileNotFoundError(f"Layer-sequence directory not found: {path}")
    config = resolve_config(args)
    pred = read_sequence(args.pred)
    gt = read_sequence(args.gt)
    try:
        report = evaluate(pred, gt, config.evaluation.max_edits, config.evaluation)
    except CanvasMismatchError as e:
        raise ConfigError(str(e)) from e
    report.header["arguments"] = _arguments(args)
    text = render_report(report, args.format)
    sys.stdout.write(text)
    if args.out:
        directory = os.path.dirname(os.path.abspath(args.out))
        os.makedirs(directory, exist_ok=True)
        with open(args.out, 'w', encoding='utf-8') as f:
            f.write(text)
        write_run_record(_record_path(args.out), "evaluate", args, config)
    else:
        # 標準出力のみのときは作業ディレクトリに記録する
        write_run_record(os.path.join(os.getcwd(), "evaluate.run.json"), "evaluate", args, config)
    return EXIT_OK


def cmd_synth(args: argparse.Namespace) -> int:
    spec = DesignSpec(
        seed=args.seed,
        canvas_width=args.width,
        canvas_height=args.height,
        layer_count_min=args.min_layers,
        layer_count_max=args.max_layers,
        shape_kinds=args.shapes or ["rect", "ellipse", "ring", "bar", "glyph-blob"],
        palette_size=args.palette_size,
        overlap_mode=args.overlap,
        background=args.background,
        edge=args.edge,
    )
    os.makedirs(args.out, exist_ok=True)
    inpainting = HarmonicInpainting()
    for i, seq in enumerate(generate_batch(spec, args.count)):
        directory = os.path.join(args.out, f"design_{i:03d}")
        write_sequence(seq, directory, generator=f"layerpy {__version__} synth", seed=args.seed + i)
        if args.pairs:
            write_pairs(make_matting_pairs(seq, inpainting), os.path.join(directory, "pairs"))
        logger.info("[SYNTH] %s: %d layers", directory, len(seq))
    write_run_record(os.path.join(args.out, "run.json"), "synth", args, None)
    return EXIT_OK


def cmd_composite(args: argparse.Namespace) -> int:
    if not os.path.isdir(args.input):
        raise FileNotFoundError(f"Layer-sequence directory not found: {args.input}")
    seq = read_sequence(args.input)
    directory = os.path.dirname(os.path.abspath(args.out))
    os.makedirs(directory, exist_ok=True)
    save_rgb(args.out, composite(seq))
    write_run_record(_record_path(args.out), "composite", args, None)
    return EXIT_OK


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", default=None, help="path to a ToolkitConfig JSON file")
    parser.add_argument("--preset", default="default", choices=sorted(DEFAULT_CONFIG_PATHS))


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="layerpy", description="Layer decomposition toolkit for graphic designs.")
    parser.add_argument("--version", action="version", version=f"layerpy {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    parser.add_argument("-q", "--quiet", action="store_true", help="warnings only")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("decompose", help="decompose an image into layers")
    p.add_argument("input")
    p.add_argument("--out", required=True)
    p.add_argument("--backend", default="heuristic", help="oracle | heuristic | external:<path>")
    p.add_argument("--gt", default=None, help="ground-truth directory for --backend oracle")
    p.add_argument("--inpainter", default="harmonic", help="harmonic | external:<path>")
    p.add_argument("--timeout", type=float, default=60.0)
    p.add_argument("--resize-short-side", type=int, default=None)
    p.add_argument("--max-iters", type=int, default=None)
    p.add_argument("--termination-alpha", type=float, default=None)
    p.add_argument("--termination-fraction", type=float, default=None)
    p.add_argument("--inpaint-dilation", type=int, default=None)
    p.add_argument("--no-refine-fg", dest="refine_fg", action="store_const", const=False, default=None)
    p.add_argument("--no-refine-bg", dest="refine_bg", action="store_const", const=False, default=None)
    p.add_argument("--fg-max-colors", type=int, default=None)
    p.add_argument("--bg-max-colors", type=int, default=None)
    p.add_argument("--flatness-threshold", type=float, default=None)
    p.add_argument("--gradient-epsilon", type=float, default=None)
    p.add_argument("--overlap-threshold", type=float, default=None)
    p.add_argument("--ring-width", type=int, default=None)
    p.add_argument("--palette-match-radius", type=float, default=None)
    p.add_argument("--percentile-coverage", type=float, default=None)
    p.add_argument("--fg-search-source", choices=["current", "input"], default=None)
    p.add_argument("--quantization-step", type=float, default=None)
    p.add_argument("--min-region-area", type=int, default=None)
    _add_common(p)
    p.set_defaults(func=cmd_decompose)

    p = sub.add_parser("evaluate", help="score a decomposition against ground truth")
    p.add_argument("pred")
    p.add_argument("gt")
    p.add_argument("--max-edits", type=int, default=None)
    p.add_argument("--alpha-weight", type=float, default=None, help="color weight is 1 - alpha weight")
    p.add_argument("--occlusion-cut", type=float, default=None)
    p.add_argument("--hard-iou", action="store_const", const=True, default=None)
    p.add_argument("--format", choices=["text", "structured"], default="text")
    p.add_argument("--out", default=None, help="also write the report to this file")
    _add_common(p)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("synth", help="write seeded synthetic designs")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--count", type=int, default=1)
    p.add_argument("--width", type=int, default=128)
    p.add_argument("--height", type=int, default=128)
    p.add_argument("--min-layers", type=int, default=2)
    p.add_argument("--max-layers", type=int, default=4)
    p.add_argument("--shapes", nargs="+", default=None,
                   choices=["rect", "ellipse", "ring", "bar", "glyph-blob"])
    p.add_argument("--palette-size", type=int, default=6)
    p.add_argument("--overlap", choices=["disjoint", "stacked", "mixed"], default="mixed")
    p.add_argument("--background", choices=["flat", "two-tone", "linear-gradient"], default="flat")
    p.add_argument("--edge", choices=["hard", "antialiased"], default="antialiased")
    p.add_argument("--pairs", action="store_true", help="also write matting training pairs")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("composite", help="render a layer-sequence directory to one image")
    p.add_argument("input")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_composite)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    level = logging.DEBUG if args.verbose else logging.WARNING if args.quiet else logging.INFO
    logging.basicConfig(level=level, stream=sys.stderr, format="%(levelname)s %(name)s: %(message)s")

    try:
        return args.func(args)
    except (ValidationError, ConfigError) as e:
        print(f"layerpy: configuration error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except (BackendError, PipelineError) as e:
        print(f"layerpy: backend error: {e}", file=sys.stderr)
        return EXIT_BACKEND
    except (OSError, SequenceLoadError) as e:
        print(f"layerpy: I/O error: {e}", file=sys.stderr)
        return EXIT_IO
    except ValueError as e:
        print(f"layerpy: configuration error: {e}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
