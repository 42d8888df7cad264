"""
src/layerpy/sequence_io.py
レイヤー列ディレクトリ（manifest.json + layer_<z>.png）の読み書きと PNG 入出力を提供します:
- write_sequence: LayerSequence をディレクトリに書き出す
- read_sequence: ディレクトリから LayerSequence を読み込む（manifest の z 順）
- load_rgb / save_rgb / save_alpha / save_rgba: 8bit PNG との相互変換
"""
import json
import logging
import os
from typing import List, Optional, Sequence

import numpy as np
from PIL import Image, UnidentifiedImageError
from pydantic import ValidationError

from ._errors import (
    CanvasMismatchError,
    CorruptLayerError,
    LayerCountMismatchError,
    ManifestFormatError,
    ManifestNotFoundError,
)
from ._type import CanvasSize, LayerEntry, ResizeRecord, SequenceManifest
from .raster import LayerSequence
from .validate import PIXEL_DTYPE, validate_sequence

logger = logging.getLogger(__name__)

MANIFEST_NAME = "manifest.json"


def to_uint8(arr: np.ndarray) -> np.ndarray:
    return np.rint(np.clip(arr, 0.0, 1.0) * 255.0).astype(np.uint8)


def from_uint8(arr: np.ndarray) -> np.ndarray:
    return arr.astype(PIXEL_DTYPE) / np.float32(255.0)


def save_rgba(path: str, rgba: np.ndarray) -> None:
    Image.fromarray(to_uint8(rgba)).save(path, format="PNG")


def save_rgb(path: str, rgb: np.ndarray) -> None:
    Image.fromarray(to_uint8(rgb)).save(path, format="PNG")


def save_alpha(path: str, alpha: np.ndarray) -> None:
    Image.fromarray(to_uint8(alpha)).save(path, format="PNG")


def load_rgb(path: str) -> np.ndarray:
    """
    任意の画像ファイルを [0,1] の RGB として読み込む。アルファは無視する。
    :raises FileNotFoundError: ファイルが存在しない
    :raises CorruptLayerError: 画像として解釈できない
    """
    if not os.path.exists(path):
        raise FileNotFoundError(f"Image file not found: {path}")
    try:
        with Image.open(path) as img:
            img.load()
            arr = np.asarray(img.convert("RGB"))
    except (UnidentifiedImageError, OSError) as e:
        raise CorruptLayerError(f"Cannot decode image {path}: {e}") from e
    return from_uint8(arr)


def _load_rgba(path: str) -> np.ndarray:
    try:
        with Image.open(path) as img:
            img.load()
            arr = np.asarray(img.convert("RGBA"))
    except (UnidentifiedImageError, OSError) as e:
        raise CorruptLayerError(f"Corrupt layer image {path}: {e}") from e
    return from_uint8(arr)


def read_manifest(directory: str) -> SequenceManifest:
    path = os.path.join(directory, MANIFEST_NAME)
    if not os.path.exists(path):
        raise ManifestNotFoundError(f"Manifest not found: {path}")
    try:
        with open(path, 'r', encoding='utf-8') as f:
            data = json.load(f)
        return SequenceManifest(**data)
    except (json.JSONDecodeError, ValidationError, TypeError) as e:
        raise ManifestFormatError(f"Invalid manifest {path}: {e}") from e


def read_sequence(directory: str) -> LayerSequence:
    """
    manifest.json を読み、z 順（ファイル名順ではない）にレイヤーを並べて返す。
    :raises ManifestNotFoundError: manifest.json が無い
    :raises ManifestFormatError: スキーマ不正
    :raises LayerCountMismatchError: manifest の枚数と画像ファイルが合わない
    :raises CanvasMismatchError: 画像サイズが canvas と異なる
    :raises CorruptLayerError: 画像が壊れている
    """
    manifest = read_manifest(directory)
    entries = sorted(manifest.layers, key=lambda e: e.z)
    present = [e for e in entries if os.path.isfile(os.path.join(directory, e.file))]
    if len(present) != len(entries):
        raise LayerCountMismatchError(
            f"layer count mismatch: manifest lists {len(entries)} layers "
            f"but {len(present)} image files were found in {directory}"
        )

    width, height = manifest.canvas.width, manifest.canvas.height
    layers: List[np.ndarray] = []
    for entry in entries:
        rgba = _load_rgba(os.path.join(directory, entry.file))
        if rgba.shape[:2] != (height, width):
            raise CanvasMismatchError(
                f"Layer z={entry.z} ({entry.file}) is {rgba.shape[1]}x{rgba.shape[0]}, "
                f"canvas is {width}x{height}"
            )
        layers.append(rgba)
    logger.debug("[LOAD] %s: %d layers, canvas %dx%d", directory, len(layers), width, height)
    seq = LayerSequence(canvas=(width, height), layers=tuple(layers))
    validate_sequence(seq)
    return seq


def write_sequence(
    seq: LayerSequence,
    directory: str,
    *,
    names: Optional[Sequence[Optional[str]]] = None,
    generator: Optional[str] = None,
    seed: Optional[int] = None,
    resize: Optional[ResizeRecord] = None,
) -> SequenceManifest:
    """
    レイヤー列をディレクトリへ書き出し、書いた manifest を返す。
    """
    os.makedirs(directory, exist_ok=True)
    entries = []
    for z, layer in enumerate(seq.layers):
        file_name = f"layer_{z}.png"
        save_rgba(os.path.join(directory, file_name), layer)
        name = names[z] if names is not None and z < len(names) else None
        entries.append(LayerEntry(z=z, file=file_name, name=name))

    manifest = SequenceManifest(
        canvas=CanvasSize(width=seq.width, height=seq.height),
        layers=entries,
        generator=generator,
        seed=seed,
        resize=resize,
    )
    with open(os.path.join(directory, MANIFEST_NAME), 'w', encoding='utf-8') as f:
        f.write(manifest.model_dump_json(indent=2))
    return manifest
