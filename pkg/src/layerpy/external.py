"""
src/layerpy/external.py
ExternalBackendConfig を元に、外部プロセスのマッティング／インペインティングとの通信を管理します。
- フレームの生成・送受信・解析と、出力の契約チェックを提供
"""
import logging
import sys
import time
from typing import Optional, Union

import numpy as np

from ._errors import MalformedOutputError
from ._process import ProcessIO
from ._protocol import FrameCodec
from ._type import ExternalBackendConfig
from .sequence_io import from_uint8, to_uint8
from .validate import check_matting_output, validate_mask, validate_rgb

logger = logging.getLogger(__name__)


class ExternalBackend:
    """
    外部プロセスとの通信を管理するクラス
    - プロセス入出力とフレームの生成・解析を統合
    """
    mode: str = ""

    def __init__(self, config: ExternalBackendConfig, process_io: ProcessIO, codec: FrameCodec):
        if config.mode != self.mode:
            raise ValueError(f"{type(self).__name__} requires mode '{self.mode}', got '{config.mode}'")
        self._config = config
        self._process = process_io
        self._codec = codec

    @classmethod
    def from_config(cls, config: ExternalBackendConfig) -> "ExternalBackend":
        return cls(config, ProcessIO(config.executable, config.args, config.timeout), FrameCodec())

    @classmethod
    def from_path(cls, path: str, timeout: float = 60.0) -> "ExternalBackend":
        """
        実行ファイルのパスから生成する。.py はこのインタプリタで起動する。
        """
        if path.endswith(".py"):
            config = ExternalBackendConfig(executable=sys.executable, args=[path], mode=cls.mode, timeout=timeout)
        else:
            config = ExternalBackendConfig(executable=path, mode=cls.mode, timeout=timeout)
        return cls.from_config(config)

    def _execute(self, request: bytes, width: int, height: int) -> np.ndarray:
        t0 = time.time()
        raw = self._process.send_and_receive(request)
        t1 = time.time()
        logger.debug("[BACKEND] %s %s RTT: %.1f ms", self.mode, self._config.executable, (t1 - t0) * 1000)
        return self._codec.decode_response(raw, self.mode, width, height)


class ExternalMatting(ExternalBackend):
    mode = "matting"

    def __call__(self, image: np.ndarray) -> np.ndarray:
        image = validate_rgb(image)
        height, width = image.shape[:2]
        request = self._codec.encode_request(self.mode, to_uint8(image))
        alpha = from_uint8(self._execute(request, width, height))
        return check_matting_output(alpha, (height, width))


class ExternalInpainting(ExternalBackend):
    mode = "inpainting"

    def __call__(self, image: np.ndarray, mask: np.ndarray) -> np.ndarray:
        """
        8bit で往復するため、マスク外は入力画素をそのまま戻す。
        """
        image = validate_rgb(image)
        mask = validate_mask(mask, image.shape[:2])
        height, width = image.shape[:2]
        request = self._codec.encode_request(self.mode, to_uint8(image), mask)
        completed = from_uint8(self._execute(request, width, height))
        if completed.shape != image.shape:
            raise MalformedOutputError(f"inpainting output shape {completed.shape} does not match {image.shape}")
        return np.where(mask[..., None], completed, image)


def external_backend(
    config: ExternalBackendConfig, image: np.ndarray, mask: Optional[np.ndarray] = None
) -> np.ndarray:
    """設定の mode に応じて外部バックエンドを1回呼び出す"""
    backend: Union[ExternalMatting, ExternalInpainting]
    if config.mode == "matting":
        backend = ExternalMatting.from_config(config)
        return backend(image)
    if mask is None:
        raise ValueError("external inpainting requires a mask")
    backend = ExternalInpainting.from_config(config)
    return backend(image, mask)
