"""
src/layerpy/_protocol.py
外部プロセスバックエンドとの通信フレーム (LDBK) を生成・解析するクラスです:
- encode_request: 画像（とマスク）から要求フレームのバイト列を生成します
- decode_request: 要求フレームを解析します（スタブ／テスト用）
- encode_response: 応答フレームを生成します（スタブ／テスト用）
- decode_response: 応答フレームを解析し、アルファまたは RGB 画像を返します

フレーム: 16 バイトのヘッダー (magic "LDBK", version u8, mode u8, width u32, height u32, 予約 2 バイト)
に続けて行優先の 8bit 画素列。整数はすべてリトルエンディアン。
"""
import struct
from dataclasses import dataclass
from typing import Dict, Optional, Tuple

import numpy as np

from ._errors import MalformedOutputError

MAGIC = b"LDBK"
VERSION = 1

MODE_MATTING = 1
MODE_INPAINTING = 2

mode_codes: Dict[str, int] = {
    "matting": MODE_MATTING,
    "inpainting": MODE_INPAINTING,
}


@dataclass(frozen=True)
class FrameHeader:
    mode: int
    width: int
    height: int


class FrameCodec:
    HEADER = struct.Struct("<4sBBII2x")

    def __init__(self, version: int = VERSION):
        self.version = version

    def _pack_header(self, mode: int, width: int, height: int) -> bytes:
        return self.HEADER.pack(MAGIC, self.version, mode, width, height)

    def _unpack_header(self, data: bytes) -> FrameHeader:
        if len(data) < self.HEADER.size:
            raise MalformedOutputError(f"frame too short: {len(data)} bytes, header needs {self.HEADER.size}")
        magic, version, mode, width, height = self.HEADER.unpack_from(data)
        if magic != MAGIC:
            raise MalformedOutputError(f"bad frame magic {magic!r}")
        if version != self.version:
            raise MalformedOutputError(f"unsupported frame version {version}")
        if mode not in mode_codes.values():
            raise MalformedOutputError(f"unknown frame mode {mode}")
        return FrameHeader(mode=mode, width=width, height=height)

    def encode_request(self, mode: str, image_u8: np.ndarray, mask: Optional[np.ndarray] = None) -> bytes:
        """
        image_u8 は H×W×3 の uint8。アルファ 255 を付けて RGBA として送る。
        inpainting では mask (H×W bool) を 0/255 の 8bit 面として続ける。
        """
        code = mode_codes.get(mode)
        if code is None:
            raise ValueError(f"Invalid mode: {mode}")
        height, width = image_u8.shape[:2]
        rgba = np.concatenate([image_u8, np.full((height, width, 1), 255, dtype=np.uint8)], axis=2)
        body = rgba.tobytes()
        if code == MODE_INPAINTING:
            if mask is None:
                raise ValueError("inpainting requests require a mask")
            body += (np.asarray(mask, dtype=bool).astype(np.uint8) * 255).tobytes()
        return self._pack_header(code, width, height) + body

    def decode_request(self, data: bytes) -> Tuple[FrameHeader, np.ndarray, Optional[np.ndarray]]:
        header = self._unpack_header(data)
        n = header.width * header.height
        body = np.frombuffer(data, dtype=np.uint8, offset=self.HEADER.size)
        expected = n * 4 + (n if header.mode == MODE_INPAINTING else 0)
        if body.size != expected:
            raise MalformedOutputError(f"request body is {body.size} bytes, expected {expected}")
        rgba = body[:n * 4].reshape(header.height, header.width, 4)
        mask = body[n * 4:].reshape(header.height, header.width) > 127 if header.mode == MODE_INPAINTING else None
        return header, rgba, mask

    def encode_response(self, mode: str, payload_u8: np.ndarray) -> bytes:
        height, width = payload_u8.shape[:2]
        return self._pack_header(mode_codes[mode], width, height) + np.ascontiguousarray(payload_u8).tobytes()

    def decode_response(self, data: bytes, mode: str, width: int, height: int) -> np.ndarray:
        """
        応答フレームを解析する。寸法・モード・本体長が要求と合わなければ MalformedOutputError。
        matting は H×W、inpainting は H×W×3 の uint8 を返す。
        """
        header = self._unpack_header(data)
        if header.mode != mode_codes[mode]:
            raise MalformedOutputError(f"response mode {header.mode} does not match request mode {mode}")
        if (header.width, header.height) != (width, height):
            raise MalformedOutputError(
                f"response is {header.width}x{header.height}, expected {width}x{height}"
            )
        channels = 1 if mode == "matting" else 3
        body = np.frombuffer(data, dtype=np.uint8, offset=self.HEADER.size)
        if body.size != width * height * channels:
            raise MalformedOutputError(
                f"response body is {body.size} bytes, expected {width * height * channels}"
            )
        if channels == 1:
            return body.reshape(height, width).copy()
        return body.reshape(height, width, 3).copy()
