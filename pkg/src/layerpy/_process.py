"""
src/layerpy/_process.py
外部プロセスとの入出力を管理するクラスを提供します:
- send_and_receive: プロセスを起動し、標準入力へ送信して標準出力をすべて受け取ります
呼び出しごとに新しいプロセスを起動するため、同時呼び出しは互いに独立です。
"""
import logging
import subprocess
from typing import List, Optional, Sequence

from ._errors import BackendError, BackendExitError, BackendTimeoutError

logger = logging.getLogger(__name__)

# エラーメッセージに含める標準エラー出力の末尾
STDERR_TAIL = 2000


class ProcessIO:
    def __init__(self, executable: str, args: Optional[Sequence[str]] = None, timeout: float = 60.0):
        self.executable = executable
        self.args: List[str] = list(args or [])
        self.timeout = timeout

    @property
    def command(self) -> List[str]:
        return [self.executable] + self.args

    def send_and_receive(self, data: bytes) -> bytes:
        """
        data を標準入力に書き込み、プロセス終了後の標準出力を返す
        """
        try:
            result = subprocess.run(
                self.command,
                input=data,
                capture_output=True,
                timeout=self.timeout,
                check=False,
            )
        except subprocess.TimeoutExpired as e:
            raise BackendTimeoutError(f"backend {self.executable} timed out after {self.timeout} s") from e
        except OSError as e:
            raise BackendError(f"cannot start backend {self.executable}: {e}") from e

        if result.returncode != 0:
            stderr = result.stderr.decode('utf-8', errors='replace')[-STDERR_TAIL:]
            raise BackendExitError(
                f"backend {self.executable} exited with status {result.returncode}: {stderr.strip()}",
                returncode=result.returncode,
                stderr=stderr,
            )
        logger.debug("[BACKEND] %s -> %d bytes", self.executable, len(result.stdout))
        return result.stdout
