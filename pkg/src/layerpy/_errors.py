"""
src/layerpy/_errors.py
パッケージ共通の例外クラスを定義します:
- 入力の不正は ValueError 派生、実行時の失敗は RuntimeError 派生
- バックエンド関連の例外は失敗したイテレーション番号を保持できます
"""
from typing import Any, Optional


class DimensionMismatchError(ValueError):
    """画像・レイヤーのサイズが一致しない"""


class EmptySequenceError(ValueError):
    """レイヤー列が空"""


class SequenceLoadError(ValueError):
    """レイヤー列ディレクトリの読み込み失敗（基底クラス）"""


class ManifestNotFoundError(SequenceLoadError):
    pass


class ManifestFormatError(SequenceLoadError):
    pass


class LayerCountMismatchError(SequenceLoadError):
    pass


class CanvasMismatchError(SequenceLoadError):
    pass


class CorruptLayerError(SequenceLoadError):
    pass


class GenerationError(ValueError):
    """DesignSpec の条件を満たすデザインを生成できない"""


class InpaintingError(ValueError):
    """境界データが存在せず補完できない"""


class BackendError(RuntimeError):
    """
    マッティング／インペインティングのバックエンド失敗
    iteration はパイプラインが判明した時点で設定する（1始まり）
    """

    def __init__(self, message: str, iteration: Optional[int] = None):
        super().__init__(message)
        self.iteration = iteration

    def __str__(self) -> str:
        base = super().__str__()
        if self.iteration is None:
            return base
        return f"{base} (iteration {self.iteration})"


class BackendTimeoutError(BackendError):
    pass


class BackendExitError(BackendError):
    def __init__(self, message: str, returncode: int, stderr: str = "", iteration: Optional[int] = None):
        super().__init__(message, iteration)
        self.returncode = returncode
        self.stderr = stderr


class MalformedOutputError(BackendError):
    pass


class PipelineError(RuntimeError):
    """分解処理中のバックエンド失敗。途中までのトレースを保持する"""

    def __init__(self, message: str, iteration: int, trace: Any, cause: Optional[BaseException] = None):
        super().__init__(f"{message} (iteration {iteration})")
        self.iteration = iteration
        self.trace = trace
        self.cause = cause
