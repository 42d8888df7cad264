"""
src/layerpy/config_loader.py
分解・評価の設定を組み立て、ToolkitConfig モデルを返却します。
- プリセット (default/strict) を土台にする
- ユーザー JSON はプリセットの上に再帰的に重ねる（書かれていない項目はプリセットの値）
- 重ね合わせた結果を最後にまとめて検証する
"""
import json
import logging
import os
from typing import Any, Dict, List, Optional, Tuple
from pydantic import ValidationError
from ._type import ToolkitConfig

logger = logging.getLogger(__name__)

# パッケージ内の config ディレクトリ
PKG_DIR = os.path.dirname(__file__)
CONFIG_DIR = os.path.join(PKG_DIR, "config")

# プリセット別の設定ファイルパス
DEFAULT_CONFIG_PATHS = {
    key: os.path.join(CONFIG_DIR, f"{key}_config.json")
    for key in ("default", "strict")
}


def _read_json(path: str) -> Dict[str, Any]:
    if not os.path.exists(path):
        raise FileNotFoundError(f"Configuration file not found: {path}")
    with open(path, "r", encoding="utf-8") as f:
        data = json.load(f)
    if not isinstance(data, dict):
        raise ValueError(f"configuration root must be an object: {path}")
    return data


def merge_config_data(base: Dict[str, Any], override: Dict[str, Any]) -> Dict[str, Any]:
    """
    override を base に再帰的に重ねた新しい辞書を返す
    辞書同士はキーごとに重ね、それ以外の値は override が置き換える
    """
    merged = dict(base)
    for key, value in override.items():
        if isinstance(value, dict) and isinstance(merged.get(key), dict):
            merged[key] = merge_config_data(merged[key], value)
        else:
            merged[key] = value
    return merged


def load_preset_data(preset: str = "default") -> Dict[str, Any]:
    key = preset.lower()
    if key not in DEFAULT_CONFIG_PATHS:
        raise ValueError(f"preset must be one of {sorted(DEFAULT_CONFIG_PATHS)}: '{preset}'")
    return _read_json(DEFAULT_CONFIG_PATHS[key])


def load_toolkit_config(path: Optional[str] = None, preset: str = "default") -> ToolkitConfig:
    """
    プリセットにユーザー設定ファイルを重ねて ToolkitConfig を返す
    優先順位はファイル > プリセット（コマンドラインのフラグは cli 側でさらに上書きする）
    :param path: ユーザー設定ファイル（部分的な JSON でよい）
    :param preset: 土台にする内部プリセット ('default' or 'strict')
    :raises FileNotFoundError: ファイルが存在しない
    :raises ValueError: preset が不正、または JSON のルートがオブジェクトでない
    :raises ValidationError: モデルバリデーション失敗
    """
    data = load_preset_data(preset)
    if path:
        user = _read_json(os.path.abspath(path))
        logger.debug("[CONFIG] overlay %s on preset '%s'", path, preset)
        data = merge_config_data(data, user)
    return ToolkitConfig(**data)


def check_toolkit_config(path: Optional[str] = None, preset: str = "default") -> Tuple[bool, List[str]]:
    """
    設定の妥当性を検証し、結果とエラーリストを返します。
    :return: (True, []) なら正常、(False, errors) なら不正箇所をリストで返却
    """
    errors: List[str] = []
    try:
        load_toolkit_config(path, preset)
        return True, []
    except ValidationError as e:
        for err in e.errors():
            loc = ".".join(str(x) for x in err['loc'])
            errors.append(f"{loc}: {err['msg']}")
    except (FileNotFoundError, ValueError) as e:
        errors.append(str(e))
    return False, errors
