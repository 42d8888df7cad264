"""
tests/test_process.py

ProcessIO クラスを pytest で検証するテストモジュールです:
- send_and_receive: 標準入出力の往復
- タイムアウト・終了コード・起動失敗の例外
"""

import sys

import pytest

from src.layerpy._errors import BackendError, BackendExitError, BackendTimeoutError
from src.layerpy._process import ProcessIO


def python_io(code, timeout=10.0):
    return ProcessIO(sys.executable, ["-c", code], timeout=timeout)

# --- 正常系 ---

def test_send_and_receive_echo():
    io = python_io("import sys; sys.stdout.buffer.write(sys.stdin.buffer.read()[::-1])")
    assert io.send_and_receive(b"abc") == b"cba"


def test_command_includes_args():
    io = ProcessIO("tool", ["--fast"])
    assert io.command == ["tool", "--fast"]

# --- 異常系 ---

def test_nonzero_exit_carries_status_and_stderr():
    io = python_io("import sys; sys.stderr.write('model missing'); sys.exit(3)")
    with pytest.raises(BackendExitError) as excinfo:
        io.send_and_receive(b"")
    assert excinfo.value.returncode == 3
    assert "model missing" in excinfo.value.stderr
    assert "status 3" in str(excinfo.value)


def test_timeout():
    io = python_io("import time; time.sleep(5)", timeout=0.2)
    with pytest.raises(BackendTimeoutError):
        io.send_and_receive(b"")


def test_missing_executable(tmp_path):
    io = ProcessIO(str(tmp_path / "no-such-backend"))
    with pytest.raises(BackendError) as excinfo:
        io.send_and_receive(b"")
    assert "cannot start backend" in str(excinfo.value)
