"""
tests/test_raster.py

raster.py モジュールを pytest で検証するテストモジュールです:
- LayerSequence: 生成時の不変条件
- blend / composite / unblend: アルファブレンドとその逆算
- merge_layers: over 合成による2レイヤーの統合
"""

import numpy as np
import pytest

from src.layerpy._errors import DimensionMismatchError, EmptySequenceError
from src.layerpy.raster import (
    LayerSequence,
    blend,
    composite,
    make_layer,
    merge_all,
    merge_layers,
    opaque_layer,
    stack_sequence,
    unblend,
)
from src.layerpy.validate import EPS_ALPHA

# --- テスト用ヘルパー関数 ---

def random_layer(rng, h=6, w=5):
    return rng.random((h, w, 4)).astype(np.float32)


def naive_composite(layers):
    """画素ごとのループで合成する比較用実装"""
    h, w = layers[0].shape[:2]
    out = np.zeros((h, w, 3))
    for y in range(h):
        for x in range(w):
            c = layers[0][y, x, :3].astype(np.float64)
            for layer in layers[1:]:
                a = float(layer[y, x, 3])
                c = layer[y, x, :3] * a + c * (1.0 - a)
            out[y, x] = c
    return out

# --- LayerSequence のテスト ---

def test_sequence_requires_a_layer():
    with pytest.raises(EmptySequenceError):
        LayerSequence.from_layers([])


def test_sequence_rejects_mixed_sizes():
    with pytest.raises(DimensionMismatchError):
        LayerSequence(canvas=(5, 6), layers=(np.zeros((6, 5, 4), np.float32), np.zeros((5, 5, 4), np.float32)))


def test_sequence_canvas_is_width_height():
    seq = LayerSequence.from_layers([np.zeros((6, 5, 4))])
    assert seq.canvas == (5, 6)
    assert (seq.width, seq.height) == (5, 6)
    assert len(seq) == 1

# --- blend のテスト ---

def test_blend_opaque_and_transparent_identities():
    rng = np.random.default_rng(0)
    layer = random_layer(rng)
    backdrop = rng.random((6, 5, 3)).astype(np.float32)
    layer[..., 3] = 1.0
    assert np.allclose(blend(layer, backdrop), layer[..., :3])
    layer[..., 3] = 0.0
    assert np.allclose(blend(layer, backdrop), backdrop)


def test_blend_single_pixel():
    layer = np.array([[[1.0, 1.0, 1.0, 0.5]]], dtype=np.float32)
    backdrop = np.full((1, 1, 3), 0.2, dtype=np.float32)
    assert blend(layer, backdrop)[0, 0, 0] == pytest.approx(0.6, abs=1e-7)


def test_blend_dimension_mismatch():
    with pytest.raises(DimensionMismatchError):
        blend(np.zeros((2, 2, 4)), np.zeros((3, 2, 3)))

# --- composite のテスト ---

def test_composite_single_layer_ignores_background_alpha():
    layer = np.full((2, 2, 4), 0.3, dtype=np.float32)
    seq = LayerSequence.from_layers([layer])
    assert np.allclose(composite(seq), 0.3)


def test_composite_two_opaque_layers():
    back = np.zeros((2, 2, 4), np.float32)
    back[..., 3] = 1.0
    front = np.ones((2, 2, 4), np.float32)
    front[0, 0, 3] = 0.0
    out = composite(LayerSequence.from_layers([back, front]))
    assert out[0, 0].tolist() == [0.0, 0.0, 0.0]
    assert out[1, 1].tolist() == [1.0, 1.0, 1.0]


def test_composite_matches_naive_loop():
    rng = np.random.default_rng(1)
    layers = [random_layer(rng) for _ in range(4)]
    out = composite(LayerSequence.from_layers(layers))
    assert np.max(np.abs(out - naive_composite(layers))) < 1e-5

# --- unblend のテスト ---

def test_unblend_inverts_blend():
    # α >= 1/255 の画素では blend(unblend(x)) が x に戻る
    rng = np.random.default_rng(2)
    for _ in range(50):
        x = rng.random((16, 16, 3)).astype(np.float32)
        bg = rng.random((16, 16, 3)).astype(np.float32)
        alpha = rng.random((16, 16)).astype(np.float32)
        fg = unblend(x, bg, alpha)
        layer = make_layer(fg, alpha)
        # 逆算した色が [0,1] に収まる画素だけが厳密に戻る
        exact = (alpha >= EPS_ALPHA) & np.all(
            np.abs((x - bg * (1 - alpha[..., None])) / np.maximum(alpha[..., None], EPS_ALPHA) - 0.5) <= 0.5,
            axis=2,
        )
        diff = np.abs(blend(layer, bg) - x)[exact]
        assert diff.size == 0 or diff.max() <= 1e-5


def test_unblend_zero_alpha_gives_zero_color():
    x = np.full((2, 2, 3), 0.4, np.float32)
    out = unblend(x, x, np.zeros((2, 2), np.float32))
    assert np.all(out == 0.0)


def test_unblend_alpha_shape_mismatch():
    with pytest.raises(DimensionMismatchError):
        unblend(np.zeros((2, 2, 3)), np.zeros((2, 2, 3)), np.zeros((3, 3)))

# --- merge_layers のテスト ---

def test_merge_disjoint_layers_is_exact():
    lower = np.zeros((2, 2, 4), np.float32)
    upper = np.zeros((2, 2, 4), np.float32)
    lower[0, 0] = [0.1, 0.2, 0.3, 0.4]
    upper[1, 1] = [0.7, 0.6, 0.5, 0.3]
    merged = merge_layers(lower, upper)
    assert np.array_equal(merged[0, 0], lower[0, 0])
    assert np.array_equal(merged[1, 1], upper[1, 1])
    assert np.all(merged[0, 1] == 0.0)


def test_merge_preserves_composite_appearance():
    rng = np.random.default_rng(3)
    back = random_layer(rng)
    back[..., 3] = 1.0
    lower, upper = random_layer(rng), random_layer(rng)
    split = composite(LayerSequence.from_layers([back, lower, upper]))
    merged = composite(LayerSequence.from_layers([back, merge_layers(lower, upper)]))
    assert np.max(np.abs(split - merged)) < 1e-5


def test_merge_alpha_is_union():
    lower = np.zeros((1, 1, 4), np.float32)
    upper = np.zeros((1, 1, 4), np.float32)
    lower[..., 3] = 0.5
    upper[..., 3] = 0.5
    assert merge_layers(lower, upper)[0, 0, 3] == pytest.approx(0.75)


def test_merge_all_and_stack_sequence():
    rgb = np.zeros((3, 3, 3), np.float32)
    fg = [np.ones((3, 3, 4), np.float32) * 0.5 for _ in range(2)]
    seq = stack_sequence(rgb, fg)
    assert len(seq) == 3
    assert np.all(seq[0][..., 3] == 1.0)
    assert merge_all(fg).shape == (3, 3, 4)
    with pytest.raises(EmptySequenceError):
        merge_all([])


def test_opaque_layer_sets_alpha():
    assert np.all(opaque_layer(np.zeros((2, 2, 3)))[..., 3] == 1.0)
