"""
tests/test_refine.py

refine.py モジュールを pytest で検証するテストモジュールです:
- connected_components / flatness / extract_palette
- refine_background: 平坦な周囲色へのスナップ
- refine_foreground: フラットな前景のアルファ再構成
"""

import numpy as np
import pytest

from src.layerpy._errors import DimensionMismatchError
from src.layerpy._type import RefineConfig
from src.layerpy.backends import harmonic_inpaint
from src.layerpy.color import delta_e, srgb_to_lab
from src.layerpy.refine import (
    boundary_alpha,
    connected_components,
    extract_palette,
    flatness,
    refine_background,
    refine_foreground,
)

RED = np.array([1.0, 0.0, 0.0], dtype=np.float32)
WHITE = np.array([1.0, 1.0, 1.0], dtype=np.float32)
BLUE = np.array([0.0, 0.0, 1.0], dtype=np.float32)

# --- テスト用ヘルパー関数 ---

def red_square_on_white(size=16, top=4, bottom=12):
    image = np.ones((size, size, 3), dtype=np.float32)
    alpha = np.zeros((size, size), dtype=np.float32)
    image[top:bottom, top:bottom] = RED
    alpha[top:bottom, top:bottom] = 1.0
    return image, alpha

# --- connected_components のテスト ---

def test_components_sorted_by_area_then_raster_order():
    alpha = np.zeros((6, 6), dtype=np.float32)
    alpha[0, 4:6] = 1.0          # 面積 2（右上）
    alpha[3:5, 0:2] = 1.0        # 面積 4
    alpha[5, 4:6] = 1.0          # 面積 2（右下）
    regions = connected_components(alpha, 0.5)
    assert [r.area for r in regions] == [4, 2, 2]
    assert regions[0].bbox == (3, 0, 5, 2)
    assert regions[1].bbox == (0, 4, 1, 6)


def test_components_use_four_connectivity():
    alpha = np.eye(3, dtype=np.float32)
    assert len(connected_components(alpha, 0.5)) == 3


def test_components_empty():
    assert connected_components(np.zeros((3, 3)), 0.5) == []

# --- flatness のテスト ---

def test_flatness_constant_image():
    image = np.full((5, 5, 3), 0.3, dtype=np.float32)
    assert flatness(image, np.ones((5, 5), bool), RefineConfig()) == 1.0


def test_flatness_noise_is_low():
    rng = np.random.default_rng(0)
    image = rng.random((10, 10, 3)).astype(np.float32)
    assert flatness(image, np.ones((10, 10), bool), RefineConfig()) < 0.2


def test_flatness_empty_region():
    with pytest.raises(ValueError):
        flatness(np.zeros((3, 3, 3)), np.zeros((3, 3), bool), RefineConfig())

# --- extract_palette のテスト ---

def test_palette_ordered_by_frequency():
    pixels = np.array([RED] * 70 + [[0.0, 0.0, 1.0]] * 30, dtype=np.float32)
    palette = extract_palette(pixels, 4, RefineConfig())
    assert len(palette) == 2
    assert np.allclose(palette.rgb[0], RED)
    assert palette.weights.tolist() == pytest.approx([0.7, 0.3])


def test_palette_merges_near_colors():
    pixels = np.array([RED] * 50 + [[0.99, 0.0, 0.0]] * 50, dtype=np.float32)
    palette = extract_palette(pixels, 4, RefineConfig())
    assert len(palette) == 1
    assert palette.weights.sum() == pytest.approx(1.0)


def test_palette_respects_max_colors():
    rng = np.random.default_rng(1)
    palette = extract_palette(rng.random((500, 3)), 3, RefineConfig())
    assert len(palette) <= 3

# --- refine_background のテスト ---

def test_background_snaps_to_flat_surroundings():
    completed = np.ones((20, 20, 3), dtype=np.float32)
    mask = np.zeros((20, 20), dtype=bool)
    mask[6:14, 6:14] = True
    completed[mask] = 0.9
    out = refine_background(completed, mask, RefineConfig())
    assert np.allclose(out, 1.0)


def test_background_two_tone_snaps_per_side():
    completed = np.zeros((20, 20, 3), dtype=np.float32)
    completed[:, 10:] = 1.0
    mask = np.zeros((20, 20), dtype=bool)
    mask[6:14, 6:14] = True
    completed[6:14, 6:10] = 0.1
    completed[6:14, 10:14] = 0.85
    out = refine_background(completed, mask, RefineConfig())
    assert np.allclose(out[6:14, 6:10], 0.0)
    assert np.allclose(out[6:14, 10:14], 1.0)


def test_background_textured_surroundings_unchanged():
    rng = np.random.default_rng(2)
    completed = rng.random((20, 20, 3)).astype(np.float32)
    mask = np.zeros((20, 20), dtype=bool)
    mask[6:14, 6:14] = True
    out = refine_background(completed, mask, RefineConfig())
    assert np.array_equal(out, completed)


def test_background_never_changes_unmasked_pixels():
    rng = np.random.default_rng(3)
    completed = rng.random((12, 12, 3)).astype(np.float32)
    mask = np.zeros((12, 12), dtype=bool)
    mask[2:5, 2:5] = True
    out = refine_background(completed, mask, RefineConfig())
    assert np.array_equal(out[~mask], completed[~mask])


def test_background_two_tone_harmonic_fill_snaps_to_palette():
    color_a = np.array([0.2, 0.4, 0.8], dtype=np.float32)
    color_b = np.array([0.9, 0.6, 0.1], dtype=np.float32)
    image = np.empty((32, 32, 3), dtype=np.float32)
    image[:, :16] = color_a
    image[:, 16:] = color_b
    mask = np.zeros((32, 32), dtype=bool)
    mask[10:22, 10:22] = True
    raw = harmonic_inpaint(image, mask)

    def on_palette(pixels):
        return np.all(pixels == color_a, axis=-1) | np.all(pixels == color_b, axis=-1)

    # 調和補完だけでは継ぎ目付近に中間色ができる
    assert not np.all(on_palette(raw[mask]))
    out = refine_background(raw, mask, RefineConfig())
    assert np.all(on_palette(out[mask]))
    # 各画素は補完色に Lab で近い方の色になる
    lab = srgb_to_lab(raw[mask])
    closer_to_a = delta_e(lab, srgb_to_lab(color_a)) <= delta_e(lab, srgb_to_lab(color_b))
    expected = np.where(closer_to_a[:, None], color_a, color_b)
    assert np.array_equal(out[mask], expected)

# --- boundary_alpha のテスト ---

def test_boundary_alpha_recovers_half_coverage():
    pixel = 0.5 * RED + 0.5 * WHITE
    alpha, ok = boundary_alpha(pixel[None], WHITE[None], RED[None])
    assert ok[0]
    assert alpha[0] == pytest.approx(0.5)


def test_boundary_alpha_degenerate_when_palette_equals_backdrop():
    _, ok = boundary_alpha(WHITE[None], WHITE[None], WHITE[None])
    assert not ok[0]

# --- refine_foreground のテスト ---

def test_foreground_is_stable_on_exact_hard_matte():
    image, alpha = red_square_on_white()
    backdrop = np.ones_like(image)
    out = refine_foreground(image, alpha, backdrop, RefineConfig())
    assert np.array_equal(out, alpha)


def test_foreground_fills_under_estimated_alpha():
    image, alpha = red_square_on_white()
    backdrop = np.ones_like(image)
    weak = alpha * 0.7
    out = refine_foreground(image, weak, backdrop, RefineConfig())
    assert np.array_equal(out, alpha)


def test_foreground_textured_region_keeps_alpha():
    rng = np.random.default_rng(4)
    image = rng.random((16, 16, 3)).astype(np.float32)
    alpha = np.zeros((16, 16), dtype=np.float32)
    alpha[4:12, 4:12] = 0.8
    out = refine_foreground(image, alpha, np.ones_like(image), RefineConfig())
    assert np.array_equal(out, alpha)


def test_foreground_empty_alpha_is_unchanged():
    image, _ = red_square_on_white()
    alpha = np.zeros((16, 16), dtype=np.float32)
    out = refine_foreground(image, alpha, np.ones_like(image), RefineConfig())
    assert np.array_equal(out, alpha)


def test_foreground_keeps_exact_soft_edge():
    image, alpha = red_square_on_white()
    # パレット色に近い縁（一致半径内）と、淡い縁
    image[4:12, 12] = 0.96 * RED + 0.04 * WHITE
    alpha[4:12, 12] = 0.96
    image[4:12, 13] = 0.25 * RED + 0.75 * WHITE
    alpha[4:12, 13] = 0.25
    out = refine_foreground(image, alpha, np.ones_like(image), RefineConfig())
    assert np.array_equal(out, alpha)


def test_foreground_restores_missing_chunk_of_ring():
    image = np.ones((24, 24, 3), dtype=np.float32)
    image[4:20, 4:20] = BLUE
    image[8:16, 8:16] = WHITE
    ring = np.zeros((24, 24), dtype=np.float32)
    ring[4:20, 4:20] = 1.0
    ring[8:16, 8:16] = 0.0
    alpha = ring.copy()
    alpha[4:8, 8:16] = 0.0
    out = refine_foreground(image, alpha, np.ones_like(image), RefineConfig())
    assert np.array_equal(out, ring)


def test_foreground_ignores_synthesized_pixels():
    image, alpha = red_square_on_white()
    # 直前のイテレーションで補完された、前景と同じ色の列
    image[4:12, 12] = RED
    backdrop = np.ones_like(image)
    grown = refine_foreground(image, alpha, backdrop, RefineConfig())
    assert np.all(grown[4:12, 12] == 1.0)

    synthesized = np.zeros((16, 16), dtype=bool)
    synthesized[4:12, 12] = True
    kept = refine_foreground(image, alpha, backdrop, RefineConfig(), synthesized=synthesized)
    assert np.array_equal(kept, alpha)


def test_foreground_drops_blob_without_palette_support():
    image = np.ones((16, 16, 3), dtype=np.float32)
    image[2:8, 2:8] = RED
    alpha = np.zeros((16, 16), dtype=np.float32)
    alpha[2:8, 2:8] = 1.0
    # 白地の上の誤検出ブロブが、淡いアルファで正方形とつながっている
    alpha[8:10, 3] = 0.3
    alpha[10:13, 2:5] = 1.0
    out = refine_foreground(image, alpha, np.ones_like(image), RefineConfig())
    assert np.all(out[2:8, 2:8] == 1.0)
    assert np.all(out[10:13, 2:5] == 0.0)
    assert np.array_equal(out[8:10, 3], alpha[8:10, 3])


def test_foreground_rejects_mismatched_synthesized_mask():
    image, alpha = red_square_on_white()
    with pytest.raises(DimensionMismatchError):
        refine_foreground(image, alpha, np.ones_like(image), RefineConfig(), synthesized=np.zeros((4, 4), dtype=bool))
