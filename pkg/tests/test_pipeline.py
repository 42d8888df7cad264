"""
tests/test_pipeline.py

pipeline.py を pytest で検証するテストモジュールです:
- should_terminate / mask_for_inpainting: 終了判定と補完マスク
- Decomposer.run: 層の取り出し順と終了条件
- バックエンド失敗時の PipelineError とトレース
"""

import json
import logging

import numpy as np
import pytest

from src.layerpy._errors import BackendError, MalformedOutputError, PipelineError
from src.layerpy._type import DesignSpec, PipelineConfig
from src.layerpy.backends import HarmonicInpainting, HeuristicMatting, OracleMatting
from src.layerpy.metrics import evaluate
from src.layerpy.pipeline import Decomposer, decompose, mask_for_inpainting, should_terminate
from src.layerpy.raster import LayerSequence, composite
from src.layerpy.synth import generate_design

# --- テスト用ヘルパー関数 ---

def disjoint_design(size=24):
    """白い背景に、重ならない赤と緑のハードエッジの正方形"""
    background = np.ones((size, size, 4), dtype=np.float32)
    red = np.zeros((size, size, 4), dtype=np.float32)
    red[3:9, 3:9] = [1.0, 0.0, 0.0, 1.0]
    green = np.zeros((size, size, 4), dtype=np.float32)
    green[14:20, 12:20] = [0.0, 1.0, 0.0, 1.0]
    return LayerSequence.from_layers([background, red, green])


class EmptyMatting:
    def __call__(self, image):
        return np.zeros(image.shape[:2], dtype=np.float32)


class FailingMatting:
    """2回目の呼び出しで失敗する"""

    def __init__(self, inner):
        self.inner = inner
        self.calls = 0

    def __call__(self, image):
        self.calls += 1
        if self.calls == 2:
            raise BackendError("model crashed")
        return self.inner(image)


class WrongShapeMatting:
    def __call__(self, image):
        return np.zeros((2, 2), dtype=np.float32)


class NoisyInpainting:
    """補完結果のマスク内にだけ ±0.05 の一様ノイズを足す"""

    def __init__(self, inner, seed):
        self.inner = inner
        self.rng = np.random.default_rng(seed)

    def __call__(self, image, mask):
        filled = self.inner(image, mask)
        noise = self.rng.uniform(-0.05, 0.05, size=filled.shape)
        noisy = np.clip(filled + noise, 0.0, 1.0).astype(np.float32)
        return np.where(mask[..., None], noisy, filled)


def synth_suite(count, size=128, **fields):
    return [
        generate_design(DesignSpec(seed=seed, canvas_width=size, canvas_height=size, **fields))
        for seed in range(count)
    ]


def has_distinct_layer_colors(seq):
    """前景レイヤーどうしが同じ色だと、合成画像上で境目が消えて正解が一意でなくなる"""
    colors = [tuple(layer[0, 0, :3].tolist()) for layer in seq.layers[1:]]
    return len(set(colors)) == len(colors)


def oracle_loop(designs, noise_seed=None, **flags):
    """正解マッティング＋調和補完で分解し、予算 0 の評価値の平均 (alpha IoU, RGB L1) を返す"""
    ious, l1s = [], []
    for truth in designs:
        inpainting = HarmonicInpainting()
        if noise_seed is not None:
            inpainting = NoisyInpainting(inpainting, noise_seed)
        seq, _ = decompose(composite(truth), PipelineConfig(**flags), OracleMatting(truth), inpainting)
        row = evaluate(seq, truth, max_edits=0).rows[0]
        ious.append(row.alpha_soft_iou)
        l1s.append(row.rgb_l1)
    return float(np.mean(ious)), float(np.mean(l1s))

# --- should_terminate のテスト ---

@pytest.mark.parametrize("count,expected", [(0, True), (4, True), (5, False)])
def test_should_terminate_threshold(count, expected):
    alpha = np.zeros((100, 100), dtype=np.float32)
    alpha.ravel()[:count] = 1.0
    assert should_terminate(alpha, PipelineConfig()) is expected


def test_should_terminate_ignores_faint_alpha():
    alpha = np.full((10, 10), 0.5, dtype=np.float32)
    assert should_terminate(alpha, PipelineConfig())

# --- mask_for_inpainting のテスト ---

def test_mask_dilates_to_square():
    alpha = np.zeros((15, 15), dtype=np.float32)
    alpha[7, 7] = 1.0
    mask = mask_for_inpainting(alpha, PipelineConfig())
    assert int(mask.sum()) == 49
    assert mask[4:11, 4:11].all()


def test_mask_without_dilation():
    alpha = np.zeros((5, 5), dtype=np.float32)
    alpha[2, 2] = 0.9
    mask = mask_for_inpainting(alpha, PipelineConfig(inpaint_dilation=0))
    assert int(mask.sum()) == 1

# --- Decomposer.run のテスト ---

def test_empty_matte_gives_single_background_layer():
    image = np.random.default_rng(0).random((8, 8, 3)).astype(np.float32)
    seq, trace = decompose(image, None, EmptyMatting(), HarmonicInpainting())
    assert len(seq) == 1
    assert np.array_equal(seq[0][..., :3], image)
    assert np.all(seq[0][..., 3] == 1.0)
    assert trace.termination == "empty-matte"
    assert len(trace) == 0


def test_iteration_limit():
    image = np.ones((24, 24, 3), dtype=np.float32)
    image[3:9, 3:9] = [1.0, 0.0, 0.0]
    image[14:20, 14:20] = [0.0, 0.0, 1.0]
    seq, trace = decompose(image, PipelineConfig(max_iterations=1), HeuristicMatting(), HarmonicInpainting())
    assert len(seq) == 2
    assert trace.termination == "max-iters"


def test_oracle_reconstructs_disjoint_design():
    truth = disjoint_design()
    image = composite(truth)
    seq, trace = decompose(image, PipelineConfig(), OracleMatting(truth), HarmonicInpainting())
    assert trace.termination == "empty-matte"
    # 重ならない2枚は1つのトップレイヤーグループになる
    assert len(seq) == 2
    assert np.max(np.abs(composite(seq) - image)) < 1e-5
    assert np.allclose(seq[0][..., :3], 1.0)
    row = evaluate(seq, truth, max_edits=0).rows[0]
    assert row.rgb_l1 < 1e-5
    assert row.alpha_soft_iou == pytest.approx(1.0)


def test_layers_are_back_to_front():
    truth = disjoint_design()
    image = composite(truth)
    seq, trace = Decomposer(OracleMatting(truth), HarmonicInpainting()).run(image)
    assert np.array_equal(trace.records[0].layer, seq[len(seq) - 1])


def test_refinement_can_be_disabled():
    truth = disjoint_design()
    image = composite(truth)
    config = PipelineConfig(refine_foreground=False, refine_background=False)
    seq, trace = decompose(image, config, OracleMatting(truth), HarmonicInpainting())
    record = trace.records[0]
    assert np.array_equal(record.backdrop_raw, record.backdrop_refined)
    assert np.array_equal(record.raw_alpha, record.refined_alpha)


def test_refinement_leaves_filled_pixels_alone():
    background = np.ones((24, 24, 4), dtype=np.float32)
    red = np.zeros((24, 24, 4), dtype=np.float32)
    red[2:14, 2:10] = [1.0, 0.0, 0.0, 1.0]
    green = np.zeros((24, 24, 4), dtype=np.float32)
    green[8:18, 6:16] = [0.0, 1.0, 0.0, 1.0]
    truth = LayerSequence.from_layers([background, red, green])
    # 2回目は、緑を消した跡の補完色（赤にスナップされうる）がパレット一致の対象から外れる
    _, trace = decompose(composite(truth), None, OracleMatting(truth), HarmonicInpainting())
    assert len(trace) == 2
    for record in trace.records:
        assert np.array_equal(record.raw_alpha, record.refined_alpha)

# --- バックエンド失敗のテスト ---

def test_backend_failure_keeps_partial_trace():
    truth = LayerSequence.from_layers(list(disjoint_design().layers))
    # 2枚目を1枚目と重ねて、2グループにする
    stacked = np.zeros_like(truth[2])
    stacked[5:12, 5:12] = [0.0, 1.0, 0.0, 1.0]
    truth = LayerSequence.from_layers([truth[0], truth[1], stacked])
    matting = FailingMatting(OracleMatting(truth))
    with pytest.raises(PipelineError) as excinfo:
        decompose(composite(truth), None, matting, HarmonicInpainting())
    err = excinfo.value
    assert err.iteration == 2
    assert len(err.trace) == 1
    assert err.trace.stopped_at == 2
    assert isinstance(err.cause, BackendError)
    assert err.cause.iteration == 2


def test_malformed_backend_output_is_a_pipeline_error():
    with pytest.raises(PipelineError) as excinfo:
        decompose(np.zeros((6, 6, 3), dtype=np.float32), None, WrongShapeMatting(), HarmonicInpainting())
    assert isinstance(excinfo.value.cause, MalformedOutputError)
    assert excinfo.value.iteration == 1

# --- トレースとログ ---

def test_trace_save(tmp_path):
    truth = disjoint_design()
    _, trace = decompose(composite(truth), None, OracleMatting(truth), HarmonicInpainting())
    trace.save(str(tmp_path))
    data = json.loads((tmp_path / "trace.json").read_text(encoding='utf-8'))
    assert data["termination"] == "empty-matte"
    assert [it["iteration"] for it in data["iterations"]] == [1]
    assert (tmp_path / "iter_1" / "layer.png").exists()
    assert (tmp_path / "iter_1" / "alpha_raw.png").exists()


def test_backend_calls_are_logged(caplog):
    with caplog.at_level(logging.DEBUG, logger="src.layerpy.pipeline"):
        decompose(np.zeros((6, 6, 3), dtype=np.float32), None, EmptyMatting(), HarmonicInpainting())
    assert any("[CALL] matting" in r.getMessage() for r in caplog.records)
    assert any("[RETURN] matting" in r.getMessage() for r in caplog.records)

# --- 合成デザインでの通し実行 ---

def test_oracle_loop_on_mixed_antialiased_designs():
    iou, l1 = oracle_loop(synth_suite(8))
    assert iou >= 0.98
    assert l1 <= 0.02


def test_heuristic_floor_on_flat_disjoint_designs():
    designs = synth_suite(8, overlap_mode="disjoint", edge="hard", shape_kinds=["rect", "ellipse", "ring", "bar"])
    ious = []
    for truth in designs:
        seq, _ = decompose(composite(truth), None, HeuristicMatting(), HarmonicInpainting())
        ious.append(evaluate(seq, truth, max_edits=0).rows[0].alpha_soft_iou)
    assert float(np.mean(ious)) >= 0.95


def test_foreground_refinement_does_not_lower_alpha_iou():
    designs = [
        d for d in synth_suite(12, size=64, shape_kinds=["rect", "ellipse", "ring", "bar"])
        if has_distinct_layer_colors(d)
    ]
    assert designs
    with_refine, _ = oracle_loop(designs, noise_seed=5)
    without_refine, _ = oracle_loop(designs, noise_seed=5, refine_foreground=False)
    assert with_refine >= without_refine


def test_background_refinement_lowers_rgb_l1():
    designs = synth_suite(6, size=64)
    _, with_refine = oracle_loop(designs, noise_seed=5, refine_foreground=False)
    _, without_refine = oracle_loop(designs, noise_seed=5, refine_foreground=False, refine_background=False)
    assert with_refine < without_refine
