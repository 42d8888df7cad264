"""
src/layerpy/_type.py

Pydanticを利用して設定値・ファイル形式の型定義とバリデーションを一元化します:
  - PipelineConfig / RefineConfig: 分解パイプラインとパレット補正の設定
  - HeuristicMattingConfig / ExternalBackendConfig: バックエンド設定
  - DistanceConfig / EvalConfig / LossConfig: 評価指標と損失関数の設定
  - DesignSpec: 合成デザイン生成の仕様
  - SequenceManifest: レイヤー列ディレクトリの manifest.json
  - ToolkitConfig: config/*.json のプリセット全体
  - EvalRow / EvalReport / RunRecord: 出力レポート
"""
from typing import Annotated, Any, Dict, List, Literal, Optional
from pydantic import BaseModel, Field, field_validator, model_validator

ShapeKind = Literal["rect", "ellipse", "ring", "bar", "glyph-blob"]


class PipelineConfig(BaseModel):
    max_iterations: Annotated[int, Field(ge=1)] = 3
    termination_alpha: Annotated[float, Field(gt=0, lt=1)] = 0.5
    termination_fraction: Annotated[float, Field(gt=0, lt=1)] = 5e-4
    inpaint_dilation: Annotated[int, Field(ge=0)] = 3
    refine_foreground: bool = True
    refine_background: bool = True


class RefineConfig(BaseModel):
    fg_max_colors: Annotated[int, Field(ge=1)] = 10
    bg_max_colors: Annotated[int, Field(ge=1)] = 2
    flatness_threshold: Annotated[float, Field(gt=0, le=1)] = 0.6
    gradient_epsilon: Annotated[float, Field(ge=0)] = 2 / 255
    overlap_threshold: Annotated[float, Field(gt=0, le=1)] = 0.8
    ring_width: Annotated[int, Field(ge=1)] = 5
    palette_match_radius: Annotated[float, Field(gt=0)] = 5.0
    # パレット色そのものとみなす ΔE（これ以下なら α=1 に引き上げる）
    solid_match_radius: Annotated[float, Field(gt=0)] = 0.5
    percentile_coverage: Annotated[float, Field(gt=0, le=1)] = 0.95
    # Lab 量子化グリッドの幅 (ΔE)
    palette_bin_size: Annotated[float, Field(gt=0)] = 4.0
    region_alpha_cut: Annotated[float, Field(ge=0, lt=1)] = 0.0
    fg_search_source: Literal["current", "input"] = "current"


class HeuristicMattingConfig(BaseModel):
    quantization_step: Annotated[float, Field(gt=0)] = 4 / 255
    min_region_area: Annotated[int, Field(ge=1)] = 16
    background_rule: Literal["most-frequent"] = "most-frequent"


class ExternalBackendConfig(BaseModel):
    executable: str
    args: List[str] = Field(default_factory=list)
    mode: Literal["matting", "inpainting"]
    timeout: Annotated[float, Field(gt=0)] = 60.0

    @field_validator('executable')
    def validate_executable(cls, v: str) -> str:
        if not v.strip():
            raise ValueError("executable must not be empty")
        return v


class DistanceConfig(BaseModel):
    alpha_weight: Annotated[float, Field(ge=0)] = 0.5
    color_weight: Annotated[float, Field(ge=0)] = 0.5

    @model_validator(mode='after')
    def check_weight_sum(self) -> 'DistanceConfig':
        total = self.alpha_weight + self.color_weight
        if abs(total - 1.0) > 1e-9:
            raise ValueError(f"alpha_weight + color_weight must equal 1, got {total}")
        return self


class EvalConfig(BaseModel):
    distance: DistanceConfig = Field(default_factory=DistanceConfig)
    occlusion_cut: Annotated[float, Field(ge=0, lt=1)] = 0.5
    hard_iou: bool = False
    max_edits: Annotated[int, Field(ge=0)] = 5


class LossConfig(BaseModel):
    bce_weight: Annotated[float, Field(ge=0)] = 1.0
    iou_weight: Annotated[float, Field(ge=0)] = 1.0
    ssim_weight: Annotated[float, Field(ge=0)] = 1.0
    ssim_window: Annotated[int, Field(ge=1)] = 11
    ssim_sigma: Annotated[float, Field(gt=0)] = 1.5
    c1: Annotated[float, Field(gt=0)] = 0.01 ** 2
    c2: Annotated[float, Field(gt=0)] = 0.03 ** 2
    bce_eps: Annotated[float, Field(gt=0, lt=0.5)] = 1e-7
    # 学習後半の「SSIM のみ」スケジュール
    ssim_only: bool = False

    @field_validator('ssim_window')
    def validate_window(cls, v: int) -> int:
        if v % 2 == 0:
            raise ValueError(f"ssim_window must be odd, got {v}")
        return v


class DesignSpec(BaseModel):
    seed: Annotated[int, Field(ge=0, lt=2 ** 64)]
    canvas_width: Annotated[int, Field(ge=32)] = 128
    canvas_height: Annotated[int, Field(ge=32)] = 128
    layer_count_min: Annotated[int, Field(ge=1)] = 2
    layer_count_max: Annotated[int, Field(ge=1)] = 4
    shape_kinds: List[ShapeKind] = Field(
        default_factory=lambda: ["rect", "ellipse", "ring", "bar", "glyph-blob"]
    )
    palette_size: Annotated[int, Field(ge=1)] = 6
    overlap_mode: Literal["disjoint", "stacked", "mixed"] = "mixed"
    background: Literal["flat", "two-tone", "linear-gradient"] = "flat"
    edge: Literal["hard", "antialiased"] = "antialiased"

    @model_validator(mode='after')
    def check_ranges(self) -> 'DesignSpec':
        if self.layer_count_min > self.layer_count_max:
            raise ValueError(
                f"layer_count_min ({self.layer_count_min}) must not exceed layer_count_max ({self.layer_count_max})"
            )
        if not self.shape_kinds:
            raise ValueError("shape_kinds must not be empty")
        return self


class CanvasSize(BaseModel):
    width: Annotated[int, Field(ge=1)]
    height: Annotated[int, Field(ge=1)]


class LayerEntry(BaseModel):
    z: Annotated[int, Field(ge=0)]
    file: str
    name: Optional[str] = None


class ResizeRecord(BaseModel):
    original_width: Annotated[int, Field(ge=1)]
    original_height: Annotated[int, Field(ge=1)]
    short_side: Annotated[int, Field(ge=1)]


class SequenceManifest(BaseModel):
    canvas: CanvasSize
    layers: List[LayerEntry]
    generator: Optional[str] = None
    seed: Optional[int] = None
    resize: Optional[ResizeRecord] = None

    @model_validator(mode='after')
    def check_z_order(self) -> 'SequenceManifest':
        if not self.layers:
            raise ValueError("manifest must list at least one layer")
        zs = sorted(entry.z for entry in self.layers)
        if zs != list(range(len(zs))):
            raise ValueError(f"z values must be a contiguous 0..K run, got {zs}")
        return self


class PairRecord(BaseModel):
    index: Annotated[int, Field(ge=0)]
    iteration: Annotated[int, Field(ge=0)]
    provenance: Literal["clean", "inpainted-input"]


class ToolkitConfig(BaseModel):
    pipeline: PipelineConfig = Field(default_factory=PipelineConfig)
    refine: RefineConfig = Field(default_factory=RefineConfig)
    heuristic: HeuristicMattingConfig = Field(default_factory=HeuristicMattingConfig)
    evaluation: EvalConfig = Field(default_factory=EvalConfig)
    loss: LossConfig = Field(default_factory=LossConfig)


class EvalRow(BaseModel):
    edits_allowed: Annotated[int, Field(ge=0)]
    edits_used_pred: Annotated[int, Field(ge=0)]
    edits_used_gt: Annotated[int, Field(ge=0)]
    rgb_l1: float
    alpha_soft_iou: float
    pair_count: Annotated[int, Field(ge=1)]
    distance: float


class EvalReport(BaseModel):
    header: Dict[str, Any] = Field(default_factory=dict)
    rows: List[EvalRow] = Field(default_factory=list)


class RunRecord(BaseModel):
    tool: str = "layerpy"
    version: str
    command: str
    arguments: Dict[str, Any] = Field(default_factory=dict)
    config: Dict[str, Any] = Field(default_factory=dict)
