"""
src/layerpy/metrics.py
分解結果を正解レイヤー列と比較する評価指標を提供します:
- visibility_groups / group_top_layers: 遮蔽されていないレイヤーをまとめたトップレイヤー列
- soft_iou / layer_distance: [0,1] に収まるレイヤー間距離
- dtw_align: DTW によるレイヤー列の単調な多対多対応付け
- find_gains / merge_edit: 隣接レイヤー統合による貪欲な編集探索
- evaluate / render_report: 編集回数ごとの評価表とその出力
"""
import json
import logging
from dataclasses import dataclass, field
from typing import Callable, List, Literal, Optional, Sequence, Tuple

import numpy as np

from ._errors import CanvasMismatchError, EmptySequenceError
from ._type import DistanceConfig, EvalConfig, EvalReport, EvalRow
from .raster import LayerSequence, merge_all, merge_layers
from .validate import check_same_size

logger = logging.getLogger(__name__)

Distance = Callable[[np.ndarray, np.ndarray], float]
Side = Literal["pred", "gt"]


# ---- グルーピング ----

def visibility_groups(seq: LayerSequence, cut: float = 0.5) -> List[List[int]]:
    """
    前景レイヤー (z>=1) を、前面側から順に「より上のレイヤーに遮蔽されない集合」に分ける。
    戻り値は前面→背面の順、各グループ内は z 昇順。
    """
    supports = [layer[..., 3] > cut for layer in seq.layers]
    remaining = list(range(1, len(seq)))
    groups: List[List[int]] = []
    while remaining:
        top = [
            k for pos, k in enumerate(remaining)
            if not any(np.any(supports[k] & supports[j]) for j in remaining[pos + 1:])
        ]
        groups.append(top)
        remaining = [k for k in remaining if k not in top]
    return groups


def group_top_layers(seq: LayerSequence, cut: float = 0.5) -> LayerSequence:
    """
    トップレイヤーのグループごとにレイヤーを over 合成でまとめ、背面→前面の列にする。
    背景 (z=0) は常に単独のグループ 0。
    """
    groups = visibility_groups(seq, cut)
    merged = [merge_all([seq.layers[k] for k in group]) for group in reversed(groups)]
    return LayerSequence(canvas=seq.canvas, layers=(seq.layers[0],) + tuple(merged))


# ---- 距離 ----

def soft_iou(a: np.ndarray, b: np.ndarray) -> float:
    """Σmin / Σmax。両方とも全て 0 なら 1"""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    union = np.maximum(a, b).sum()
    if union == 0:
        return 1.0
    return float(np.minimum(a, b).sum() / union)


def hard_iou(a: np.ndarray, b: np.ndarray, cut: float = 0.5) -> float:
    return soft_iou(np.asarray(a) > cut, np.asarray(b) > cut)


def weighted_rgb_l1(a: np.ndarray, b: np.ndarray) -> float:
    """b（正解側）のアルファで重み付けした RGB の L1 平均。重みが全て 0 なら 0"""
    weight = b[..., 3].astype(np.float64)
    total = weight.sum()
    if total == 0:
        return 0.0
    diff = np.abs(a[..., :3].astype(np.float64) - b[..., :3].astype(np.float64)).sum(axis=2)
    return float((weight * diff).sum() / (3.0 * total))


def layer_distance(a: np.ndarray, b: np.ndarray, config: Optional[DistanceConfig] = None) -> float:
    """
    d = w_α (1 - softIoU) + w_c min(1, 重み付き RGB L1)
    b は正解側のレイヤー。
    """
    config = config or DistanceConfig()
    check_same_size(a, b, "compared layers")
    alpha_term = 1.0 - soft_iou(a[..., 3], b[..., 3])
    color_term = min(1.0, weighted_rgb_l1(a, b))
    return config.alpha_weight * alpha_term + config.color_weight * color_term


def make_distance(config: Optional[DistanceConfig] = None) -> Distance:
    config = config or DistanceConfig()
    return lambda a, b: layer_distance(a, b, config)


# ---- DTW ----

@dataclass
class AlignmentPairs:
    """
    pairs は (pred index, gt index) の昇順リスト。pred / gt は対応付けに使ったレイヤー列。
    """
    pairs: List[Tuple[int, int]]
    distances: List[float]
    pred: List[np.ndarray]
    gt: List[np.ndarray]

    @property
    def mean_distance(self) -> float:
        return float(np.mean(self.distances))

    @property
    def total_cost(self) -> float:
        return float(np.sum(self.distances))

    def __len__(self) -> int:
        return len(self.pairs)


def dtw_align(pred: Sequence[np.ndarray], gt: Sequence[np.ndarray], dist: Distance) -> AlignmentPairs:
    """
    コスト行列 C[i,j] = dist(pred_i, gt_j) から累積コスト D を作り、終点から逆にたどる。
    同値の場合は 斜め → pred 側 → gt 側 の順に優先する。
    """
    pred = list(pred)
    gt = list(gt)
    if not pred or not gt:
        raise EmptySequenceError("dtw_align requires two non-empty sequences.")
    n, m = len(pred), len(gt)

    C = np.zeros((n, m))
    for i in range(n):
        for j in range(m):
            C[i, j] = dist(pred[i], gt[j])

    D = np.zeros((n, m))
    for i in range(1, n):
        D[i, 0] = D[i - 1, 0] + C[i, 0]
    for j in range(1, m):
        D[0, j] = D[0, j - 1] + C[0, j]
    for i in range(1, n):
        for j in range(1, m):
            D[i, j] = C[i, j] + min(D[i - 1, j], D[i, j - 1], D[i - 1, j - 1])

    i, j = n - 1, m - 1
    path = [(i, j)]
    while i > 0 or j > 0:
        if i == 0:
            j -= 1
        elif j == 0:
            i -= 1
        elif D[i - 1, j - 1] <= D[i - 1, j] and D[i - 1, j - 1] <= D[i, j - 1]:
            i -= 1
            j -= 1
        elif D[i - 1, j] <= D[i - 1, j - 1] and D[i - 1, j] <= D[i, j - 1]:
            i -= 1
        else:
            j -= 1
        path.append((i, j))
    path.reverse()

    return AlignmentPairs(
        pairs=path,
        distances=[float(C[i, j]) for i, j in path],
        pred=pred,
        gt=gt,
    )


# ---- 統合編集 ----

def find_gains(
    pred: Sequence[np.ndarray],
    gt: Sequence[np.ndarray],
    pairs: Sequence[Tuple[int, int]],
    dist: Distance,
) -> Tuple[List[int], List[float]]:
    """
    隣接する pred[i], pred[i+1] を統合した場合の距離変化を調べる。
    i, i+1 に対応する正解レイヤー群 g0, g1 について、現在の距離和と
      - 統合レイヤーを g0, g1 の両方に対応させる
      - 統合レイヤーを g0 に、pred[i+2] を g1 に対応させる（i+2 がある場合）
    のうち小さい方を比べ、減る場合に index と（負の）差分を返す。
    """
    merged_ids: List[int] = []
    gains: List[float] = []
    for i in range(len(pred) - 1):
        merged = merge_layers(pred[i], pred[i + 1])
        carry = pred[i + 2] if i + 2 < len(pred) else None
        g0 = [gt[q] for k, q in pairs if k == i]
        g1 = [gt[q] for k, q in pairs if k == i + 1]

        current = sum(dist(pred[i], g) for g in g0) + sum(dist(pred[i + 1], g) for g in g1)
        onto_g0 = sum(dist(merged, g) for g in g0)
        options = [onto_g0 + sum(dist(merged, g) for g in g1)]
        if carry is not None:
            options.append(onto_g0 + sum(dist(carry, g) for g in g1))

        best = min(options)
        if best < current:
            merged_ids.append(i)
            gains.append(best - current)
    return merged_ids, gains


@dataclass(frozen=True)
class Edit:
    side: Side
    index: int
    # 距離の減少量（正）
    gain: float
    distance_before: float
    distance_after: float


@dataclass
class EditLog:
    edits: List[Edit] = field(default_factory=list)

    @property
    def edits_used(self) -> int:
        return len(self.edits)

    def used_on(self, side: Side) -> int:
        return sum(1 for e in self.edits if e.side == side)


def _merged(layers: List[np.ndarray], index: int) -> List[np.ndarray]:
    return layers[:index] + [merge_layers(layers[index], layers[index + 1])] + layers[index + 2:]


def merge_edit(
    pred: Sequence[np.ndarray],
    gt: Sequence[np.ndarray],
    emax: int,
    dist: Distance,
) -> Tuple[AlignmentPairs, EditLog]:
    """
    予測側・正解側の双方で隣接レイヤーの統合利得を求め、全体で最良の1候補だけを適用する。
    最良候補でも再対応付け後の平均距離が厳密に下がらなければ、そこで終了する。
    レイヤー数が 2 以下の側は統合しない。
    """
    pred = list(pred)
    gt = list(gt)
    log = EditLog()
    current = dtw_align(pred, gt, dist)

    def swapped(a: np.ndarray, b: np.ndarray) -> float:
        return dist(b, a)

    while log.edits_used < emax:
        candidates: List[Tuple[float, int, Side, int]] = []
        if len(pred) > 2:
            ids, gains = find_gains(pred, gt, current.pairs, dist)
            candidates += [(g, 0, "pred", i) for i, g in zip(ids, gains)]
        if len(gt) > 2:
            flipped = [(q, k) for k, q in current.pairs]
            ids, gains = find_gains(gt, pred, flipped, swapped)
            candidates += [(g, 1, "gt", i) for i, g in zip(ids, gains)]
        if not candidates:
            break

        _, _, side, index = min(candidates, key=lambda c: (c[0], c[1], c[3]))
        next_pred = _merged(pred, index) if side == "pred" else pred
        next_gt = _merged(gt, index) if side == "gt" else gt
        realigned = dtw_align(next_pred, next_gt, dist)
        if realigned.mean_distance >= current.mean_distance:
            logger.debug("[EDIT] best merge %s[%d] does not lower the distance, stopping", side, index)
            break

        pred, gt = next_pred, next_gt
        edit = Edit(
            side=side,
            index=index,
            gain=current.mean_distance - realigned.mean_distance,
            distance_before=current.mean_distance,
            distance_after=realigned.mean_distance,
        )
        log.edits.append(edit)
        logger.debug(
            "[EDIT] merge %s[%d] distance %.6f -> %.6f", side, index, edit.distance_before, edit.distance_after
        )
        current = realigned
    return current, log


# ---- 集計 ----

def _report_header(config: EvalConfig, pred: LayerSequence, gt: LayerSequence,
                   pred_grouped: LayerSequence, gt_grouped: LayerSequence) -> dict:
    return {
        "distance": "alpha_weight * (1 - soft_iou) + color_weight * min(1, gt_weighted_rgb_l1)",
        "alpha_weight": config.distance.alpha_weight,
        "color_weight": config.distance.color_weight,
        "occlusion_cut": config.occlusion_cut,
        "iou": "hard" if config.hard_iou else "soft",
        "max_edits": config.max_edits,
        "canvas": [gt.width, gt.height],
        "pred_layers": len(pred),
        "gt_layers": len(gt),
        "pred_groups": len(pred_grouped),
        "gt_groups": len(gt_grouped),
    }


def evaluate(
    pred: LayerSequence,
    gt: LayerSequence,
    max_edits: Optional[int] = None,
    config: Optional[EvalConfig] = None,
) -> EvalReport:
    """
    両者をグルーピングし、編集予算 0..max_edits ごとに merge_edit をやり直して
    対応ペアの平均 RGB L1 と平均 IoU を求める。
    """
    config = config or EvalConfig()
    budget = config.max_edits if max_edits is None else max_edits
    if budget < 0:
        raise ValueError(f"max_edits must be >= 0, got {budget}")
    if pred.canvas != gt.canvas:
        raise CanvasMismatchError(
            f"prediction canvas {pred.canvas[0]}x{pred.canvas[1]} does not match "
            f"ground truth canvas {gt.canvas[0]}x{gt.canvas[1]}"
        )

    pred_grouped = group_top_layers(pred, config.occlusion_cut)
    gt_grouped = group_top_layers(gt, config.occlusion_cut)
    dist = make_distance(config.distance)
    iou = hard_iou if config.hard_iou else soft_iou

    rows = []
    for allowed in range(budget + 1):
        aligned, log = merge_edit(pred_grouped.layers, gt_grouped.layers, allowed, dist)
        l1 = [weighted_rgb_l1(aligned.pred[k], aligned.gt[q]) for k, q in aligned.pairs]
        ious = [iou(aligned.pred[k][..., 3], aligned.gt[q][..., 3]) for k, q in aligned.pairs]
        rows.append(EvalRow(
            edits_allowed=allowed,
            edits_used_pred=log.used_on("pred"),
            edits_used_gt=log.used_on("gt"),
            rgb_l1=float(np.mean(l1)),
            alpha_soft_iou=float(np.mean(ious)),
            pair_count=len(aligned),
            distance=aligned.mean_distance,
        ))
    report = EvalReport(header=_report_header(config, pred, gt, pred_grouped, gt_grouped), rows=rows)
    logger.info(
        "[EVAL] %d pred groups vs %d gt groups, budget 0: rgb_l1=%.4f iou=%.4f",
        len(pred_grouped), len(gt_grouped), rows[0].rgb_l1, rows[0].alpha_soft_iou,
    )
    return report


def render_report(report: EvalReport, fmt: str = "text") -> str:
    """
    text: ヘッダーを "# key=value"、各行を "key=value ..." で出力
    structured: JSON 文書
    """
    if fmt == "structured":
        return report.model_dump_json(indent=2)
    if fmt != "text":
        raise ValueError(f"Unknown report format: {fmt}")
    lines = [f"# {key}={json.dumps(value)}" for key, value in report.header.items()]
    for row in report.rows:
        lines.append(" ".join(
            f"{key}={value:.6f}" if isinstance(value, float) else f"{key}={value}"
            for key, value in row.model_dump().items()
        ))
    return "\n".join(lines) + "\n"
