"""IoU, detection matching, average precision, and evaluation reports.

Matching and AP both use mask IoU (segmentation quality is what the
boundaries are judged on). AP integrates the all-point precision
envelope: the precision credited at recall r is the maximum precision
achieved at any recall >= r.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from lsbseg.annotations.labels import INSTANCE_CLASSES, InstanceLabel, Sample
from lsbseg.errors import DataError
from lsbseg.network.model import Detection


def mask_iou(a: np.ndarray, b: np.ndarray) -> float:
    """Intersection over union of two same-shape boolean masks (0 if both empty)."""
    a = np.asarray(a, dtype=bool)
    b = np.asarray(b, dtype=bool)
    if a.shape != b.shape:
        raise DataError(f"mask shapes differ: {a.shape} vs {b.shape}")
    union = np.count_nonzero(a | b)
    if union == 0:
        return 0.0
    return np.count_nonzero(a & b) / union


@dataclass
class MatchResult:
    """Predictions of one class on one sample, sorted by descending score."""

    scores: np.ndarray  # (P,)
    tp: np.ndarray  # (P,) bool
    fn: int
    order: np.ndarray  # indices into the input prediction list


def match_detections(
    preds: list[Detection],
    gts: list[InstanceLabel],
    class_name: str,
    iou_thresh: float,
) -> MatchResult:
    """Greedy one-to-one matching in score order against unmatched GTs."""
    cand = [(i, p) for i, p in enumerate(preds) if p.cls == class_name]
    order = np.array(
        sorted(range(len(cand)), key=lambda k: -cand[k][1].score), dtype=int
    )
    gt_masks = [g.mask for g in gts if g.cls == class_name]
    taken = [False] * len(gt_masks)
    scores = np.zeros(len(cand))
    tp = np.zeros(len(cand), dtype=bool)
    for rank, k in enumerate(order):
        _, pred = cand[k]
        scores[rank] = pred.score
        best_iou, best_j = 0.0, -1
        for j, gm in enumerate(gt_masks):
            if taken[j]:
                continue
            iou = mask_iou(pred.mask, gm)
            if iou > best_iou:
                best_iou, best_j = iou, j
        if best_j >= 0 and best_iou >= iou_thresh:
            taken[best_j] = True
            tp[rank] = True
    fn = taken.count(False)
    return MatchResult(
        scores=scores, tp=tp, fn=fn, order=np.array([cand[k][0] for k in order], dtype=int)
    )


def _envelope_ap(scores: np.ndarray, tp: np.ndarray, n_gt: int) -> tuple[float, np.ndarray, np.ndarray]:
    """All-point interpolated AP plus the raw precision/recall arrays."""
    if n_gt == 0:
        return (0.0 if len(scores) else 1.0), np.array([]), np.array([])
    if len(scores) == 0:
        return 0.0, np.array([]), np.array([])
    order = np.argsort(-scores, kind="stable")
    tp = tp[order].astype(np.float64)
    cum_tp = np.cumsum(tp)
    cum_fp = np.cumsum(1.0 - tp)
    recall = cum_tp / n_gt
    precision = cum_tp / (cum_tp + cum_fp)
    envelope = np.maximum.accumulate(precision[::-1])[::-1]
    prev_r = 0.0
    ap = 0.0
    for r, p in zip(recall, envelope):
        if r > prev_r:
            ap += (r - prev_r) * p
            prev_r = r
    return float(ap), precision, recall


def average_precision(
    preds_per_sample: list[list[Detection]],
    gts_per_sample: list[list[InstanceLabel]],
    class_name: str,
    iou_thresh: float,
) -> float:
    """Dataset-wide AP for one class at one IoU threshold."""
    ap, _, _, _ = _class_ap(preds_per_sample, gts_per_sample, class_name, iou_thresh)
    return ap


def _class_ap(
    preds_per_sample: list[list[Detection]],
    gts_per_sample: list[list[InstanceLabel]],
    class_name: str,
    iou_thresh: float,
):
    scores, tps = [], []
    n_gt = 0
    for preds, gts in zip(preds_per_sample, gts_per_sample):
        res = match_detections(preds, gts, class_name, iou_thresh)
        scores.append(res.scores)
        tps.append(res.tp)
        n_gt += sum(1 for g in gts if g.cls == class_name)
    scores = np.concatenate(scores) if scores else np.array([])
    tps = np.concatenate(tps) if tps else np.array([], dtype=bool)
    ap, precision, recall = _envelope_ap(scores, tps, n_gt)
    counts = {
        "tp": int(tps.sum()),
        "fp": int(len(tps) - tps.sum()),
        "fn": int(n_gt - tps.sum()),
    }
    return ap, counts, precision, recall


@dataclass
class EvalReport:
    """Per-class AP at each threshold, class-mean AP, cirrus IoU, counts."""

    thresholds: tuple[float, ...]
    per_class_ap: dict[float, dict[str, float]]
    mean_ap: dict[float, float]
    cirrus_iou: float | None
    counts: dict[float, dict[str, dict[str, int]]]
    curves: dict[float, dict[str, dict[str, list[float]]]] = field(default_factory=dict)

    def to_dict(self) -> dict:
        key = lambda t: f"{t:g}"
        return {
            "thresholds": list(self.thresholds),
            "per_class_ap": {
                key(t): dict(v) for t, v in sorted(self.per_class_ap.items())
            },
            "mean_ap": {key(t): v for t, v in sorted(self.mean_ap.items())},
            "cirrus_iou": self.cirrus_iou,
            "counts": {key(t): v for t, v in sorted(self.counts.items())},
        }

    def summary_lines(self) -> list[str]:
        lines = []
        for t in self.thresholds:
            name = f"AP{round(t * 100)}"
            for cls in INSTANCE_CLASSES:
                lines.append(f"{name} {cls:16s} {self.per_class_ap[t][cls]:.4f}")
            lines.append(f"{name} {'all-class mean':16s} {self.mean_ap[t]:.4f}")
        if self.cirrus_iou is not None:
            lines.append(f"cirrus IoU        {self.cirrus_iou:.4f}")
        else:
            lines.append("cirrus IoU        n/a (no annotated samples)")
        return lines


def evaluate(
    predictions: dict[str, "PanopticOutput"],
    dataset: list[Sample],
    thresholds: tuple[float, ...] = (0.5, 0.75),
) -> EvalReport:
    """Score predictions against a dataset; every sample id must be covered."""
    from lsbseg.panoptic import PanopticOutput  # noqa: F401  (type only)

    missing = [s.id for s in dataset if s.id not in predictions]
    if missing:
        raise DataError(f"predictions missing for sample id {missing[0]!r}")
    preds_per_sample = [predictions[s.id].detections for s in dataset]
    gts_per_sample = [s.instances for s in dataset]

    per_class_ap: dict[float, dict[str, float]] = {}
    counts: dict[float, dict[str, dict[str, int]]] = {}
    curves: dict[float, dict[str, dict[str, list[float]]]] = {}
    mean_ap: dict[float, float] = {}
    for t in thresholds:
        per_class_ap[t], counts[t], curves[t] = {}, {}, {}
        for cls in INSTANCE_CLASSES:
            ap, cnt, precision, recall = _class_ap(preds_per_sample, gts_per_sample, cls, t)
            per_class_ap[t][cls] = ap
            counts[t][cls] = cnt
            curves[t][cls] = {
                "precision": [float(p) for p in precision],
                "recall": [float(r) for r in recall],
            }
        mean_ap[t] = float(np.mean([per_class_ap[t][c] for c in INSTANCE_CLASSES]))

    inter = 0
    union = 0
    annotated = 0
    for sample in dataset:
        if sample.cirrus_mask is None:
            continue
        annotated += 1
        pred_mask = predictions[sample.id].cirrus_mask
        if pred_mask.shape != sample.cirrus_mask.shape:
            raise DataError(f"sample {sample.id!r}: cirrus map shape mismatch")
        inter += int(np.count_nonzero(pred_mask & sample.cirrus_mask))
        union += int(np.count_nonzero(pred_mask | sample.cirrus_mask))
    cirrus_iou = None if annotated == 0 else (inter / union if union else 0.0)

    return EvalReport(
        thresholds=tuple(thresholds),
        per_class_ap=per_class_ap,
        mean_ap=mean_ap,
        cirrus_iou=cirrus_iou,
        counts=counts,
        curves=curves,
    )
