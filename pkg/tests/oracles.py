"""Independent oracles used to freeze expected values.

These deliberately avoid the library's own code paths: exact fraction
arithmetic for AP, direct geometry for masks.
"""

from __future__ import annotations

from fractions import Fraction

import numpy as np


def disk_mask(shape: tuple[int, int], cy: float, cx: float, r: float) -> np.ndarray:
    ys, xs = np.mgrid[0 : shape[0], 0 : shape[1]]
    return (ys - cy) ** 2 + (xs - cx) ** 2 <= r * r


def ellipse_mask(
    shape: tuple[int, int], cy: float, cx: float, a: float, b: float, angle: float
) -> np.ndarray:
    ys, xs = np.mgrid[0 : shape[0], 0 : shape[1]].astype(np.float64)
    dx, dy = xs - cx, ys - cy
    u = dx * np.cos(angle) + dy * np.sin(angle)
    v = -dx * np.sin(angle) + dy * np.cos(angle)
    return (u / a) ** 2 + (v / b) ** 2 <= 1.0


def ap_oracle(preds: list[tuple[float, bool]], n_gt: int) -> Fraction:
    """Exact all-point-interpolated AP from (score, is_tp) pairs.

    Walks the ranked list accumulating precision/recall as exact
    fractions, then integrates the running-max precision envelope from
    the high-recall end backwards.
    """
    if n_gt == 0:
        return Fraction(0) if preds else Fraction(1)
    if not preds:
        return Fraction(0)
    ranked = sorted(range(len(preds)), key=lambda i: (-preds[i][0], i))
    points = []  # (recall, precision) after each prediction
    tp = 0
    for rank, i in enumerate(ranked, start=1):
        if preds[i][1]:
            tp += 1
        points.append((Fraction(tp, n_gt), Fraction(tp, rank)))
    ap = Fraction(0)
    best_precision = Fraction(0)
    prev_recall = points[-1][0]
    # envelope from the end: ap accumulates (r_i - r_{i-1}) * max precision at >= r_i
    segments: list[tuple[Fraction, Fraction]] = []
    for recall, precision in reversed(points):
        best_precision = max(best_precision, precision)
        segments.append((recall, best_precision))
    segments.reverse()
    prev_recall = Fraction(0)
    for recall, precision in segments:
        if recall > prev_recall:
            ap += (recall - prev_recall) * precision
            prev_recall = recall
    return ap
