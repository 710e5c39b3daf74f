"""Bounding-box statistics and anchor configuration selection."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from lsbseg.errors import DataError

ANCHOR_RATIOS = (0.5, 1.0, 2.0)  # height/width, symmetric about 1
WIDTH_FLOOR = 32
WIDTH_CEIL = 512


@dataclass
class BoxStatistics:
    heights: np.ndarray
    widths: np.ndarray
    aspect_ratios: np.ndarray  # height / width
    height_hist: tuple[np.ndarray, np.ndarray]
    width_hist: tuple[np.ndarray, np.ndarray]
    ratio_hist: tuple[np.ndarray, np.ndarray]
    side_p5: float
    side_p95: float

    @property
    def sides(self) -> np.ndarray:
        return np.concatenate([self.heights, self.widths])


@dataclass
class AnchorConfig:
    widths: tuple[int, ...]
    aspect_ratios: tuple[float, ...] = ANCHOR_RATIOS

    def __post_init__(self) -> None:
        if list(self.widths) != sorted(set(self.widths)):
            raise DataError(f"anchor widths must be strictly increasing, got {self.widths}")
        if list(self.aspect_ratios) != sorted(set(self.aspect_ratios)):
            raise DataError(f"aspect ratios must be strictly increasing, got {self.aspect_ratios}")
        self.widths = tuple(int(w) for w in self.widths)
        self.aspect_ratios = tuple(float(r) for r in self.aspect_ratios)

    @property
    def total(self) -> int:
        return len(self.widths) * len(self.aspect_ratios)

    def shapes(self) -> list[tuple[float, float]]:
        """All (width, height) anchor shapes."""
        return [(w, w * r) for w in self.widths for r in self.aspect_ratios]


def compute_box_statistics(dataset: list) -> BoxStatistics:
    """Histograms of label box heights, widths, and aspect ratios, plus
    the 5th/95th percentiles of pooled side lengths."""
    if not dataset:
        raise DataError("cannot compute box statistics of an empty dataset")
    heights, widths = [], []
    for sample in dataset:
        for label in sample.instances:
            x0, y0, x1, y1 = label.bbox
            heights.append(y1 - y0)
            widths.append(x1 - x0)
    if not heights:
        raise DataError("dataset contains no instance labels")
    heights = np.asarray(heights, dtype=np.float64)
    widths = np.asarray(widths, dtype=np.float64)
    ratios = heights / widths
    sides = np.concatenate([heights, widths])
    return BoxStatistics(
        heights=heights,
        widths=widths,
        aspect_ratios=ratios,
        height_hist=np.histogram(heights, bins=16),
        width_hist=np.histogram(widths, bins=16),
        ratio_hist=np.histogram(ratios, bins=16),
        side_p5=float(np.percentile(sides, 5)),
        side_p95=float(np.percentile(sides, 95)),
    )


def select_anchor_config(stats: BoxStatistics) -> AnchorConfig:
    """Consecutive powers of two covering [p5, p95] of box sides, clamped to
    [32, 512]; aspect ratios are always {0.5, 1, 2}."""
    if stats.heights.size == 0:
        raise DataError("cannot select anchors from empty statistics")
    lo = min(max(stats.side_p5, WIDTH_FLOOR), WIDTH_CEIL)
    hi = min(max(stats.side_p95, WIDTH_FLOOR), WIDTH_CEIL)
    lo_exp = int(np.floor(np.log2(lo)))
    hi_exp = int(np.ceil(np.log2(hi)))
    widths = tuple(2**e for e in range(lo_exp, hi_exp + 1))
    return AnchorConfig(widths=widths)
