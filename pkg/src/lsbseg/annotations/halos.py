"""Separation of overlapping diffuse-halo annotations.

Pipeline: exact Euclidean distance transform -> local maxima (maximum
filter, plateau components collapsed to one marker each) -> greedy
farthest-point marker selection -> marker-seeded flooding of the negated
EDT -> moments-based ellipse fit per part.

The flood processes pixels in order of decreasing EDT depth with ties
broken by squared distance to the claiming marker's centroid; both keys
are preserved exactly by flips and 90-degree rotations, which keeps the
separation equivariant under that group away from exact double ties.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from lsbseg.annotations.labels import Ellipse, fit_ellipse
from lsbseg.errors import DataError

PEAK_NEIGHBORHOOD_RADIUS = 5  # (2r+1)^2 maximum filter window


@dataclass
class HaloPart:
    mask: np.ndarray
    ellipse: Ellipse


@dataclass
class HaloSeparation:
    parts: list[HaloPart]
    shortfall: bool  # fewer EDT peaks found than parts requested


@dataclass
class _Peak:
    pixels: tuple[np.ndarray, np.ndarray]  # plateau component, used as marker
    centroid: tuple[float, float]  # (y, x)
    value: float


def _find_peaks(edt: np.ndarray, mask: np.ndarray) -> list[_Peak]:
    size = 2 * PEAK_NEIGHBORHOOD_RADIUS + 1
    maxf = ndimage.maximum_filter(edt, size=size, mode="constant", cval=0.0)
    is_peak = (edt == maxf) & mask
    labeled, n = ndimage.label(is_peak, structure=np.ones((3, 3), dtype=int))
    peaks = []
    for i in range(1, n + 1):
        ys, xs = np.nonzero(labeled == i)
        peaks.append(
            _Peak(
                pixels=(ys, xs),
                centroid=(float(ys.mean()), float(xs.mean())),
                value=float(edt[ys, xs].max()),
            )
        )
    # canonical order: deepest first, then scan position of the centroid
    peaks.sort(key=lambda p: (-p.value, p.centroid[0], p.centroid[1]))
    return peaks


def _select_peaks(peaks: list[_Peak], n_parts: int) -> list[_Peak]:
    """Greedy farthest-point selection seeded at the deepest peak."""
    if len(peaks) <= n_parts:
        return peaks
    selected = [peaks[0]]
    remaining = peaks[1:]
    while len(selected) < n_parts:
        best, best_dist = None, -1.0
        for p in remaining:
            d = min(
                (p.centroid[0] - q.centroid[0]) ** 2 + (p.centroid[1] - q.centroid[1]) ** 2
                for q in selected
            )
            if d > best_dist:
                best, best_dist = p, d
        selected.append(best)
        remaining.remove(best)
    return selected


def _flood(edt: np.ndarray, mask: np.ndarray, peaks: list[_Peak]) -> np.ndarray:
    """Priority flood of -EDT from the peak plateaus, restricted to the mask."""
    h, w = mask.shape
    labels = np.zeros((h, w), dtype=np.int32)
    centers = []
    heap: list[tuple[float, float, int, int, int]] = []
    for rank, peak in enumerate(peaks, start=1):
        centers.append(peak.centroid)
        ys, xs = peak.pixels
        labels[ys, xs] = rank
        for y, x in zip(ys.tolist(), xs.tolist()):
            heapq.heappush(heap, (-edt[y, x], 0.0, rank, y, x))
    visited = np.zeros((h, w), dtype=bool)
    while heap:
        _, _, rank, y, x = heapq.heappop(heap)
        if visited[y, x]:
            continue
        visited[y, x] = True
        if labels[y, x] == 0:
            labels[y, x] = rank
        rank = labels[y, x]
        cy, cx = centers[rank - 1]
        for ny, nx in ((y - 1, x), (y + 1, x), (y, x - 1), (y, x + 1)):
            if 0 <= ny < h and 0 <= nx < w and mask[ny, nx] and labels[ny, nx] == 0:
                d2 = (ny - cy) ** 2 + (nx - cx) ** 2
                heapq.heappush(heap, (-edt[ny, nx], d2, rank, ny, nx))
    # components that received no marker (more components than requested
    # parts) are attached to the nearest marker so the union stays exact
    leftover = mask & (labels == 0)
    if leftover.any():
        ys, xs = np.nonzero(leftover)
        d2 = np.stack(
            [(ys - cy) ** 2 + (xs - cx) ** 2 for cy, cx in centers], axis=0
        )
        labels[ys, xs] = np.argmin(d2, axis=0) + 1
    return labels


def _fit_or_fallback(part: np.ndarray) -> Ellipse:
    if int(part.sum()) >= 5:
        return fit_ellipse(part)
    ys, xs = np.nonzero(part)
    r = max(np.sqrt(ys.size / np.pi), 0.5)
    return Ellipse(
        center=(float(xs.mean()), float(ys.mean())),
        semi_axes=(r, r),
        angle=0.0,
        degenerate=True,
    )


def separate_overlapping_halos(mask: np.ndarray, n_parts: int) -> HaloSeparation:
    """Split a merged halo mask into n_parts disjoint parts covering it exactly."""
    mask = np.asarray(mask, dtype=bool)
    if not mask.any():
        raise DataError("cannot separate an empty mask")
    if n_parts < 1:
        raise DataError(f"n_parts must be >= 1, got {n_parts}")
    if n_parts == 1:
        return HaloSeparation(parts=[HaloPart(mask.copy(), _fit_or_fallback(mask))], shortfall=False)

    edt = ndimage.distance_transform_edt(mask)
    peaks = _find_peaks(edt, mask)
    shortfall = len(peaks) < n_parts
    selected = _select_peaks(peaks, n_parts)
    labels = _flood(edt, mask, selected)
    parts = []
    for rank in range(1, len(selected) + 1):
        part = labels == rank
        if part.any():
            parts.append(HaloPart(part, _fit_or_fallback(part)))
    return HaloSeparation(parts=parts, shortfall=shortfall)
