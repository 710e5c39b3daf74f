"""Binary-mask plumbing shared across modules: tight boxes and RLE coding.

RLE convention: row-major scan, alternating run lengths starting with a
run of zeros, as a list of non-negative integers summing to H*W.
"""

from __future__ import annotations

import numpy as np

from lsbseg.errors import DataError


def mask_bbox(mask: np.ndarray) -> tuple[int, int, int, int]:
    """Tight axis-aligned bounding box (x_min, y_min, x_max, y_max), end-exclusive."""
    ys, xs = np.nonzero(mask)
    if ys.size == 0:
        raise DataError("cannot compute bounding box of an empty mask")
    return int(xs.min()), int(ys.min()), int(xs.max()) + 1, int(ys.max()) + 1


def rle_encode(mask: np.ndarray) -> list[int]:
    """Encode a boolean H x W mask as alternating run lengths (zeros first)."""
    flat = np.asarray(mask, dtype=bool).ravel()
    if flat.size == 0:
        return []
    changes = np.nonzero(flat[1:] != flat[:-1])[0] + 1
    bounds = np.concatenate(([0], changes, [flat.size]))
    runs = np.diff(bounds).tolist()
    if flat[0]:
        runs = [0] + runs
    return [int(r) for r in runs]


def rle_decode(runs: list[int], height: int, width: int) -> np.ndarray:
    """Decode alternating run lengths (zeros first) into a boolean H x W mask."""
    total = height * width
    if any(r < 0 for r in runs):
        raise DataError("RLE runs must be non-negative")
    if sum(runs) != total:
        raise DataError(f"RLE runs sum to {sum(runs)}, expected {total} for {height}x{width}")
    flat = np.zeros(total, dtype=bool)
    pos = 0
    value = False
    for run in runs:
        if value:
            flat[pos : pos + run] = True
        pos += run
        value = not value
    return flat.reshape(height, width)
