"""Geometric preprocessing and training-time augmentation.

Downsizing uses exact area averaging (flux preserving), implemented as a
separable matrix product with fractional pixel-coverage weights.
"""

from __future__ import annotations

import dataclasses
from typing import TYPE_CHECKING

import numpy as np

from lsbseg.errors import DataError
from lsbseg.imaging.image import LsbImage
from lsbseg.masks import mask_bbox

if TYPE_CHECKING:
    from lsbseg.annotations.labels import Sample

# The symmetry group of the square: 4 rotations x optional vertical flip.
DIHEDRAL_GROUP_SIZE = 8


def _area_weights(n_in: int, n_out: int) -> np.ndarray:
    """Row-normalized (n_out, n_in) matrix of output-cell / input-pixel overlaps."""
    scale = n_in / n_out
    w = np.zeros((n_out, n_in), dtype=np.float64)
    for i in range(n_out):
        lo, hi = i * scale, (i + 1) * scale
        j0, j1 = int(np.floor(lo)), min(int(np.ceil(hi)), n_in)
        for j in range(j0, j1):
            overlap = min(hi, j + 1) - max(lo, j)
            if overlap > 0:
                w[i, j] = overlap / scale
    return w


def center_crop_and_resize(img: LsbImage, crop_size: int, out_size: int) -> LsbImage:
    """Crop a centered square window and resample it to out_size via area averaging."""
    h, w = img.height, img.width
    if crop_size > min(h, w):
        raise DataError(
            f"crop_size {crop_size} exceeds image extent {h}x{w} for image {img.id!r}"
        )
    if out_size < 1:
        raise DataError(f"out_size must be >= 1, got {out_size}")
    y0 = (h - crop_size) // 2
    x0 = (w - crop_size) // 2
    crop = img.pixels[y0 : y0 + crop_size, x0 : x0 + crop_size, :].astype(np.float64)
    if out_size == crop_size:
        out = crop
    else:
        wr = _area_weights(crop_size, out_size)
        out = np.einsum("ij,jkc->ikc", wr, np.einsum("ijc,kj->ikc", crop, wr))
    return LsbImage(
        pixels=out.astype(np.float32),
        id=img.id,
        meta={**img.meta, "crop_size": str(crop_size), "out_size": str(out_size)},
    )


def apply_dihedral(arr: np.ndarray, element: int) -> np.ndarray:
    """Apply element k of the flip/rot90 group to the leading two axes."""
    if not 0 <= element < DIHEDRAL_GROUP_SIZE:
        raise DataError(f"dihedral element must be in [0, 8), got {element}")
    out = arr
    if element >= 4:
        out = np.flipud(out)
    return np.ascontiguousarray(np.rot90(out, k=element % 4))


def augment(
    sample: "Sample",
    rng: np.random.Generator,
    sigma: float = 0.1,
    element: int | None = None,
) -> "Sample":
    """One flip/rot90 group element on image and all masks, then Gaussian pixel noise.

    The group element is drawn from rng unless given explicitly; noise of
    standard deviation sigma is added to image pixels only.
    """
    h, w = sample.image.height, sample.image.width
    for label in sample.instances:
        if label.mask.shape != (h, w):
            raise DataError(
                f"instance mask shape {label.mask.shape} does not match image {h}x{w}"
            )
    if sample.cirrus_mask is not None and sample.cirrus_mask.shape != (h, w):
        raise DataError(
            f"cirrus mask shape {sample.cirrus_mask.shape} does not match image {h}x{w}"
        )
    k = int(rng.integers(0, DIHEDRAL_GROUP_SIZE)) if element is None else element

    pixels = apply_dihedral(sample.image.pixels, k).astype(np.float64)
    if sigma > 0:
        pixels = pixels + rng.normal(0.0, sigma, size=pixels.shape)
    image = LsbImage(pixels=pixels.astype(np.float32), id=sample.image.id, meta=dict(sample.image.meta))

    instances = []
    for label in sample.instances:
        mask = apply_dihedral(label.mask, k)
        instances.append(dataclasses.replace(label, mask=mask, bbox=mask_bbox(mask)))
    cirrus = None if sample.cirrus_mask is None else apply_dihedral(sample.cirrus_mask, k)
    return dataclasses.replace(sample, image=image, instances=instances, cirrus_mask=cirrus)
