"""Two-channel flux images and their on-disk binary container.

Container layout (little-endian): 16-byte header consisting of the magic
bytes ``LSB1`` followed by u32 H, u32 W, u32 C, then C row-major H*W
float32 planes.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from lsbseg.errors import DataError

MAGIC = b"LSB1"
_HEADER = struct.Struct("<4sIII")


@dataclass
class LsbImage:
    """A dense H x W x C image of finite flux values plus provenance metadata."""

    pixels: np.ndarray
    id: str
    meta: dict[str, str] = field(default_factory=dict)

    def __post_init__(self) -> None:
        px = np.asarray(self.pixels, dtype=np.float32)
        if px.ndim != 3:
            raise DataError(f"image {self.id!r}: expected H x W x C pixels, got shape {px.shape}")
        if px.shape[0] < 1 or px.shape[1] < 1 or px.shape[2] < 1:
            raise DataError(f"image {self.id!r}: empty dimension in shape {px.shape}")
        if not np.isfinite(px).all():
            raise DataError(f"image {self.id!r}: non-finite pixel values")
        self.pixels = px

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def channels(self) -> int:
        return self.pixels.shape[2]


def write_lsb1(img: LsbImage, path: str | Path) -> None:
    """Write an image to the LSB1 container, atomically (temp file + rename)."""
    path = Path(path)
    h, w, c = img.pixels.shape
    planes = np.ascontiguousarray(img.pixels.transpose(2, 0, 1), dtype="<f4")
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "wb") as f:
        f.write(_HEADER.pack(MAGIC, h, w, c))
        f.write(planes.tobytes())
    tmp.replace(path)


def read_lsb1(path: str | Path, image_id: str | None = None) -> LsbImage:
    """Read an image from the LSB1 container."""
    path = Path(path)
    if not path.exists():
        raise DataError(f"image file not found: {path}")
    raw = path.read_bytes()
    if len(raw) < _HEADER.size:
        raise DataError(f"{path}: truncated header")
    magic, h, w, c = _HEADER.unpack_from(raw)
    if magic != MAGIC:
        raise DataError(f"{path}: bad magic {magic!r}, expected {MAGIC!r}")
    expected = _HEADER.size + 4 * h * w * c
    if len(raw) != expected:
        raise DataError(f"{path}: expected {expected} bytes, found {len(raw)}")
    planes = np.frombuffer(raw, dtype="<f4", offset=_HEADER.size).reshape(c, h, w)
    pixels = np.ascontiguousarray(planes.transpose(1, 2, 0))
    return LsbImage(pixels=pixels, id=image_id if image_id is not None else path.stem)
