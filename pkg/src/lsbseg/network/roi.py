"""Fixed-size feature patches from arbitrary boxes via bilinear sampling."""

from __future__ import annotations

import logging

import torch

from lsbseg.errors import DataError

log = logging.getLogger(__name__)


def _sample_coords(lo: torch.Tensor, hi: torch.Tensor, n: int) -> torch.Tensor:
    """Centers of n equal cells spanning [lo, hi], in pixel-center coordinates."""
    steps = (torch.arange(n, dtype=torch.float32) + 0.5) / n
    return lo[..., None] + steps * (hi - lo)[..., None] - 0.5


def _bilinear(fmap: torch.Tensor, ys: torch.Tensor, xs: torch.Tensor) -> torch.Tensor:
    """Sample (C, H, W) at a (P, Q) grid of float coords; outside is zero."""
    c, h, w = fmap.shape
    y0 = torch.floor(ys)
    x0 = torch.floor(xs)
    wy = (ys - y0).unsqueeze(0)
    wx = (xs - x0).unsqueeze(0)

    def tap(yy: torch.Tensor, xx: torch.Tensor) -> torch.Tensor:
        valid = (yy >= 0) & (yy < h) & (xx >= 0) & (xx < w)
        yi = yy.clamp(0, h - 1).long()
        xi = xx.clamp(0, w - 1).long()
        vals = fmap[:, yi, xi]
        return vals * valid.unsqueeze(0)

    v00 = tap(y0, x0)
    v01 = tap(y0, x0 + 1)
    v10 = tap(y0 + 1, x0)
    v11 = tap(y0 + 1, x0 + 1)
    top = v00 * (1 - wx) + v01 * wx
    bot = v10 * (1 - wx) + v11 * wx
    return top * (1 - wy) + bot * wy


def roi_crop(fmap: torch.Tensor, box: torch.Tensor, out_size: int) -> torch.Tensor:
    """Bilinear out_size x out_size patch of a (C, H, W) map inside box.

    Box coordinates are in the feature map's own pixel units. A box fully
    outside the map yields a zero patch (logged).
    """
    box = torch.as_tensor(box, dtype=torch.float32)
    x0, y0, x1, y1 = box.unbind(-1)
    if not (x1 > x0 and y1 > y0):
        raise DataError(f"roi_crop box must have positive area, got {box.tolist()}")
    _, h, w = fmap.shape
    if x1 <= 0 or y1 <= 0 or x0 >= w or y0 >= h:
        log.warning("roi_crop: box %s fully outside %dx%d feature map", box.tolist(), h, w)
    ys = _sample_coords(y0, y1, out_size)  # (out,)
    xs = _sample_coords(x0, x1, out_size)
    grid_y = ys[:, None].expand(out_size, out_size)
    grid_x = xs[None, :].expand(out_size, out_size)
    return _bilinear(fmap, grid_y, grid_x)


def roi_crop_batch(fmap: torch.Tensor, boxes: torch.Tensor, out_size: int) -> torch.Tensor:
    """roi_crop for (N, 4) boxes on one (C, H, W) map -> (N, C, out, out)."""
    boxes = torch.as_tensor(boxes, dtype=torch.float32)
    if boxes.numel() == 0:
        return torch.zeros((0, fmap.shape[0], out_size, out_size))
    return torch.stack([roi_crop(fmap, b, out_size) for b in boxes])
