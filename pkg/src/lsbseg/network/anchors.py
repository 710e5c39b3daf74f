"""Anchor generation, box coding, and box IoU.

Boxes are (x0, y0, x1, y1) in input-image pixels. Anchor widths are
assigned to backbone levels by scale, smallest width on the finest level;
widths beyond the number of levels stack onto the coarsest level.
"""

from __future__ import annotations

import numpy as np
import torch

from lsbseg.annotations.stats import AnchorConfig
from lsbseg.errors import DataError
from lsbseg.network.backbone import STAGE_STRIDES


def assign_widths_to_levels(config: AnchorConfig, n_levels: int = len(STAGE_STRIDES)) -> list[list[int]]:
    """widths per level, ascending; level i holds width i (overflow on the last)."""
    per_level: list[list[int]] = [[] for _ in range(n_levels)]
    for i, w in enumerate(config.widths):
        per_level[min(i, n_levels - 1)].append(w)
    return per_level


def generate_anchors(config: AnchorConfig, input_size: tuple[int, int]) -> list[torch.Tensor]:
    """Per-level anchor tensors, each (Hf*Wf*A_level, 4), location-major then
    (width, ratio) pair, matching the head's output ordering."""
    h, w = input_size
    per_level = assign_widths_to_levels(config)
    out = []
    for stride, widths in zip(STAGE_STRIDES, per_level):
        fh, fw = (h + stride - 1) // stride, (w + stride - 1) // stride
        if not widths:
            out.append(torch.zeros((0, 4), dtype=torch.float32))
            continue
        shapes = torch.tensor(
            [(aw, aw * r) for aw in widths for r in config.aspect_ratios], dtype=torch.float32
        )  # (A, 2)
        cy, cx = torch.meshgrid(
            (torch.arange(fh, dtype=torch.float32) + 0.5) * stride,
            (torch.arange(fw, dtype=torch.float32) + 0.5) * stride,
            indexing="ij",
        )
        centers = torch.stack([cx.reshape(-1), cy.reshape(-1)], dim=1)  # (L, 2)
        half = shapes / 2.0
        boxes = torch.cat(
            [
                (centers[:, None, :] - half[None, :, :]),
                (centers[:, None, :] + half[None, :, :]),
            ],
            dim=2,
        )  # (L, A, 4)
        out.append(boxes.reshape(-1, 4))
    return out


def _to_cxcywh(boxes: torch.Tensor) -> tuple[torch.Tensor, ...]:
    w = boxes[..., 2] - boxes[..., 0]
    h = boxes[..., 3] - boxes[..., 1]
    cx = boxes[..., 0] + 0.5 * w
    cy = boxes[..., 1] + 0.5 * h
    return cx, cy, w, h


def box_encode(boxes: torch.Tensor, anchors: torch.Tensor) -> torch.Tensor:
    """Regression targets: center offsets normalized by anchor size, log size ratios."""
    boxes = torch.as_tensor(boxes, dtype=torch.float32)
    anchors = torch.as_tensor(anchors, dtype=torch.float32)
    bx, by, bw, bh = _to_cxcywh(boxes)
    ax, ay, aw, ah = _to_cxcywh(anchors)
    if torch.any(aw <= 0) or torch.any(ah <= 0):
        raise DataError("anchors must have positive area")
    return torch.stack([(bx - ax) / aw, (by - ay) / ah, torch.log(bw / aw), torch.log(bh / ah)], dim=-1)


def box_decode(targets: torch.Tensor, anchors: torch.Tensor) -> torch.Tensor:
    """Inverse of box_encode."""
    targets = torch.as_tensor(targets, dtype=torch.float32)
    anchors = torch.as_tensor(anchors, dtype=torch.float32)
    ax, ay, aw, ah = _to_cxcywh(anchors)
    if torch.any(aw <= 0) or torch.any(ah <= 0):
        raise DataError("anchors must have positive area")
    cx = targets[..., 0] * aw + ax
    cy = targets[..., 1] * ah + ay
    w = torch.exp(targets[..., 2]) * aw
    h = torch.exp(targets[..., 3]) * ah
    return torch.stack([cx - w / 2, cy - h / 2, cx + w / 2, cy + h / 2], dim=-1)


def box_iou(a: torch.Tensor, b: torch.Tensor) -> torch.Tensor:
    """Pairwise IoU matrix of shape (len(a), len(b))."""
    a = torch.as_tensor(a, dtype=torch.float32)
    b = torch.as_tensor(b, dtype=torch.float32)
    area_a = (a[:, 2] - a[:, 0]).clamp(min=0) * (a[:, 3] - a[:, 1]).clamp(min=0)
    area_b = (b[:, 2] - b[:, 0]).clamp(min=0) * (b[:, 3] - b[:, 1]).clamp(min=0)
    lt = torch.maximum(a[:, None, :2], b[None, :, :2])
    rb = torch.minimum(a[:, None, 2:], b[None, :, 2:])
    wh = (rb - lt).clamp(min=0)
    inter = wh[..., 0] * wh[..., 1]
    union = area_a[:, None] + area_b[None, :] - inter
    return torch.where(union > 0, inter / union, torch.zeros_like(inter))


def encode_np(boxes: np.ndarray, anchors: np.ndarray) -> np.ndarray:
    return box_encode(torch.as_tensor(boxes), torch.as_tensor(anchors)).numpy()


def decode_np(targets: np.ndarray, anchors: np.ndarray) -> np.ndarray:
    return box_decode(torch.as_tensor(targets), torch.as_tensor(anchors)).numpy()
