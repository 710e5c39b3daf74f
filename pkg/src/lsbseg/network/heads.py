"""Instance branch: per-level detection heads and the RoI mask head."""

from __future__ import annotations

import torch
import torch.nn as nn

MASK_PATCH = 28
ROI_SAMPLE = 14


class InstanceHead(nn.Module):
    """Lateral 1x1 projections into a shared conv tower, with sibling 1x1
    heads per level for objectness, class scores, and box deltas."""

    def __init__(
        self,
        level_channels: tuple[int, ...],
        anchors_per_level: list[int],
        num_classes: int = 4,
        width: int = 64,
    ):
        super().__init__()
        self.num_classes = num_classes
        self.lateral = nn.ModuleList(
            [nn.Conv2d(c, width, 1) for c, a in zip(level_channels, anchors_per_level) if a > 0]
        )
        self.tower = nn.Sequential(
            nn.Conv2d(width, width, 3, padding=1),
            nn.ReLU(inplace=True),
            nn.Conv2d(width, width, 3, padding=1),
            nn.ReLU(inplace=True),
        )
        active = [a for a in anchors_per_level if a > 0]
        self.obj_heads = nn.ModuleList([nn.Conv2d(width, a, 1) for a in active])
        self.cls_heads = nn.ModuleList([nn.Conv2d(width, a * num_classes, 1) for a in active])
        self.box_heads = nn.ModuleList([nn.Conv2d(width, a * 4, 1) for a in active])
        self.anchors_per_level = anchors_per_level

    def forward(self, features: list[torch.Tensor]) -> tuple[torch.Tensor, ...]:
        """Flattened per-anchor outputs: obj (B, N), cls (B, N, K), box (B, N, 4)."""
        obj_all, cls_all, box_all = [], [], []
        idx = 0
        for level, a in zip(features, self.anchors_per_level):
            if a == 0:
                continue
            b = level.shape[0]
            x = self.tower(self.lateral[idx](level))
            obj = self.obj_heads[idx](x)  # (B, A, H, W)
            cls = self.cls_heads[idx](x)  # (B, A*K, H, W)
            box = self.box_heads[idx](x)  # (B, A*4, H, W)
            h, w = x.shape[-2:]
            obj_all.append(obj.permute(0, 2, 3, 1).reshape(b, -1))
            cls_all.append(
                cls.reshape(b, a, self.num_classes, h, w)
                .permute(0, 3, 4, 1, 2)
                .reshape(b, -1, self.num_classes)
            )
            box_all.append(
                box.reshape(b, a, 4, h, w).permute(0, 3, 4, 1, 2).reshape(b, -1, 4)
            )
            idx += 1
        return (
            torch.cat(obj_all, dim=1),
            torch.cat(cls_all, dim=1),
            torch.cat(box_all, dim=1),
        )


class MaskHead(nn.Module):
    """Small conv head on RoI patches producing 28x28 mask logits."""

    def __init__(self, in_channels: int, width: int = 32):
        super().__init__()
        self.convs = nn.Sequential(
            nn.Conv2d(in_channels, width, 3, padding=1),
            nn.SiLU(),
            nn.Conv2d(width, width, 3, padding=1),
            nn.SiLU(),
            nn.ConvTranspose2d(width, width, 2, stride=2),
            nn.SiLU(),
            nn.Conv2d(width, 1, 1),
        )

    def forward(self, patches: torch.Tensor) -> torch.Tensor:
        """(N, C, 14, 14) RoI patches -> (N, 1, 28, 28) mask logits."""
        return self.convs(patches)
