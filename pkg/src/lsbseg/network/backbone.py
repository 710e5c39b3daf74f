"""Desk-scale residual backbone: 4 stages at strides 4/8/16/32.

GroupNorm replaces batch norm so tiny batches train stably and forward
passes are deterministic.
"""

from __future__ import annotations

import torch
import torch.nn as nn

STAGE_CHANNELS = (32, 64, 128, 256)
STAGE_STRIDES = (4, 8, 16, 32)


def _gn(channels: int) -> nn.GroupNorm:
    return nn.GroupNorm(min(8, channels), channels)


class ResidualBlock(nn.Module):
    def __init__(self, in_channels: int, out_channels: int, stride: int):
        super().__init__()
        self.conv1 = nn.Conv2d(in_channels, out_channels, 3, stride, 1, bias=False)
        self.norm1 = _gn(out_channels)
        self.conv2 = nn.Conv2d(out_channels, out_channels, 3, 1, 1, bias=False)
        self.norm2 = _gn(out_channels)
        self.shortcut = (
            nn.Conv2d(in_channels, out_channels, 1, stride, bias=False)
            if stride != 1 or in_channels != out_channels
            else nn.Identity()
        )

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        y = torch.relu(self.norm1(self.conv1(x)))
        y = self.norm2(self.conv2(y))
        return torch.relu(y + self.shortcut(x))


class Backbone(nn.Module):
    """Returns feature maps [stride 4, 8, 16, 32] with channels 32/64/128/256."""

    def __init__(self, in_channels: int = 4):
        super().__init__()
        c1, c2, c3, c4 = STAGE_CHANNELS
        self.stem = nn.Sequential(
            nn.Conv2d(in_channels, c1, 3, 2, 1, bias=False), _gn(c1), nn.ReLU(inplace=True)
        )
        self.stage1 = ResidualBlock(c1, c1, 2)
        self.stage2 = ResidualBlock(c1, c2, 2)
        self.stage3 = ResidualBlock(c2, c3, 2)
        self.stage4 = ResidualBlock(c3, c4, 2)

    @property
    def first_conv(self) -> nn.Conv2d:
        return self.stem[0]

    def forward(self, x: torch.Tensor) -> list[torch.Tensor]:
        x = self.stem(x)
        f1 = self.stage1(x)
        f2 = self.stage2(f1)
        f3 = self.stage3(f2)
        f4 = self.stage4(f3)
        return [f1, f2, f3, f4]
