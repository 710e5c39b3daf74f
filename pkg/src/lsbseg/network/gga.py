"""Gridded Gabor attention for cirrus segmentation.

A fixed bank of oriented quadrature Gabor pairs filters a learned
projection of the coarsest backbone features. Orientation energies are
pooled over a G x G grid of cells; a per-cell softmax over orientations
yields attention weights, and the attended energy gates the features
before an upsampling decoder produces a full-resolution cirrus map.

Smooth activations (SiLU) keep the whole branch friendly to
finite-difference gradient verification.
"""

from __future__ import annotations

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F


def gabor_bank(
    orientations: int = 8,
    kernel_size: int = 7,
    frequency: float = 0.25,
    sigma: float = 2.0,
    aspect: float = 0.5,
) -> torch.Tensor:
    """(orientations, 2, k, k) cos/sin quadrature kernels at angles k*pi/K.

    Kernels are zero-mean (cos phase) and L2-normalized, so responses
    reflect oriented structure rather than local brightness.
    """
    half = (kernel_size - 1) / 2.0
    ys, xs = np.mgrid[-half : half + 1, -half : half + 1]
    bank = np.zeros((orientations, 2, kernel_size, kernel_size), dtype=np.float64)
    for k in range(orientations):
        theta = k * np.pi / orientations
        u = xs * np.cos(theta) + ys * np.sin(theta)
        v = -xs * np.sin(theta) + ys * np.cos(theta)
        envelope = np.exp(-(u * u + (aspect * v) ** 2) / (2 * sigma * sigma))
        even = envelope * np.cos(2 * np.pi * frequency * u)
        odd = envelope * np.sin(2 * np.pi * frequency * u)
        even -= even.mean()
        bank[k, 0] = even / np.linalg.norm(even)
        bank[k, 1] = odd / np.linalg.norm(odd)
    return torch.tensor(bank, dtype=torch.float32)


class GaborAttention(nn.Module):
    """Orientation attention block: features in, (gated features, weights) out."""

    def __init__(
        self,
        in_channels: int,
        orientations: int = 8,
        grid: int = 8,
        kernel_size: int = 7,
    ):
        super().__init__()
        self.orientations = orientations
        self.grid = grid
        # one shared projected map keeps orientation energies comparable;
        # a bias would only add border artifacts under the zero-mean bank
        self.project = nn.Conv2d(in_channels, 1, 1, bias=False)
        bank = gabor_bank(orientations, kernel_size)
        weight = bank.reshape(orientations * 2, 1, kernel_size, kernel_size)
        self.register_buffer("bank", weight)
        self.gain = nn.Parameter(torch.ones(1))
        self.gate_scale = nn.Parameter(torch.ones(1))
        self.gate_bias = nn.Parameter(torch.zeros(1))

    def forward(self, features: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
        b, _, h, w = features.shape
        k = self.orientations
        proj = self.project(features)  # (B, 1, h, w)
        pad = self.bank.shape[-1] // 2
        resp = F.conv2d(proj, self.bank, padding=pad)  # (B, 2K, h, w)
        resp = resp.reshape(b, k, 2, h, w)
        energy = resp[:, :, 0].square() + resp[:, :, 1].square()  # (B, K, h, w)

        pooled = F.adaptive_avg_pool2d(energy, (self.grid, self.grid))  # (B, K, G, G)
        # scale-free logits so attention stays informative across dynamic ranges
        logits = pooled / (pooled.mean(dim=1, keepdim=True) + 1e-6)
        weights = torch.softmax(self.gain * logits, dim=1)  # (B, K, G, G)

        cellwise = F.interpolate(weights, size=(h, w), mode="nearest")
        attended = (cellwise * energy).sum(dim=1, keepdim=True)  # (B, 1, h, w)
        attended = attended / (attended.mean(dim=(2, 3), keepdim=True) + 1e-6)
        gate = torch.sigmoid(self.gate_scale * attended + self.gate_bias)
        return features * gate, weights


class SemanticBranch(nn.Module):
    """Gabor attention on the coarsest level plus a skip-connected decoder."""

    def __init__(
        self,
        level_channels: tuple[int, ...] = (32, 64, 128, 256),
        orientations: int = 8,
        grid: int = 8,
    ):
        super().__init__()
        c1, c2, c3, c4 = level_channels
        self.attention = GaborAttention(c4, orientations=orientations, grid=grid)
        self.up3 = self._stage(c4 + c3, 96)
        self.up2 = self._stage(96 + c2, 64)
        self.up1 = self._stage(64 + c1, 48)
        # replicate padding keeps a constant input constant (featureless
        # images decode to a spatially flat map)
        self.head = nn.Conv2d(48, 1, 3, padding=1, padding_mode="replicate")

    @staticmethod
    def _stage(cin: int, cout: int) -> nn.Sequential:
        return nn.Sequential(
            nn.Conv2d(cin, cout, 3, padding=1, padding_mode="replicate"), nn.SiLU()
        )

    @staticmethod
    def _up_to(x: torch.Tensor, ref: torch.Tensor) -> torch.Tensor:
        return F.interpolate(x, size=ref.shape[-2:], mode="bilinear", align_corners=False)

    def forward(
        self, features: list[torch.Tensor], out_size: tuple[int, int]
    ) -> tuple[torch.Tensor, torch.Tensor]:
        """Returns (cirrus logits at full resolution, attention weights)."""
        f1, f2, f3, f4 = features
        gated, weights = self.attention(f4)
        x = self.up3(torch.cat([self._up_to(gated, f3), f3], dim=1))
        x = self.up2(torch.cat([self._up_to(x, f2), f2], dim=1))
        x = self.up1(torch.cat([self._up_to(x, f1), f1], dim=1))
        logits = F.interpolate(
            self.head(x), size=out_size, mode="bilinear", align_corners=False
        )
        return logits, weights
