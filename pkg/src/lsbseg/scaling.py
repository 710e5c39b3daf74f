"""Adaptive intensity scaling: learnable per-channel arcsinh stretch.

The stretch maps each input channel c through arcsinh(a_c * X_c + b_c)
and concatenates the result with the untouched input, so a 2-channel
image becomes a 4-channel tensor. arcsinh(z) = ln(z + sqrt(z^2 + 1)).

Analytic derivatives, with u = a*X + b and s = 1/sqrt(u^2 + 1):
    d arcsinh(u) / da = X * s
    d arcsinh(u) / db = s
    d arcsinh(u) / dX = a * s
The identity channels pass their upstream gradient straight through to X.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch
import torch.nn as nn

from lsbseg.errors import DataError


@dataclass
class ScalingParams:
    """Per-channel stretch parameters; a=1, b=0 is a benign monotone start."""

    a: np.ndarray
    b: np.ndarray

    def __post_init__(self) -> None:
        self.a = np.asarray(self.a, dtype=np.float64).reshape(-1)
        self.b = np.asarray(self.b, dtype=np.float64).reshape(-1)
        if self.a.shape != self.b.shape:
            raise DataError("a and b must have one value per channel")
        if not (np.isfinite(self.a).all() and np.isfinite(self.b).all()):
            raise DataError("scaling parameters must be finite")

    @classmethod
    def identity(cls, channels: int = 2) -> "ScalingParams":
        return cls(a=np.ones(channels), b=np.zeros(channels))


def scale_forward(x: np.ndarray, params: ScalingParams) -> np.ndarray:
    """H x W x C in, H x W x 2C out: stretched channels then raw channels."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 3 or x.shape[2] != params.a.size:
        raise DataError(f"expected H x W x {params.a.size} input, got shape {x.shape}")
    stretched = np.arcsinh(params.a * x + params.b)
    return np.concatenate([stretched, x], axis=2)


def scale_gradients(
    x: np.ndarray, params: ScalingParams, upstream: np.ndarray
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Backward pass of scale_forward.

    upstream matches the H x W x 2C output; an H x W x C upstream is
    accepted as a gradient on the stretched channels only. Returns
    (dL/da, dL/db, dL/dX) with a/b gradients summed over pixels.
    """
    x = np.asarray(x, dtype=np.float64)
    upstream = np.asarray(upstream, dtype=np.float64)
    c = params.a.size
    if upstream.shape == x.shape:
        g_stretch, g_raw = upstream, np.zeros_like(x)
    elif upstream.shape == (x.shape[0], x.shape[1], 2 * c):
        g_stretch, g_raw = upstream[:, :, :c], upstream[:, :, c:]
    else:
        raise DataError(f"upstream shape {upstream.shape} incompatible with input {x.shape}")
    u = params.a * x + params.b
    s = 1.0 / np.sqrt(u * u + 1.0)
    d_a = np.sum(g_stretch * x * s, axis=(0, 1))
    d_b = np.sum(g_stretch * s, axis=(0, 1))
    d_x = g_stretch * params.a * s + g_raw
    return d_a, d_b, d_x


class ArcsinhScaling(nn.Module):
    """Torch version used in the panoptic model; autograd reproduces the
    analytic gradients above."""

    def __init__(self, channels: int = 2):
        super().__init__()
        self.a = nn.Parameter(torch.ones(channels))
        self.b = nn.Parameter(torch.zeros(channels))

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        # x: (B, C, H, W) -> (B, 2C, H, W)
        a = self.a.view(1, -1, 1, 1)
        b = self.b.view(1, -1, 1, 1)
        return torch.cat([torch.asinh(a * x + b), x], dim=1)

    def params(self) -> ScalingParams:
        return ScalingParams(
            a=self.a.detach().cpu().numpy().astype(np.float64),
            b=self.b.detach().cpu().numpy().astype(np.float64),
        )
