"""The assembled panoptic model and checkpoint weight surgery."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch
import torch.nn as nn

from lsbseg.annotations.stats import AnchorConfig
from lsbseg.errors import DataError
from lsbseg.network.anchors import assign_widths_to_levels, box_decode, generate_anchors
from lsbseg.network.backbone import STAGE_CHANNELS, Backbone
from lsbseg.network.gga import SemanticBranch
from lsbseg.network.heads import MASK_PATCH, ROI_SAMPLE, InstanceHead, MaskHead
from lsbseg.network.roi import roi_crop_batch
from lsbseg.scaling import ArcsinhScaling

DEFAULT_ANCHORS = AnchorConfig(widths=(32, 64, 128, 256, 512))
CLASS_NAMES = ("galaxy", "tidal_structure", "diffuse_halo", "ghosted_halo")


@dataclass
class Detection:
    """One predicted instance: class, confidence, box, full-image mask."""

    cls: str
    score: float
    bbox: tuple[float, float, float, float]
    mask: np.ndarray

    def __post_init__(self) -> None:
        if not 0.0 <= self.score <= 1.0:
            raise DataError(f"detection score must be in [0, 1], got {self.score}")


def expand_input_channels(weights: np.ndarray | torch.Tensor) -> np.ndarray | torch.Tensor:
    """Turn a (K, 3, k, k) first-layer kernel into (K, 4, k, k) by duplicating
    the third input channel."""
    is_torch = isinstance(weights, torch.Tensor)
    w = weights if is_torch else torch.as_tensor(weights)
    if w.ndim != 4 or w.shape[1] != 3:
        raise DataError(f"expected (K, 3, k, k) weights, got shape {tuple(w.shape)}")
    expanded = torch.cat([w, w[:, 2:3]], dim=1)
    return expanded if is_torch else expanded.numpy()


class PanopticNet(nn.Module):
    """Adaptive scaling -> shared backbone -> instance + semantic branches."""

    def __init__(
        self,
        anchor_config: AnchorConfig = DEFAULT_ANCHORS,
        image_channels: int = 2,
        orientations: int = 8,
        attention_grid: int = 8,
    ):
        super().__init__()
        self.anchor_config = anchor_config
        self.image_channels = image_channels
        self.orientations = orientations
        self.attention_grid = attention_grid
        self.scaling = ArcsinhScaling(image_channels)
        self.backbone = Backbone(in_channels=2 * image_channels)
        per_level = assign_widths_to_levels(anchor_config)
        anchors_per_level = [len(ws) * len(anchor_config.aspect_ratios) for ws in per_level]
        self.instance_head = InstanceHead(STAGE_CHANNELS, anchors_per_level)
        self.mask_head = MaskHead(in_channels=STAGE_CHANNELS[0])
        self.semantic = SemanticBranch(
            STAGE_CHANNELS, orientations=orientations, grid=attention_grid
        )
        self._anchor_cache: dict[tuple[int, int], torch.Tensor] = {}

    def arch_config(self) -> dict:
        return {
            "anchor_widths": list(self.anchor_config.widths),
            "anchor_ratios": list(self.anchor_config.aspect_ratios),
            "image_channels": self.image_channels,
            "orientations": self.orientations,
            "attention_grid": self.attention_grid,
        }

    @classmethod
    def from_arch_config(cls, cfg: dict) -> "PanopticNet":
        return cls(
            anchor_config=AnchorConfig(
                widths=tuple(cfg["anchor_widths"]), aspect_ratios=tuple(cfg["anchor_ratios"])
            ),
            image_channels=cfg["image_channels"],
            orientations=cfg["orientations"],
            attention_grid=cfg["attention_grid"],
        )

    def instance_parameters(self):
        """SGD group: scaling, backbone, and the instance branch."""
        for module in (self.scaling, self.backbone, self.instance_head, self.mask_head):
            yield from module.parameters()

    def semantic_parameters(self):
        """Adam group: the Gabor-attention semantic branch."""
        yield from self.semantic.parameters()

    def anchors_for(self, size: tuple[int, int]) -> torch.Tensor:
        if size not in self._anchor_cache:
            self._anchor_cache[size] = torch.cat(generate_anchors(self.anchor_config, size))
        return self._anchor_cache[size]

    def forward(self, images: torch.Tensor) -> dict:
        """images: (B, 2, H, W) -> raw branch outputs plus anchors and features."""
        h, w = images.shape[-2:]
        x = self.scaling(images)
        features = self.backbone(x)
        obj, cls, box = self.instance_head(features)
        semantic_logits, attention = self.semantic(features, (h, w))
        return {
            "objectness": obj,
            "class_logits": cls,
            "box_deltas": box,
            "semantic_logits": semantic_logits,
            "attention": attention,
            "features": features,
            "anchors": self.anchors_for((h, w)),
        }

    def predict_masks(self, features: list[torch.Tensor], boxes: torch.Tensor) -> torch.Tensor:
        """Mask probability patches for image-space boxes on a single image:
        (N, 28, 28). features are the batched maps; batch index 0 is used."""
        stride = 4  # masks are cut from the finest level
        patches = roi_crop_batch(features[0][0], boxes / stride, ROI_SAMPLE)
        logits = self.mask_head(patches)
        return torch.sigmoid(logits[:, 0])

    @torch.no_grad()
    def predict(
        self, image: np.ndarray, top_k: int = 100, min_score: float = 0.05
    ) -> tuple[list[Detection], np.ndarray]:
        """Run one H x W x 2 image: raw detections (pre-fusion) and cirrus map."""
        self.eval()
        tensor = torch.as_tensor(
            np.ascontiguousarray(image.transpose(2, 0, 1)), dtype=torch.float32
        ).unsqueeze(0)
        h, w = tensor.shape[-2:]
        out = self.forward(tensor)
        obj = torch.sigmoid(out["objectness"][0])
        cls_prob = torch.softmax(out["class_logits"][0], dim=-1)
        cls_score, cls_idx = cls_prob.max(dim=-1)
        scores = obj * cls_score
        boxes = box_decode(out["box_deltas"][0], out["anchors"])
        keep = scores >= min_score
        scores, boxes, cls_idx = scores[keep], boxes[keep], cls_idx[keep]
        if scores.numel() > top_k:
            order = torch.argsort(scores, descending=True, stable=True)[:top_k]
            scores, boxes, cls_idx = scores[order], boxes[order], cls_idx[order]
        boxes[:, 0::2] = boxes[:, 0::2].clamp(0, w)
        boxes[:, 1::2] = boxes[:, 1::2].clamp(0, h)
        valid = (boxes[:, 2] - boxes[:, 0] >= 1) & (boxes[:, 3] - boxes[:, 1] >= 1)
        scores, boxes, cls_idx = scores[valid], boxes[valid], cls_idx[valid]

        detections: list[Detection] = []
        if scores.numel():
            patches = self.predict_masks(out["features"], boxes)
            for score, box, ci, patch in zip(scores, boxes, cls_idx, patches):
                mask = paste_mask(patch.numpy(), box.numpy(), (h, w))
                if not mask.any():
                    continue
                detections.append(
                    Detection(
                        cls=CLASS_NAMES[int(ci)],
                        score=float(score),
                        bbox=tuple(float(v) for v in box),
                        mask=mask,
                    )
                )
        cirrus = torch.sigmoid(out["semantic_logits"][0, 0]).numpy()
        return detections, cirrus


def paste_mask(
    patch: np.ndarray, box: np.ndarray, image_size: tuple[int, int], threshold: float = 0.5
) -> np.ndarray:
    """Resample a mask probability patch into its box and threshold at 0.5."""
    h, w = image_size
    x0, y0, x1, y1 = [float(v) for v in box]
    out = np.zeros((h, w), dtype=bool)
    ix0, iy0 = max(int(np.floor(x0)), 0), max(int(np.floor(y0)), 0)
    ix1, iy1 = min(int(np.ceil(x1)), w), min(int(np.ceil(y1)), h)
    if ix1 <= ix0 or iy1 <= iy0:
        return out
    ph, pw = patch.shape
    xs = np.arange(ix0, ix1) + 0.5
    ys = np.arange(iy0, iy1) + 0.5
    # map image pixel centers into patch pixel-center coordinates
    u = (xs - x0) / (x1 - x0) * pw - 0.5
    v = (ys - y0) / (y1 - y0) * ph - 0.5
    u0 = np.floor(u).astype(int)
    v0 = np.floor(v).astype(int)
    fu, fv = u - u0, v - v0

    def tap(vv: np.ndarray, uu: np.ndarray) -> np.ndarray:
        valid_v = (vv >= 0) & (vv < ph)
        valid_u = (uu >= 0) & (uu < pw)
        vals = patch[np.clip(vv, 0, ph - 1)[:, None], np.clip(uu, 0, pw - 1)[None, :]]
        return vals * (valid_v[:, None] & valid_u[None, :])

    v00 = tap(v0, u0)
    v01 = tap(v0, u0 + 1)
    v10 = tap(v0 + 1, u0)
    v11 = tap(v0 + 1, u0 + 1)
    top = v00 * (1 - fu)[None, :] + v01 * fu[None, :]
    bot = v10 * (1 - fu)[None, :] + v11 * fu[None, :]
    probs = top * (1 - fv)[:, None] + bot * fv[:, None]
    out[iy0:iy1, ix0:ix1] = probs >= threshold
    return out
