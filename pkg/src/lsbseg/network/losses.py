"""Anchor matching and the panoptic loss terms.

Matching: an anchor is positive at IoU >= 0.5 with some ground-truth box,
negative below 0.3, ignored between; additionally every ground truth
claims its best-overlapping anchor so no object is left unmatchable.
Objectness is computed over sampled positives and negatives at a 1:3
ratio. Mask loss is taught on the ground-truth boxes. The semantic term
is skipped entirely (zero, no gradient) when a sample lacks a cirrus mask.
"""

from __future__ import annotations

import numpy as np
import torch
import torch.nn.functional as F

from lsbseg.annotations.labels import Sample
from lsbseg.errors import NumericError
from lsbseg.network.anchors import box_encode, box_iou
from lsbseg.network.heads import MASK_PATCH, ROI_SAMPLE
from lsbseg.network.model import CLASS_NAMES, PanopticNet
from lsbseg.network.roi import roi_crop_batch

IOU_POSITIVE = 0.5
IOU_NEGATIVE = 0.3
NEGATIVES_PER_POSITIVE = 3
MAX_POSITIVES = 64
BACKGROUND_NEGATIVES = 16  # sampled when a sample has no positives


def match_anchors(
    anchors: torch.Tensor, gt_boxes: torch.Tensor
) -> tuple[torch.Tensor, torch.Tensor]:
    """Per-anchor match flag (1 pos / 0 neg / -1 ignore) and matched gt index."""
    n = anchors.shape[0]
    if gt_boxes.numel() == 0:
        return torch.zeros(n, dtype=torch.long), torch.full((n,), -1, dtype=torch.long)
    iou = box_iou(anchors, gt_boxes)  # (N, M)
    best_iou, best_gt = iou.max(dim=1)
    flags = torch.full((n,), -1, dtype=torch.long)
    flags[best_iou < IOU_NEGATIVE] = 0
    flags[best_iou >= IOU_POSITIVE] = 1
    # force-match: the best anchor of each gt becomes positive
    best_anchor = iou.argmax(dim=0)
    flags[best_anchor] = 1
    best_gt[best_anchor] = torch.arange(gt_boxes.shape[0])
    return flags, best_gt


def _sample_indices(
    flags: torch.Tensor, rng: np.random.Generator
) -> tuple[torch.Tensor, torch.Tensor]:
    pos = torch.nonzero(flags == 1, as_tuple=True)[0]
    neg = torch.nonzero(flags == 0, as_tuple=True)[0]
    if pos.numel() > MAX_POSITIVES:
        keep = rng.choice(pos.numel(), size=MAX_POSITIVES, replace=False)
        pos = pos[torch.as_tensor(np.sort(keep))]
    n_neg = NEGATIVES_PER_POSITIVE * pos.numel() if pos.numel() else BACKGROUND_NEGATIVES
    if neg.numel() > n_neg:
        keep = rng.choice(neg.numel(), size=n_neg, replace=False)
        neg = neg[torch.as_tensor(np.sort(keep))]
    return pos, neg


def _mask_targets(sample: Sample, indices: list[int], boxes: torch.Tensor) -> torch.Tensor:
    """Ground-truth masks resampled into their boxes as 28x28 float targets."""
    targets = []
    for gi, box in zip(indices, boxes):
        mask = torch.as_tensor(sample.instances[gi].mask, dtype=torch.float32)
        x0, y0, x1, y1 = [float(v) for v in box]
        h, w = mask.shape
        ix0, iy0 = int(np.floor(max(x0, 0))), int(np.floor(max(y0, 0)))
        ix1, iy1 = int(np.ceil(min(x1, w))), int(np.ceil(min(y1, h)))
        crop = mask[iy0 : max(iy1, iy0 + 1), ix0 : max(ix1, ix0 + 1)]
        resized = F.interpolate(
            crop[None, None], size=(MASK_PATCH, MASK_PATCH), mode="bilinear", align_corners=False
        )[0, 0]
        targets.append((resized >= 0.5).float())
    return torch.stack(targets)


def compute_losses(
    model: PanopticNet,
    outputs: dict,
    samples: list[Sample],
    rng: np.random.Generator,
) -> dict[str, torch.Tensor]:
    """Loss dict {objectness, box, class, mask, semantic} for one batch."""
    anchors = outputs["anchors"]
    class_to_idx = {c: i for i, c in enumerate(CLASS_NAMES)}
    zero = torch.tensor(0.0)
    obj_terms, box_terms, cls_terms, mask_terms, sem_terms = [], [], [], [], []

    for bi, sample in enumerate(samples):
        gt_boxes = torch.tensor(
            [list(l.bbox) for l in sample.instances], dtype=torch.float32
        ).reshape(-1, 4)
        gt_classes = torch.tensor(
            [class_to_idx[l.cls] for l in sample.instances], dtype=torch.long
        )
        flags, matched = match_anchors(anchors, gt_boxes)
        pos, neg = _sample_indices(flags, rng)

        obj_logits = outputs["objectness"][bi]
        picked = torch.cat([pos, neg])
        if picked.numel():
            target = torch.cat([torch.ones(pos.numel()), torch.zeros(neg.numel())])
            obj_terms.append(
                F.binary_cross_entropy_with_logits(obj_logits[picked], target)
            )
        if pos.numel():
            deltas = outputs["box_deltas"][bi][pos]
            target_deltas = box_encode(gt_boxes[matched[pos]], anchors[pos])
            box_terms.append(F.smooth_l1_loss(deltas, target_deltas))
            cls_terms.append(
                F.cross_entropy(outputs["class_logits"][bi][pos], gt_classes[matched[pos]])
            )
        if len(sample.instances):
            stride = 4
            boxes = gt_boxes
            patches = roi_crop_batch(outputs["features"][0][bi], boxes / stride, ROI_SAMPLE)
            mask_logits = model.mask_head(patches)[:, 0]
            mask_target = _mask_targets(sample, list(range(len(sample.instances))), boxes)
            mask_terms.append(F.binary_cross_entropy_with_logits(mask_logits, mask_target))
        if sample.cirrus_mask is not None:
            sem_target = torch.as_tensor(sample.cirrus_mask, dtype=torch.float32)
            sem_terms.append(
                F.binary_cross_entropy_with_logits(
                    outputs["semantic_logits"][bi, 0], sem_target
                )
            )

    def reduce(terms: list[torch.Tensor]) -> torch.Tensor:
        return torch.stack(terms).mean() if terms else zero

    losses = {
        "objectness": reduce(obj_terms),
        "box": reduce(box_terms),
        "class": reduce(cls_terms),
        "mask": reduce(mask_terms),
        "semantic": reduce(sem_terms),
    }
    for name, value in losses.items():
        if not torch.isfinite(value):
            raise NumericError(f"non-finite {name} loss")
    return losses
