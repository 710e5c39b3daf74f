"""Fusion of instance detections with the cirrus map, multi-label style.

Instance masks and the cirrus layer are kept independently and may
overlap; there is no mutual exclusion between the two segmentations.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image

from lsbseg.errors import DataError
from lsbseg.masks import rle_decode, rle_encode
from lsbseg.metrics import mask_iou
from lsbseg.network.model import Detection

SCORE_THRESHOLD = 0.5
NMS_IOU = 0.5


@dataclass
class PanopticOutput:
    detections: list[Detection]
    cirrus_map: np.ndarray  # H x W probabilities
    cirrus_mask: np.ndarray  # cirrus_map >= 0.5

    def __post_init__(self) -> None:
        self.cirrus_map = np.asarray(self.cirrus_map, dtype=np.float32)
        if self.cirrus_map.min() < 0.0 or self.cirrus_map.max() > 1.0:
            raise DataError("cirrus map values must be probabilities in [0, 1]")
        self.cirrus_mask = np.asarray(self.cirrus_mask, dtype=bool)


def fuse(
    detections: list[Detection],
    cirrus_map: np.ndarray,
    score_threshold: float = SCORE_THRESHOLD,
    nms_iou: float = NMS_IOU,
) -> PanopticOutput:
    """Score filter plus per-class greedy mask NMS; the cirrus layer passes
    through untouched."""
    kept: list[Detection] = []
    survivors = [d for d in detections if d.score >= score_threshold]
    survivors.sort(key=lambda d: -d.score)
    for det in survivors:
        suppressed = any(
            prev.cls == det.cls and mask_iou(prev.mask, det.mask) >= nms_iou for prev in kept
        )
        if not suppressed:
            kept.append(det)
    cirrus_map = np.asarray(cirrus_map, dtype=np.float32)
    return PanopticOutput(
        detections=kept, cirrus_map=cirrus_map, cirrus_mask=cirrus_map >= 0.5
    )


def save_predictions(outputs: dict[str, PanopticOutput], path: str | Path) -> None:
    """Prediction dump: JSONL manifest plus 8-bit quantized cirrus planes."""
    path = Path(path)
    planes = path / "cirrus"
    planes.mkdir(parents=True, exist_ok=True)
    lines = []
    for sample_id, out in outputs.items():
        h, w = out.cirrus_map.shape
        rel = f"cirrus/{sample_id}.png"
        quantized = np.round(out.cirrus_map * 255).astype(np.uint8)
        Image.fromarray(quantized, mode="L").save(path / rel)
        record = {
            "id": sample_id,
            "height": h,
            "width": w,
            "cirrus_prob": rel,
            "instances": [
                {
                    "class": d.cls,
                    "bbox": [float(v) for v in d.bbox],
                    "score": d.score,
                    "mask_rle": rle_encode(d.mask),
                }
                for d in out.detections
            ],
        }
        lines.append(json.dumps(record, sort_keys=True))
    tmp = path / "predictions.jsonl.tmp"
    tmp.write_text("\n".join(lines) + "\n", encoding="utf-8")
    tmp.replace(path / "predictions.jsonl")


def load_predictions(path: str | Path) -> dict[str, PanopticOutput]:
    path = Path(path)
    manifest = path / "predictions.jsonl"
    if not manifest.exists():
        raise DataError(f"no prediction manifest at {manifest}")
    outputs: dict[str, PanopticOutput] = {}
    for line in manifest.read_text(encoding="utf-8").splitlines():
        if not line.strip():
            continue
        record = json.loads(line)
        h, w = record["height"], record["width"]
        cirrus = np.asarray(Image.open(path / record["cirrus_prob"]), dtype=np.float32) / 255.0
        detections = []
        for inst in record["instances"]:
            mask = rle_decode(inst["mask_rle"], h, w)
            detections.append(
                Detection(
                    cls=inst["class"],
                    score=inst["score"],
                    bbox=tuple(inst["bbox"]),
                    mask=mask,
                )
            )
        outputs[record["id"]] = PanopticOutput(
            detections=detections, cirrus_map=cirrus, cirrus_mask=cirrus >= 0.5
        )
    return outputs
