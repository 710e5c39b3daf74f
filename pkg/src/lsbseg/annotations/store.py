"""Versioned dataset persistence.

Layout: a directory with ``manifest.jsonl`` (one JSON object per sample
per line) and an ``images/`` subdirectory of LSB1 containers. Masks are
stored inline as RLE. The manifest is written atomically.
"""

from __future__ import annotations

import json
from pathlib import Path

from lsbseg.annotations.labels import InstanceLabel, Provenance, Sample
from lsbseg.errors import DataError
from lsbseg.imaging.image import read_lsb1, write_lsb1
from lsbseg.masks import rle_decode, rle_encode

MANIFEST_NAME = "manifest.jsonl"


def sample_to_record(sample: Sample, image_path: str) -> dict:
    record = {
        "id": sample.id,
        "image": image_path,
        "version": sample.dataset_version,
        "galaxy_count": sample.galaxy_count,
        "instances": [
            {
                "class": label.cls,
                "bbox": list(label.bbox),
                "mask_rle": rle_encode(label.mask),
                "provenance": label.provenance.to_str(),
            }
            for label in sample.instances
        ],
    }
    if sample.cirrus_mask is not None:
        record["cirrus_rle"] = rle_encode(sample.cirrus_mask)
    return record


def save_dataset(dataset: list[Sample], path: str | Path) -> None:
    """Write all samples under path; the manifest lands last, atomically."""
    path = Path(path)
    images_dir = path / "images"
    images_dir.mkdir(parents=True, exist_ok=True)
    lines = []
    for sample in dataset:
        rel = f"images/{sample.id}.lsb1"
        write_lsb1(sample.image, path / rel)
        lines.append(json.dumps(sample_to_record(sample, rel), sort_keys=True))
    tmp = path / (MANIFEST_NAME + ".tmp")
    tmp.write_text("\n".join(lines) + "\n", encoding="utf-8")
    tmp.replace(path / MANIFEST_NAME)


def record_to_sample(record: dict, root: Path) -> Sample:
    sample_id = record.get("id", "<missing id>")
    try:
        image = read_lsb1(root / record["image"], image_id=sample_id)
        h, w = image.height, image.width
        instances = [
            InstanceLabel(
                cls=inst["class"],
                mask=rle_decode(inst["mask_rle"], h, w),
                bbox=tuple(inst["bbox"]),
                provenance=Provenance.from_str(inst["provenance"]),
            )
            for inst in record["instances"]
        ]
        cirrus = None
        if "cirrus_rle" in record:
            cirrus = rle_decode(record["cirrus_rle"], h, w)
        return Sample(
            image=image,
            instances=instances,
            cirrus_mask=cirrus,
            galaxy_count=record["galaxy_count"],
            dataset_version=record["version"],
        )
    except (KeyError, DataError, ValueError, TypeError) as exc:
        raise DataError(f"sample {sample_id!r}: {exc}") from exc


def load_dataset(path: str | Path) -> list[Sample]:
    """Load a dataset directory written by save_dataset."""
    path = Path(path)
    manifest = path / MANIFEST_NAME
    if not manifest.exists():
        raise DataError(f"no manifest at {manifest}")
    samples = []
    for lineno, line in enumerate(manifest.read_text(encoding="utf-8").splitlines(), start=1):
        if not line.strip():
            continue
        try:
            record = json.loads(line)
        except json.JSONDecodeError as exc:
            raise DataError(f"{manifest}:{lineno}: malformed JSON: {exc}") from exc
        samples.append(record_to_sample(record, path))
    return samples
