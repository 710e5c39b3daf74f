"""Review queue construction, decision application, and acceptance stats.

Only galaxy, diffuse halo, and ghosted halo detections are reviewable;
tidal structures were annotated exhaustively and never enter the queue.
Accepted items become new labels (append-only); the original annotations
are never modified.
"""

from __future__ import annotations

import dataclasses
import json
import time
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path

import numpy as np

from lsbseg.annotations.labels import HITL_CLASSES, InstanceLabel, Provenance, Sample
from lsbseg.errors import DataError, LsbsegError
from lsbseg.masks import mask_bbox, rle_decode, rle_encode
from lsbseg.metrics import mask_iou
from lsbseg.panoptic import PanopticOutput

ENQUEUE_IOU = 0.5
ENQUEUE_SCORE_MIN = 0.5


class DecisionConflict(LsbsegError):
    """A decided item received a contradicting decision."""


@dataclass
class ReviewItem:
    id: str
    sample_id: str
    cls: str
    score: float
    bbox: tuple[float, float, float, float]
    mask: np.ndarray
    round: int
    status: str = "pending"
    decided_at: float | None = None

    def __post_init__(self) -> None:
        if self.cls not in HITL_CLASSES:
            raise DataError(f"class {self.cls!r} is not reviewable")
        if self.status not in ("pending", "accepted", "rejected"):
            raise DataError(f"unknown review status {self.status!r}")

    def to_record(self) -> dict:
        h, w = self.mask.shape
        return {
            "id": self.id,
            "sample_id": self.sample_id,
            "class": self.cls,
            "score": self.score,
            "bbox": list(self.bbox),
            "height": h,
            "width": w,
            "mask_rle": rle_encode(self.mask),
            "round": self.round,
            "status": self.status,
            "decided_at": self.decided_at,
        }

    @classmethod
    def from_record(cls, record: dict) -> "ReviewItem":
        return cls(
            id=record["id"],
            sample_id=record["sample_id"],
            cls=record["class"],
            score=record["score"],
            bbox=tuple(record["bbox"]),
            mask=rle_decode(record["mask_rle"], record["height"], record["width"]),
            round=record["round"],
            status=record["status"],
            decided_at=record["decided_at"],
        )


def enqueue_false_positives(
    predictions: dict[str, PanopticOutput],
    dataset: list[Sample],
    iou_thresh: float = ENQUEUE_IOU,
    score_min: float = ENQUEUE_SCORE_MIN,
    round: int = 1,
) -> list[ReviewItem]:
    """Pending items for confident detections of reviewable classes that
    match no existing same-class annotation."""
    missing = [s.id for s in dataset if s.id not in predictions]
    if missing:
        raise DataError(f"predictions missing for sample id {missing[0]!r}")
    items: list[ReviewItem] = []
    for sample in dataset:
        counter = 0
        for det in predictions[sample.id].detections:
            if det.cls not in HITL_CLASSES or det.score < score_min:
                continue
            matched = any(
                label.cls == det.cls and mask_iou(det.mask, label.mask) >= iou_thresh
                for label in sample.instances
            )
            if matched:
                continue
            items.append(
                ReviewItem(
                    id=f"r{round:02d}-{sample.id}-{counter:03d}",
                    sample_id=sample.id,
                    cls=det.cls,
                    score=det.score,
                    bbox=det.bbox,
                    mask=det.mask,
                    round=round,
                )
            )
            counter += 1
    return items


def apply_decisions(dataset: list[Sample], decisions: list[ReviewItem]) -> list[Sample]:
    """New dataset version: accepted items appended as hitl-provenance labels."""
    pending = [i.id for i in decisions if i.status == "pending"]
    if pending:
        raise DataError(f"item {pending[0]!r} is still pending")
    by_sample: dict[str, list[ReviewItem]] = {}
    for item in decisions:
        if item.status == "accepted":
            by_sample.setdefault(item.sample_id, []).append(item)
    known_ids = {s.id for s in dataset}
    for sid in by_sample:
        if sid not in known_ids:
            raise DataError(f"decision references unknown sample {sid!r}")
    version = max(s.dataset_version for s in dataset) + 1
    out: list[Sample] = []
    for sample in dataset:
        accepted = by_sample.get(sample.id, [])
        new_labels = [
            InstanceLabel(
                cls=item.cls,
                mask=item.mask,
                bbox=mask_bbox(item.mask),
                provenance=Provenance.hitl(item.round),
            )
            for item in accepted
        ]
        galaxy_gain = sum(1 for item in accepted if item.cls == "galaxy")
        out.append(
            dataclasses.replace(
                sample,
                instances=list(sample.instances) + new_labels,
                galaxy_count=sample.galaxy_count + galaxy_gain,
                dataset_version=version,
            )
        )
    return out


def acceptance_stats(items: list[ReviewItem]) -> dict:
    """Acceptance rates per round, per class, and cumulative.

    Ratios are exact fractions converted to float at the end; groupings
    with no decided items are reported as None rather than 0.
    """
    decided = [i for i in items if i.status in ("accepted", "rejected")]

    def rate(group: list[ReviewItem]) -> float | None:
        if not group:
            return None
        accepted = sum(1 for i in group if i.status == "accepted")
        return float(Fraction(accepted, len(group)))

    rounds = sorted({i.round for i in items})
    classes = sorted({i.cls for i in items})
    return {
        "overall": rate(decided),
        "per_round": {r: rate([i for i in decided if i.round == r]) for r in rounds},
        "per_class": {c: rate([i for i in decided if i.cls == c]) for c in classes},
        "per_round_class": {
            r: {c: rate([i for i in decided if i.round == r and i.cls == c]) for c in classes}
            for r in rounds
        },
        "counts": {
            "reviewed": len(decided),
            "accepted": sum(1 for i in decided if i.status == "accepted"),
            "pending": sum(1 for i in items if i.status == "pending"),
        },
    }


def oracle_reviewer(
    queue: list[ReviewItem],
    hidden_ground_truth: dict[str, list[InstanceLabel]],
    iou_accept: float = 0.5,
) -> dict[str, str]:
    """Scripted stand-in for the human: accept an item iff it overlaps an
    unannotated hidden object of the same class at IoU >= iou_accept."""
    decisions: dict[str, str] = {}
    for item in queue:
        hidden = hidden_ground_truth.get(item.sample_id, [])
        hit = any(
            label.cls == item.cls and mask_iou(item.mask, label.mask) >= iou_accept
            for label in hidden
        )
        decisions[item.id] = "accepted" if hit else "rejected"
    return decisions


def withhold_labels(
    dataset: list[Sample],
    fraction: float,
    rng: np.random.Generator,
    classes: tuple[str, ...] = HITL_CLASSES,
) -> tuple[list[Sample], dict[str, list[InstanceLabel]]]:
    """Split each sample's labels into a visible dataset and hidden labels.

    Labels of eligible classes are withheld independently with the given
    probability; other classes always stay visible.
    """
    visible: list[Sample] = []
    hidden: dict[str, list[InstanceLabel]] = {}
    for sample in dataset:
        keep, drop = [], []
        for label in sample.instances:
            if label.cls in classes and rng.uniform() < fraction:
                drop.append(label)
            else:
                keep.append(label)
        visible.append(dataclasses.replace(sample, instances=keep))
        if drop:
            hidden[sample.id] = drop
    return visible, hidden


class HitlStore:
    """On-disk review state: a queue file, an append-only decision log, and
    round metadata. Decisions are idempotent; contradictions raise."""

    QUEUE = "queue.jsonl"
    LOG = "decisions.jsonl"
    META = "meta.json"

    def __init__(self, root: str | Path):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)
        self.items: dict[str, ReviewItem] = {}
        self.round = 0
        self.version_lineage: list[int] = [0]
        self._load()

    # -- persistence ------------------------------------------------------

    def _load(self) -> None:
        queue = self.root / self.QUEUE
        if queue.exists():
            for line in queue.read_text(encoding="utf-8").splitlines():
                if line.strip():
                    item = ReviewItem.from_record(json.loads(line))
                    self.items[item.id] = item
        meta = self.root / self.META
        if meta.exists():
            data = json.loads(meta.read_text(encoding="utf-8"))
            self.round = data.get("round", 0)
            self.version_lineage = data.get("version_lineage", [0])

    def _persist_queue(self) -> None:
        tmp = self.root / (self.QUEUE + ".tmp")
        lines = [json.dumps(i.to_record(), sort_keys=True) for i in self.items.values()]
        tmp.write_text("\n".join(lines) + ("\n" if lines else ""), encoding="utf-8")
        tmp.replace(self.root / self.QUEUE)

    def _persist_meta(self) -> None:
        tmp = self.root / (self.META + ".tmp")
        tmp.write_text(
            json.dumps(
                {"round": self.round, "version_lineage": self.version_lineage}, sort_keys=True
            ),
            encoding="utf-8",
        )
        tmp.replace(self.root / self.META)

    def _append_log(self, entry: dict) -> None:
        with open(self.root / self.LOG, "a", encoding="utf-8") as f:
            f.write(json.dumps(entry, sort_keys=True) + "\n")
            f.flush()

    # -- operations -------------------------------------------------------

    def add_items(self, items: list[ReviewItem], round: int) -> None:
        for item in items:
            self.items[item.id] = item
        self.round = round
        self._persist_queue()
        self._persist_meta()

    def record_version(self, version: int) -> None:
        if self.version_lineage and version <= self.version_lineage[-1]:
            raise DataError("dataset versions must be strictly increasing")
        self.version_lineage.append(version)
        self._persist_meta()

    def decide(self, item_id: str, status: str) -> tuple[ReviewItem, bool]:
        """Returns (item, changed). Repeating a decision is a no-op;
        contradicting one raises DecisionConflict."""
        if status not in ("accepted", "rejected"):
            raise DataError(f"invalid decision status {status!r}")
        item = self.items.get(item_id)
        if item is None:
            raise DataError(f"unknown review item {item_id!r}")
        if item.status == status:
            return item, False
        if item.status != "pending":
            raise DecisionConflict(
                f"item {item_id!r} already decided as {item.status!r}"
            )
        item.status = status
        item.decided_at = time.time()
        self._append_log(
            {"item_id": item_id, "status": status, "decided_at": item.decided_at}
        )
        self._persist_queue()
        return item, True

    def pending(self, round: int | None = None) -> list[ReviewItem]:
        out = [i for i in self.items.values() if i.status == "pending"]
        if round is not None:
            out = [i for i in out if i.round == round]
        return sorted(out, key=lambda i: i.id)

    def of_round(self, round: int) -> list[ReviewItem]:
        return sorted(
            (i for i in self.items.values() if i.round == round), key=lambda i: i.id
        )

    def progress(self) -> dict:
        stats = acceptance_stats(list(self.items.values()))
        per_round: dict[int, dict] = {}
        for item in self.items.values():
            bucket = per_round.setdefault(
                item.round,
                {"pending": 0, "accepted": 0, "rejected": 0, "per_class": {}},
            )
            bucket[item.status] += 1
            cls_bucket = bucket["per_class"].setdefault(
                item.cls, {"pending": 0, "accepted": 0, "rejected": 0}
            )
            cls_bucket[item.status] += 1
        return {
            "round": self.round,
            "version_lineage": self.version_lineage,
            "rounds": per_round,
            "acceptance": stats,
        }
