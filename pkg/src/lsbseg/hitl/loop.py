"""Closed-loop HITL protocol driven by the scripted oracle reviewer.

The loop trains with the review schedule, and at each review epoch:
predicts on every training sample, enqueues apparent false positives,
has the oracle decide each pending item (posted through the live HTTP
API, the same surface the review UI uses), applies the decisions to
produce a new dataset version, and resumes training on it.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import httpx
import numpy as np

from lsbseg.annotations.labels import InstanceLabel, Sample
from lsbseg.annotations.store import save_dataset
from lsbseg.hitl.review import (
    HitlStore,
    ReviewItem,
    acceptance_stats,
    apply_decisions,
    enqueue_false_positives,
    oracle_reviewer,
)
from lsbseg.hitl.schedule import HitlSchedule
from lsbseg.hitl.service import DATASET_SUBDIR, serve_in_background
from lsbseg.metrics import mask_iou
from lsbseg.network.model import PanopticNet
from lsbseg.network.train import TrainResult, TrainSchedule, train
from lsbseg.panoptic import fuse


@dataclass
class LoopStats:
    """Bookkeeping for the closed-loop acceptance properties."""

    initial_labels: int = 0
    accepted: int = 0
    reviewed: int = 0
    hidden_total: int = 0
    hidden_enqueued: int = 0
    items: list[ReviewItem] = field(default_factory=list)
    per_round_rates: dict = field(default_factory=dict)

    @property
    def enqueue_coverage(self) -> float:
        if self.hidden_total == 0:
            return 1.0
        return self.hidden_enqueued / self.hidden_total


@dataclass
class LoopResult:
    train_result: TrainResult
    dataset: list[Sample]
    stats: LoopStats
    store: HitlStore


class _OracleHooks:
    """TrainHooks implementation that reviews through the HTTP API."""

    def __init__(
        self,
        schedule: HitlSchedule,
        store: HitlStore,
        hidden: dict[str, list[InstanceLabel]],
        stats: LoopStats,
        base_url: str,
        state_dir: Path,
        score_min: float,
        iou_accept: float,
    ):
        self.review_epochs = schedule.review_epochs
        self.schedule = schedule
        self.store = store
        self.hidden = hidden
        self.stats = stats
        self.base_url = base_url
        self.state_dir = state_dir
        self.score_min = score_min
        self.iou_accept = iou_accept
        self._covered: set[tuple[str, int]] = set()

    def on_review(
        self, epoch: int, model: PanopticNet, dataset: list[Sample]
    ) -> list[Sample] | None:
        round_idx = self.schedule.round_of_epoch(epoch)
        predictions = {}
        for sample in dataset:
            detections, cirrus = model.predict(sample.image.pixels)
            predictions[sample.id] = fuse(detections, cirrus)
        items = enqueue_false_positives(
            predictions, dataset, score_min=self.score_min, round=round_idx
        )
        self.store.add_items(items, round=round_idx)
        self.stats.items.extend(items)
        self._track_hidden_coverage(items)

        decisions = oracle_reviewer(items, self.hidden, iou_accept=self.iou_accept)
        with httpx.Client(base_url=self.base_url, timeout=30.0) as client:
            for item_id in sorted(decisions):
                resp = client.post(
                    f"/api/items/{item_id}/decision", json={"status": decisions[item_id]}
                )
                resp.raise_for_status()

        decided = self.store.of_round(round_idx)
        self.stats.reviewed += len(decided)
        self.stats.accepted += sum(1 for i in decided if i.status == "accepted")
        new_dataset = apply_decisions(dataset, decided)
        self.store.record_version(new_dataset[0].dataset_version if new_dataset else 0)
        save_dataset(new_dataset, self.state_dir / DATASET_SUBDIR)
        return new_dataset

    def _track_hidden_coverage(self, items: list[ReviewItem]) -> None:
        """Mark hidden objects that any queued item has ever covered."""
        for sample_id, labels in self.hidden.items():
            sample_items = [i for i in items if i.sample_id == sample_id]
            for li, label in enumerate(labels):
                key = (sample_id, li)
                if key in self._covered:
                    continue
                if any(
                    i.cls == label.cls and mask_iou(i.mask, label.mask) >= self.iou_accept
                    for i in sample_items
                ):
                    self._covered.add(key)
        self.stats.hidden_enqueued = len(self._covered)


def run_oracle_loop(
    dataset: list[Sample],
    hidden: dict[str, list[InstanceLabel]],
    hitl_schedule: HitlSchedule,
    train_schedule: TrainSchedule,
    state_dir: str | Path,
    model: PanopticNet | None = None,
    score_min: float = 0.5,
    iou_accept: float = 0.5,
) -> LoopResult:
    """Run the full protocol with the oracle reviewer over a live service."""
    state_dir = Path(state_dir)
    state_dir.mkdir(parents=True, exist_ok=True)
    save_dataset(dataset, state_dir / DATASET_SUBDIR)
    store = HitlStore(state_dir)
    stats = LoopStats(
        initial_labels=sum(len(s.instances) for s in dataset),
        hidden_total=sum(len(v) for v in hidden.values()),
    )
    handle = serve_in_background(state_dir, store=store)
    try:
        hooks = _OracleHooks(
            schedule=hitl_schedule,
            store=store,
            hidden=hidden,
            stats=stats,
            base_url=handle.base_url,
            state_dir=state_dir,
            score_min=score_min,
            iou_accept=iou_accept,
        )
        schedule = TrainSchedule(
            **{
                **train_schedule.__dict__,
                "total_epochs": hitl_schedule.total_epochs,
            }
        )
        result = train(
            dataset, schedule, model=model, hitl_hooks=hooks, out_dir=state_dir / "checkpoints"
        )
    finally:
        handle.stop()
    stats.per_round_rates = acceptance_stats(stats.items)
    final_dataset = result.dataset if result.dataset is not None else dataset
    return LoopResult(train_result=result, dataset=final_dataset, stats=stats, store=store)
