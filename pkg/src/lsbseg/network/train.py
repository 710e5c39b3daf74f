"""End-to-end training with the paper's two optimizer groups.

Instance group (scaling + backbone + instance branch): SGD, lr 0.01
halved every 25 epochs, L2 5e-4. Semantic group (Gabor branch): Adam,
lr 1e-3 decayed by 0.98 per epoch, L2 5e-7. Training is deterministic
given the schedule seed.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Protocol

import numpy as np
import torch

from lsbseg.annotations.labels import Sample
from lsbseg.errors import ConfigError
from lsbseg.imaging.transforms import augment
from lsbseg.network.checkpoint import save_checkpoint
from lsbseg.network.losses import compute_losses
from lsbseg.network.model import PanopticNet

INSTANCE_LR = 0.01
INSTANCE_HALVING_PERIOD = 25
INSTANCE_WEIGHT_DECAY = 5e-4
SEMANTIC_LR = 1e-3
SEMANTIC_DECAY = 0.98
SEMANTIC_WEIGHT_DECAY = 5e-7


@dataclass
class TrainSchedule:
    total_epochs: int
    batch_size: int = 2
    seed: int = 0
    instance_lr: float = INSTANCE_LR
    momentum: float = 0.9
    instance_weight_decay: float = INSTANCE_WEIGHT_DECAY
    semantic_lr: float = SEMANTIC_LR
    semantic_decay: float = SEMANTIC_DECAY
    semantic_weight_decay: float = SEMANTIC_WEIGHT_DECAY
    semantic_loss_weight: float = 1.0  # instance and semantic losses sum equally
    augment: bool = True
    noise_sigma: float = 0.1
    checkpoint_interval: int = 10

    def __post_init__(self) -> None:
        if self.total_epochs < 1:
            raise ConfigError("total_epochs must be positive")
        if self.instance_lr <= 0 or self.semantic_lr <= 0:
            raise ConfigError("learning rates must be positive")
        if self.batch_size < 1:
            raise ConfigError("batch_size must be positive")


def instance_lr(schedule: TrainSchedule, epoch: int) -> float:
    """SGD learning rate at a 0-based epoch index."""
    return schedule.instance_lr * 0.5 ** (epoch // INSTANCE_HALVING_PERIOD)


def semantic_lr(schedule: TrainSchedule, epoch: int) -> float:
    """Adam learning rate at a 0-based epoch index."""
    return schedule.semantic_lr * schedule.semantic_decay**epoch


class TrainHooks(Protocol):
    """Callbacks that pause training at chosen epoch boundaries."""

    review_epochs: list[int]

    def on_review(
        self, epoch: int, model: PanopticNet, dataset: list[Sample]
    ) -> list[Sample] | None: ...


@dataclass
class TrainResult:
    model: PanopticNet
    history: list[dict[str, float]] = field(default_factory=list)
    checkpoints: list[Path] = field(default_factory=list)
    dataset: list[Sample] | None = None


def _batches(order: np.ndarray, size: int):
    for i in range(0, len(order), size):
        yield order[i : i + size]


def train(
    dataset: list[Sample],
    schedule: TrainSchedule,
    model: PanopticNet | None = None,
    hitl_hooks: TrainHooks | None = None,
    out_dir: str | Path | None = None,
    step_callback: Callable[[int, dict[str, float]], bool] | None = None,
) -> TrainResult:
    """Train for schedule.total_epochs, pausing for HITL hooks when given.

    step_callback(step, losses) may return True to stop early (used by
    smoke tests that stop once a target metric is reached). Checkpoints
    are written every checkpoint_interval epochs and at review epochs.
    """
    if not dataset:
        raise ConfigError("cannot train on an empty dataset")
    torch.manual_seed(schedule.seed)
    rng = np.random.default_rng(schedule.seed)
    if model is None:
        model = PanopticNet()
    opt_inst = torch.optim.SGD(
        list(model.instance_parameters()),
        lr=schedule.instance_lr,
        momentum=schedule.momentum,
        weight_decay=schedule.instance_weight_decay,
    )
    opt_sem = torch.optim.Adam(
        list(model.semantic_parameters()),
        lr=schedule.semantic_lr,
        weight_decay=schedule.semantic_weight_decay,
    )
    out_dir = Path(out_dir) if out_dir is not None else None
    if out_dir is not None:
        out_dir.mkdir(parents=True, exist_ok=True)
    result = TrainResult(model=model)
    step = 0
    stop = False
    for epoch in range(schedule.total_epochs):
        opt_inst.param_groups[0]["lr"] = instance_lr(schedule, epoch)
        opt_sem.param_groups[0]["lr"] = semantic_lr(schedule, epoch)
        model.train()
        epoch_losses: dict[str, float] = {}
        n_batches = 0
        order = rng.permutation(len(dataset))
        for batch_idx in _batches(order, schedule.batch_size):
            samples = [dataset[int(i)] for i in batch_idx]
            if schedule.augment:
                samples = [augment(s, rng, sigma=schedule.noise_sigma) for s in samples]
            images = torch.stack(
                [
                    torch.as_tensor(
                        np.ascontiguousarray(s.image.pixels.transpose(2, 0, 1)),
                        dtype=torch.float32,
                    )
                    for s in samples
                ]
            )
            outputs = model(images)
            losses = compute_losses(model, outputs, samples, rng)
            total = (
                losses["objectness"]
                + losses["box"]
                + losses["class"]
                + losses["mask"]
                + schedule.semantic_loss_weight * losses["semantic"]
            )
            opt_inst.zero_grad()
            opt_sem.zero_grad()
            total.backward()
            opt_inst.step()
            opt_sem.step()
            step += 1
            scalars = {k: float(v.detach()) for k, v in losses.items()}
            scalars["total"] = float(total.detach())
            for k, v in scalars.items():
                epoch_losses[k] = epoch_losses.get(k, 0.0) + v
            n_batches += 1
            if step_callback is not None and step_callback(step, scalars):
                stop = True
                break
        result.history.append(
            {"epoch": epoch, **{k: v / max(n_batches, 1) for k, v in epoch_losses.items()}}
        )
        completed = epoch + 1
        at_review = hitl_hooks is not None and completed in hitl_hooks.review_epochs
        if out_dir is not None and (
            completed % schedule.checkpoint_interval == 0
            or completed == schedule.total_epochs
            or at_review
        ):
            ckpt = out_dir / f"checkpoint-epoch{completed:04d}.lckp"
            save_checkpoint(model, ckpt, epoch=completed)
            result.checkpoints.append(ckpt)
        if at_review:
            updated = hitl_hooks.on_review(completed, model, dataset)
            if updated is not None:
                dataset = updated
        if stop:
            break
    result.dataset = dataset
    return result
