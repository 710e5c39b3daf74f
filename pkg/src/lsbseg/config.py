"""Run configuration: a JSON document with explicit defaults for every
pipeline knob. Unknown keys are rejected; the effective config is echoed
into each output directory for provenance."""

from __future__ import annotations

import hashlib
import json
from pathlib import Path

from pydantic import BaseModel, ConfigDict, ValidationError

from lsbseg.annotations.stats import AnchorConfig
from lsbseg.errors import ConfigError
from lsbseg.imaging.synth import SynthConfig
from lsbseg.network.train import TrainSchedule

TRAIN_FRACTION = 0.8


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid")


class SynthSection(_Strict):
    n_samples: int = 40
    image_size: int = 256
    galaxy_count: tuple[int, int] = (1, 3)
    diffuse_halo_count: tuple[int, int] = (1, 2)
    ghosted_halo_count: tuple[int, int] = (0, 2)
    tidal_stream_count: tuple[int, int] = (0, 1)
    cirrus_probability: float = 0.5
    cirrus_octaves: int = 4
    cirrus_persistence: float = 0.55
    cirrus_coverage_threshold: float = 0.55
    seed: int = 0

    def to_synth_config(self) -> SynthConfig:
        base = SynthConfig(
            galaxy_count=self.galaxy_count,
            diffuse_halo_count=self.diffuse_halo_count,
            ghosted_halo_count=self.ghosted_halo_count,
            tidal_stream_count=self.tidal_stream_count,
            cirrus_probability=self.cirrus_probability,
            cirrus_octaves=self.cirrus_octaves,
            cirrus_persistence=self.cirrus_persistence,
            cirrus_coverage_threshold=self.cirrus_coverage_threshold,
            seed=self.seed,
        )
        return base.scaled(self.image_size)


class TrainSection(_Strict):
    epochs: int = 200
    batch_size: int = 2
    seed: int = 0
    instance_lr: float = 0.01
    momentum: float = 0.9
    instance_weight_decay: float = 5e-4
    semantic_lr: float = 1e-3
    semantic_decay: float = 0.98
    semantic_weight_decay: float = 5e-7
    semantic_loss_weight: float = 1.0
    augment: bool = True
    noise_sigma: float = 0.1
    checkpoint_interval: int = 10

    def to_schedule(self, epochs: int | None = None, seed: int | None = None) -> TrainSchedule:
        return TrainSchedule(
            total_epochs=epochs if epochs is not None else self.epochs,
            batch_size=self.batch_size,
            seed=seed if seed is not None else self.seed,
            instance_lr=self.instance_lr,
            momentum=self.momentum,
            instance_weight_decay=self.instance_weight_decay,
            semantic_lr=self.semantic_lr,
            semantic_decay=self.semantic_decay,
            semantic_weight_decay=self.semantic_weight_decay,
            semantic_loss_weight=self.semantic_loss_weight,
            augment=self.augment,
            noise_sigma=self.noise_sigma,
            checkpoint_interval=self.checkpoint_interval,
        )


class ModelSection(_Strict):
    anchor_widths: tuple[int, ...] = (32, 64, 128, 256, 512)
    anchor_ratios: tuple[float, ...] = (0.5, 1.0, 2.0)
    orientations: int = 8
    attention_grid: int = 8

    def to_anchor_config(self) -> AnchorConfig:
        return AnchorConfig(widths=self.anchor_widths, aspect_ratios=self.anchor_ratios)


class HitlSection(_Strict):
    total_epochs: int = 200
    score_min: float = 0.5
    iou_thresh: float = 0.5
    iou_accept: float = 0.5
    withhold: float = 0.5


class EvalSection(_Strict):
    thresholds: tuple[float, ...] = (0.5, 0.75)
    score_threshold: float = 0.5
    nms_iou: float = 0.5


class RunConfig(_Strict):
    synth: SynthSection = SynthSection()
    train: TrainSection = TrainSection()
    model: ModelSection = ModelSection()
    hitl: HitlSection = HitlSection()
    eval: EvalSection = EvalSection()

    @classmethod
    def load(cls, path: str | Path | None) -> "RunConfig":
        if path is None:
            return cls()
        path = Path(path)
        if not path.exists():
            raise ConfigError(f"config file not found: {path}")
        try:
            data = json.loads(path.read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON: {exc}") from exc
        try:
            return cls.model_validate(data)
        except ValidationError as exc:
            raise ConfigError(f"{path}: {exc}") from exc

    def echo_to(self, out_dir: str | Path) -> None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        (out_dir / "config.json").write_text(
            json.dumps(self.model_dump(), indent=2, sort_keys=True) + "\n", encoding="utf-8"
        )


def split_of(sample_id: str) -> str:
    """Stable 80/20 train/test split by sample-id hash."""
    digest = hashlib.sha256(sample_id.encode("utf-8")).hexdigest()
    return "train" if int(digest[:8], 16) % 100 < TRAIN_FRACTION * 100 else "test"


def select_split(dataset: list, split: str) -> list:
    if split == "all":
        return list(dataset)
    if split not in ("train", "test"):
        raise ConfigError(f"unknown split {split!r}")
    return [s for s in dataset if split_of(s.id) == split]
