import sys
from pathlib import Path

import numpy as np
import pytest
import torch

sys.path.insert(0, str(Path(__file__).parent))

from lsbseg.annotations.labels import InstanceLabel, Provenance, Sample
from lsbseg.imaging.image import LsbImage
from lsbseg.imaging.synth import SynthConfig, synthesize_sample


@pytest.fixture(autouse=True)
def _fixed_torch_threads():
    torch.set_num_threads(2)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def make_sample(seed: int = 0, size: int = 96, sample_id: str | None = None) -> Sample:
    cfg = SynthConfig().scaled(size)
    return synthesize_sample(
        cfg, np.random.default_rng(seed), sample_id=sample_id or f"fix-{seed:03d}"
    )


def sample_from_masks(
    masks: list[tuple[str, np.ndarray]],
    cirrus: np.ndarray | None = None,
    galaxy_count: int | None = None,
    sample_id: str = "hand",
) -> Sample:
    """Build a sample around hand-made masks on a dim constant image."""
    shape = masks[0][1].shape if masks else (cirrus.shape if cirrus is not None else (32, 32))
    pixels = np.full((*shape, 2), 0.05, dtype=np.float32)
    labels = [InstanceLabel.from_mask(cls, m, Provenance.human()) for cls, m in masks]
    n_gal = sum(1 for cls, _ in masks if cls == "galaxy")
    return Sample(
        image=LsbImage(pixels=pixels, id=sample_id),
        instances=labels,
        cirrus_mask=cirrus,
        galaxy_count=galaxy_count if galaxy_count is not None else n_gal,
    )
