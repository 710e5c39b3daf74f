"""Label data model, halo separation, anchor statistics, dataset persistence."""

from lsbseg.annotations.labels import (
    INSTANCE_CLASSES,
    Ellipse,
    InstanceLabel,
    Provenance,
    Sample,
    fit_ellipse,
    render_ellipse_mask,
)
from lsbseg.annotations.halos import HaloPart, HaloSeparation, separate_overlapping_halos
from lsbseg.annotations.stats import AnchorConfig, BoxStatistics, compute_box_statistics, select_anchor_config
from lsbseg.annotations.store import load_dataset, save_dataset

__all__ = [
    "INSTANCE_CLASSES",
    "Ellipse",
    "InstanceLabel",
    "Provenance",
    "Sample",
    "fit_ellipse",
    "render_ellipse_mask",
    "HaloPart",
    "HaloSeparation",
    "separate_overlapping_halos",
    "AnchorConfig",
    "BoxStatistics",
    "compute_box_statistics",
    "select_anchor_config",
    "load_dataset",
    "save_dataset",
]
