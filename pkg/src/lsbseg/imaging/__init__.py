"""Image representation, preprocessing, augmentation, and synthetic scenes."""

from lsbseg.imaging.image import LsbImage, read_lsb1, write_lsb1
from lsbseg.imaging.transforms import (
    DIHEDRAL_GROUP_SIZE,
    apply_dihedral,
    augment,
    center_crop_and_resize,
)
from lsbseg.imaging.synth import SynthConfig, cirrus_field, synthesize_sample

__all__ = [
    "LsbImage",
    "read_lsb1",
    "write_lsb1",
    "DIHEDRAL_GROUP_SIZE",
    "apply_dihedral",
    "augment",
    "center_crop_and_resize",
    "SynthConfig",
    "cirrus_field",
    "synthesize_sample",
]
