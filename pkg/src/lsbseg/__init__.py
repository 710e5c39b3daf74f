"""lsbseg: panoptic segmentation of galactic structures in LSB images."""

__version__ = "0.1.0"
