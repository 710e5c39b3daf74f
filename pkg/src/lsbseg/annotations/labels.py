"""Instance labels, samples, and moments-based ellipse fitting."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from lsbseg.errors import DataError
from lsbseg.imaging.image import LsbImage
from lsbseg.masks import mask_bbox

# The four instance classes; cirrus is a semantic mask, not an instance.
INSTANCE_CLASSES = ("galaxy", "tidal_structure", "diffuse_halo", "ghosted_halo")

# Classes eligible for review in the HITL protocol (tidal structures are
# annotated exhaustively and never reviewed).
HITL_CLASSES = ("galaxy", "diffuse_halo", "ghosted_halo")


@dataclass(frozen=True)
class Provenance:
    """Origin of a label: human annotation or an accepted HITL review item."""

    kind: str
    round: int | None = None

    def __post_init__(self) -> None:
        if self.kind not in ("human", "hitl"):
            raise DataError(f"unknown provenance kind {self.kind!r}")
        if self.kind == "hitl" and (self.round is None or self.round < 1):
            raise DataError("hitl provenance requires a round >= 1")
        if self.kind == "human" and self.round is not None:
            raise DataError("human provenance carries no round")

    @classmethod
    def human(cls) -> "Provenance":
        return cls("human")

    @classmethod
    def hitl(cls, round: int) -> "Provenance":
        return cls("hitl", round)

    def to_str(self) -> str:
        return "human" if self.kind == "human" else f"hitl:{self.round}"

    @classmethod
    def from_str(cls, s: str) -> "Provenance":
        if s == "human":
            return cls.human()
        if s.startswith("hitl:"):
            return cls.hitl(int(s.split(":", 1)[1]))
        raise DataError(f"unparseable provenance {s!r}")


@dataclass
class InstanceLabel:
    """One annotated object: class, boolean mask, tight box, provenance."""

    cls: str
    mask: np.ndarray
    bbox: tuple[int, int, int, int]
    provenance: Provenance

    def __post_init__(self) -> None:
        if self.cls not in INSTANCE_CLASSES:
            raise DataError(f"unknown instance class {self.cls!r}")
        self.mask = np.asarray(self.mask, dtype=bool)
        if self.mask.ndim != 2:
            raise DataError("instance mask must be 2-D")
        tight = mask_bbox(self.mask)  # raises on empty mask
        if tuple(self.bbox) != tight:
            raise DataError(f"bbox {tuple(self.bbox)} is not the tight box {tight}")
        self.bbox = tight

    @classmethod
    def from_mask(cls, class_name: str, mask: np.ndarray, provenance: Provenance) -> "InstanceLabel":
        mask = np.asarray(mask, dtype=bool)
        return cls(cls=class_name, mask=mask, bbox=mask_bbox(mask), provenance=provenance)


@dataclass
class Sample:
    """An image with instance labels, an optional cirrus mask, and lineage."""

    image: LsbImage
    instances: list[InstanceLabel]
    cirrus_mask: np.ndarray | None
    galaxy_count: int
    dataset_version: int = 0

    def __post_init__(self) -> None:
        shape = (self.image.height, self.image.width)
        for label in self.instances:
            if label.mask.shape != shape:
                raise DataError(
                    f"sample {self.image.id!r}: mask shape {label.mask.shape} != image {shape}"
                )
        if self.cirrus_mask is not None:
            self.cirrus_mask = np.asarray(self.cirrus_mask, dtype=bool)
            if self.cirrus_mask.shape != shape:
                raise DataError(
                    f"sample {self.image.id!r}: cirrus mask shape mismatch with image {shape}"
                )
            if not self.cirrus_mask.any():
                self.cirrus_mask = None
        human_galaxies = sum(
            1 for l in self.instances if l.cls == "galaxy" and l.provenance.kind == "human"
        )
        if self.galaxy_count < human_galaxies:
            raise DataError(
                f"sample {self.image.id!r}: galaxy_count {self.galaxy_count} < "
                f"{human_galaxies} human-annotated galaxies"
            )

    @property
    def id(self) -> str:
        return self.image.id


@dataclass
class Ellipse:
    """Center (x, y), semi-axes (major >= minor), major-axis angle in [0, pi)."""

    center: tuple[float, float]
    semi_axes: tuple[float, float]
    angle: float
    degenerate: bool = field(default=False, compare=False)

    def __post_init__(self) -> None:
        a, b = self.semi_axes
        if not (a >= b > 0):
            raise DataError(f"semi-axes must satisfy a >= b > 0, got {self.semi_axes}")
        self.angle = float(self.angle) % np.pi


def fit_ellipse(mask: np.ndarray) -> Ellipse:
    """Moments fit: centroid plus second-moment axes rescaled to the mask area.

    Collinear masks get the minor axis floored at 0.5px and the degenerate flag.
    """
    mask = np.asarray(mask, dtype=bool)
    ys, xs = np.nonzero(mask)
    if ys.size < 5:
        raise DataError(f"ellipse fit needs >= 5 mask pixels, got {ys.size}")
    cx, cy = float(xs.mean()), float(ys.mean())
    cov = np.cov(np.stack([xs - cx, ys - cy]), bias=True)
    evals, evecs = np.linalg.eigh(cov)
    lam_minor, lam_major = max(float(evals[0]), 0.0), max(float(evals[1]), 0.0)
    a0 = 2.0 * np.sqrt(lam_major)
    b0 = 2.0 * np.sqrt(lam_minor)
    degenerate = b0 < 0.5
    if degenerate:
        b0 = 0.5
    # match the ellipse area to the pixel count
    s = np.sqrt(ys.size / (np.pi * a0 * b0)) if a0 > 0 else 1.0
    a, b = a0 * s, b0 * s
    if b < 0.5:
        b = 0.5
        degenerate = True
    v = evecs[:, 1]  # major-axis direction as (x, y)
    angle = float(np.arctan2(v[1], v[0])) % np.pi
    return Ellipse(center=(cx, cy), semi_axes=(max(a, b), min(a, b)), angle=angle, degenerate=degenerate)


def render_ellipse_mask(shape: tuple[int, int], ellipse: Ellipse) -> np.ndarray:
    """Boolean mask of pixels inside the ellipse."""
    h, w = shape
    ys, xs = np.mgrid[0:h, 0:w].astype(np.float64)
    dx, dy = xs - ellipse.center[0], ys - ellipse.center[1]
    ca, sa = np.cos(ellipse.angle), np.sin(ellipse.angle)
    u = dx * ca + dy * sa
    v = -dx * sa + dy * ca
    a, b = ellipse.semi_axes
    return (u / a) ** 2 + (v / b) ** 2 <= 1.0
