"""Procedural generator of LSB scenes with exhaustive ground truth.

Stands in for a real survey at desk scale: every rendered structure
(galaxy, diffuse halo, ghosted halo, tidal stream, cirrus) is recorded as
a label, so withholding experiments have a known complete truth.

Intensity convention: structure peaks are drawn below 1 and the final
image is normalized to roughly unit dynamic range, so the augmentation
noise sigma of 0.1 is meaningful relative to signal.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from lsbseg.errors import ConfigError
from lsbseg.imaging.image import LsbImage
from lsbseg.masks import mask_bbox

# resolved lazily to avoid a package-level import cycle with annotations
_REFERENCE_SIZE = 256


@dataclass
class SynthConfig:
    """Scene composition parameters. Pixel ranges are tuned for 256px images;
    use scaled() to adapt them to other sizes."""

    image_size: int = 256
    galaxy_count: tuple[int, int] = (1, 3)
    diffuse_halo_count: tuple[int, int] = (1, 2)
    ghosted_halo_count: tuple[int, int] = (0, 2)
    tidal_stream_count: tuple[int, int] = (0, 1)

    galaxy_radius: tuple[float, float] = (8.0, 20.0)
    galaxy_ellipticity: tuple[float, float] = (0.0, 0.5)
    galaxy_intensity: tuple[float, float] = (0.55, 1.0)

    halo_scale: tuple[float, float] = (1.4, 2.0)
    halo_intensity: tuple[float, float] = (0.08, 0.18)

    ring_radius: tuple[float, float] = (10.0, 22.0)
    ring_width: tuple[float, float] = (0.18, 0.3)
    ring_intensity: tuple[float, float] = (0.25, 0.5)

    stream_curvature: tuple[float, float] = (0.35, 0.7)
    stream_width: tuple[float, float] = (2.5, 5.0)
    stream_intensity: tuple[float, float] = (0.1, 0.22)

    cirrus_probability: float = 0.5
    cirrus_octaves: int = 4
    cirrus_persistence: float = 0.55
    cirrus_coverage_threshold: float = 0.55
    cirrus_intensity: tuple[float, float] = (0.12, 0.25)

    sky_level: float = 0.02
    sky_noise: float = 0.004
    mask_fraction: float = 0.1
    color_ratio: tuple[float, float] = (0.75, 1.3)
    seed: int = 0

    def __post_init__(self) -> None:
        for name in (
            "galaxy_count",
            "diffuse_halo_count",
            "ghosted_halo_count",
            "tidal_stream_count",
            "galaxy_radius",
            "galaxy_ellipticity",
            "galaxy_intensity",
            "halo_scale",
            "halo_intensity",
            "ring_radius",
            "ring_width",
            "ring_intensity",
            "stream_curvature",
            "stream_width",
            "stream_intensity",
            "cirrus_intensity",
            "color_ratio",
        ):
            lo, hi = getattr(self, name)
            if hi < lo:
                raise ConfigError(f"SynthConfig.{name}: empty range ({lo}, {hi})")
        if not 0.0 <= self.cirrus_coverage_threshold <= 1.0:
            raise ConfigError("cirrus_coverage_threshold must be in [0, 1]")
        if not 0.0 <= self.cirrus_probability <= 1.0:
            raise ConfigError("cirrus_probability must be in [0, 1]")
        if not 0.0 < self.mask_fraction < 1.0:
            raise ConfigError("mask_fraction must be in (0, 1)")
        if self.image_size < 16:
            raise ConfigError("image_size must be >= 16")

    def scaled(self, image_size: int) -> "SynthConfig":
        """Copy of this config with pixel-valued ranges rescaled to image_size."""
        s = image_size / self.image_size
        scale = lambda r: (r[0] * s, r[1] * s)
        return SynthConfig(
            image_size=image_size,
            galaxy_count=self.galaxy_count,
            diffuse_halo_count=self.diffuse_halo_count,
            ghosted_halo_count=self.ghosted_halo_count,
            tidal_stream_count=self.tidal_stream_count,
            galaxy_radius=scale(self.galaxy_radius),
            galaxy_ellipticity=self.galaxy_ellipticity,
            galaxy_intensity=self.galaxy_intensity,
            halo_scale=self.halo_scale,
            halo_intensity=self.halo_intensity,
            ring_radius=scale(self.ring_radius),
            ring_width=self.ring_width,
            ring_intensity=self.ring_intensity,
            stream_curvature=self.stream_curvature,
            stream_width=scale(self.stream_width),
            stream_intensity=self.stream_intensity,
            cirrus_probability=self.cirrus_probability,
            cirrus_octaves=self.cirrus_octaves,
            cirrus_persistence=self.cirrus_persistence,
            cirrus_coverage_threshold=self.cirrus_coverage_threshold,
            cirrus_intensity=self.cirrus_intensity,
            sky_level=self.sky_level,
            sky_noise=self.sky_noise,
            mask_fraction=self.mask_fraction,
            color_ratio=self.color_ratio,
            seed=self.seed,
        )


@dataclass
class _Structure:
    cls: str
    intensity: np.ndarray  # single-channel contribution, full frame
    mask: np.ndarray


def _add_structure(structures: list["_Structure"], cls: str, img: np.ndarray, mask: np.ndarray) -> None:
    # structures rendered fully outside the frame leave an empty mask; skip them
    if mask.any():
        structures.append(_Structure(cls, img, mask))


def _elliptical_radius(
    size: int, cx: float, cy: float, angle: float, axis_ratio: float
) -> np.ndarray:
    ys, xs = np.mgrid[0:size, 0:size].astype(np.float64)
    dx, dy = xs - cx, ys - cy
    u = dx * np.cos(angle) + dy * np.sin(angle)
    v = -dx * np.sin(angle) + dy * np.cos(angle)
    return np.sqrt(u * u + (v / axis_ratio) ** 2)


def _sersic(size, cx, cy, r_eff, angle, axis_ratio, peak, index) -> np.ndarray:
    r = _elliptical_radius(size, cx, cy, angle, axis_ratio)
    return peak * np.exp(-((r / r_eff) ** (1.0 / index)))


def _ring(size, cx, cy, radius, sigma, angle, axis_ratio, peak, fill) -> np.ndarray:
    r = _elliptical_radius(size, cx, cy, angle, axis_ratio)
    img = peak * np.exp(-((r - radius) ** 2) / (2 * sigma * sigma))
    if fill > 0:
        img = np.maximum(img, peak * fill * np.exp(-((r / (0.55 * radius)) ** 2)))
    return img


def _stream(size, cx, cy, radius, phi0, span, width, peak) -> np.ndarray:
    ys, xs = np.mgrid[0:size, 0:size].astype(np.float64)
    dx, dy = xs - cx, ys - cy
    r = np.hypot(dx, dy)
    phi = np.arctan2(dy, dx)
    # signed angular excess outside the arc span, wrapped to [-pi, pi]
    rel = np.mod(phi - phi0, 2 * np.pi)
    inside = rel <= span
    excess = np.minimum(np.abs(rel - span), np.abs(2 * np.pi - rel))
    d_radial = np.abs(r - radius)
    d = np.where(inside, d_radial, np.hypot(d_radial, excess * radius))
    return peak * np.exp(-(d * d) / (2 * width * width))


def cirrus_field(
    size: int,
    rng: np.random.Generator,
    orientation: float,
    octaves: int = 4,
    persistence: float = 0.55,
    squeeze: float = 3.0,
) -> np.ndarray:
    """Multi-octave anisotropic value noise in [0, 1], filaments along orientation."""
    ys, xs = np.mgrid[0:size, 0:size].astype(np.float64) / size
    # coordinates stretched along the filament direction lower its frequency
    u = (xs * np.cos(orientation) + ys * np.sin(orientation)) / squeeze
    v = -xs * np.sin(orientation) + ys * np.cos(orientation)
    span = np.sqrt(2.0)  # rotated unit square fits in [-sqrt2, sqrt2]
    total = np.zeros((size, size), dtype=np.float64)
    amp = 1.0
    freq = 3.0
    for _ in range(max(1, octaves)):
        res = int(np.ceil(2 * span * freq)) + 2
        grid = rng.standard_normal((res + 2, res + 2))
        gu = np.clip((u + span) * freq, 0.0, res - 1e-9)
        gv = np.clip((v + span) * freq, 0.0, res - 1e-9)
        iu, iv = gu.astype(int), gv.astype(int)
        fu, fv = gu - iu, gv - iv
        top = grid[iv, iu] * (1 - fu) + grid[iv, iu + 1] * fu
        bot = grid[iv + 1, iu] * (1 - fu) + grid[iv + 1, iu + 1] * fu
        total += amp * (top * (1 - fv) + bot * fv)
        amp *= persistence
        freq *= 2.0
    lo, hi = total.min(), total.max()
    return (total - lo) / (hi - lo) if hi > lo else np.zeros_like(total)


def _uniform(rng: np.random.Generator, lohi: tuple[float, float]) -> float:
    return float(rng.uniform(lohi[0], lohi[1]))


def _count(rng: np.random.Generator, lohi: tuple[int, int]) -> int:
    return int(rng.integers(lohi[0], lohi[1] + 1))


def synthesize_sample(config: SynthConfig, rng: np.random.Generator, sample_id: str = "synth"):
    """Render one scene. Returns a Sample with exhaustive instance labels,
    an optional cirrus mask, and galaxy_count set to the number rendered."""
    from lsbseg.annotations.labels import InstanceLabel, Provenance, Sample

    size = config.image_size
    frac = config.mask_fraction
    structures: list[_Structure] = []

    n_gal = _count(rng, config.galaxy_count)
    galaxies: list[dict] = []
    for g in range(n_gal):
        if g == 0:
            cx = size / 2 + rng.uniform(-0.05, 0.05) * size
            cy = size / 2 + rng.uniform(-0.05, 0.05) * size
        else:
            cx = rng.uniform(0.15, 0.85) * size
            cy = rng.uniform(0.15, 0.85) * size
        r_eff = _uniform(rng, config.galaxy_radius)
        ell = _uniform(rng, config.galaxy_ellipticity)
        angle = rng.uniform(0, np.pi)
        peak = _uniform(rng, config.galaxy_intensity)
        index = rng.uniform(0.7, 1.2)
        img = _sersic(size, cx, cy, r_eff, angle, 1.0 - ell, peak, index)
        mask = img > frac * peak
        _add_structure(structures, "galaxy", img, mask)
        # mask radius along the major axis, used to size attached structures
        r_mask = r_eff * (-np.log(frac)) ** index
        galaxies.append({"cx": cx, "cy": cy, "r_mask": r_mask})

    n_halo = min(_count(rng, config.diffuse_halo_count), n_gal)
    hosts = rng.permutation(n_gal)[:n_halo] if n_gal else []
    for h in hosts:
        gal = galaxies[int(h)]
        r_h = gal["r_mask"] * _uniform(rng, config.halo_scale)
        peak = _uniform(rng, config.halo_intensity)
        angle = rng.uniform(0, np.pi)
        ell = rng.uniform(0.0, 0.3)
        img = _sersic(size, gal["cx"], gal["cy"], r_h, angle, 1.0 - ell, peak, 1.0)
        _add_structure(structures, "diffuse_halo", img, img > frac * peak)

    for _ in range(_count(rng, config.ghosted_halo_count)):
        cx = rng.uniform(0.1, 0.9) * size
        cy = rng.uniform(0.1, 0.9) * size
        radius = _uniform(rng, config.ring_radius)
        sigma = radius * _uniform(rng, config.ring_width)
        peak = _uniform(rng, config.ring_intensity)
        q = rng.uniform(0.9, 1.0)
        fill = 0.6 if rng.uniform() < 0.5 else 0.0
        img = _ring(size, cx, cy, radius, sigma, rng.uniform(0, np.pi), q, peak, fill)
        _add_structure(structures, "ghosted_halo", img, img > frac * peak)

    n_stream = min(_count(rng, config.tidal_stream_count), n_gal)
    for s in range(n_stream):
        gal = galaxies[int(rng.integers(0, n_gal))]
        radius = gal["r_mask"] * rng.uniform(1.4, 2.4)
        span = _uniform(rng, config.stream_curvature) * np.pi
        width = _uniform(rng, config.stream_width)
        peak = _uniform(rng, config.stream_intensity)
        img = _stream(size, gal["cx"], gal["cy"], radius, rng.uniform(0, 2 * np.pi), span, width, peak)
        _add_structure(structures, "tidal_structure", img, img > frac * peak)

    cirrus_mask = None
    cirrus_img = np.zeros((size, size), dtype=np.float64)
    if rng.uniform() < config.cirrus_probability:
        orientation = rng.uniform(0, np.pi)
        noise = cirrus_field(
            size, rng, orientation, config.cirrus_octaves, config.cirrus_persistence
        )
        thr = config.cirrus_coverage_threshold
        peak = _uniform(rng, config.cirrus_intensity)
        cirrus_img = peak * np.clip(noise - thr, 0.0, None) / max(1.0 - thr, 1e-9)
        cirrus_mask = cirrus_img > 0

    flux = np.full((size, size, 2), config.sky_level, dtype=np.float64)
    for st in structures:
        ratio = _uniform(rng, config.color_ratio)
        flux[:, :, 0] += st.intensity
        flux[:, :, 1] += ratio * st.intensity
    if cirrus_mask is not None:
        ratio = _uniform(rng, config.color_ratio)
        flux[:, :, 0] += cirrus_img
        flux[:, :, 1] += ratio * cirrus_img
    if config.sky_noise > 0:
        flux += rng.normal(0.0, config.sky_noise, size=flux.shape)
    flux /= max(1.0, float(flux.max()))

    image = LsbImage(pixels=flux.astype(np.float32), id=sample_id, meta={"synthetic": "1"})
    instances = [
        InstanceLabel(
            cls=st.cls, mask=st.mask, bbox=mask_bbox(st.mask), provenance=Provenance.human()
        )
        for st in structures
    ]
    return Sample(
        image=image,
        instances=instances,
        cirrus_mask=cirrus_mask,
        galaxy_count=n_gal,
        dataset_version=0,
    )
