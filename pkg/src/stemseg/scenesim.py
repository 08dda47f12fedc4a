"""Synthetic liquid-cell STEM-HAADF scenes with exact ground truth.

A scene is produced in a fixed order: particle rendering, window/liquid
background, electron shot noise, then additive Gaussian noise scaled to a
target signal-to-noise ratio. Every stochastic stage draws from its own
generator derived from ``(seed, stage)`` so that, e.g., changing the target
SNR never perturbs the particle layout or the shot-noise realisation.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Union

import numpy as np
from scipy import ndimage

from .imagecore import as_image, as_labels, check_same_shape

SCHEMA_VERSION = 1

PEAK_INTENSITY = 0.95
ATTENUATION_PER_NM = 0.003
SUPERSAMPLE = 4
OVERLAP_GAP = 2
PLACEMENT_BUDGET = 100_000
TEXTURE_CORRELATION = 32.0

_STREAM_PLACEMENT = 0
_STREAM_TEXTURE = 1
_STREAM_SHOT = 2
_STREAM_GAUSSIAN = 3


class SceneError(ValueError):
    pass


class PlacementError(SceneError):
    def __init__(self, requested: int, achieved: int):
        super().__init__(
            f"could place only {achieved} of {requested} particles within "
            f"{PLACEMENT_BUDGET} attempts"
        )
        self.requested = requested
        self.achieved = achieved


# --- particle geometry ------------------------------------------------------
# All geometry helpers take offsets (dx, dy) from the particle center in
# pixel units, as broadcastable arrays.

@dataclass(frozen=True)
class Sphere:
    radius: float

    kind = "sphere"

    def __post_init__(self):
        if not self.radius > 0:
            raise SceneError(f"sphere radius must be positive, got {self.radius}")

    @property
    def peak_thickness(self) -> float:
        return 2.0 * self.radius

    def half_extent(self) -> tuple[float, float]:
        return self.radius, self.radius

    def inside(self, dx, dy):
        return dx * dx + dy * dy <= self.radius * self.radius

    def thickness(self, dx, dy):
        return 2.0 * np.sqrt(np.maximum(self.radius ** 2 - dx * dx - dy * dy, 0.0))

    def area(self) -> float:
        return math.pi * self.radius ** 2


@dataclass(frozen=True)
class Rod:
    """Capsule footprint: a cylinder of diameter ``width`` with hemispherical
    caps, ``length`` measured tip to tip, long axis at ``orientation`` rad."""

    length: float
    width: float
    orientation: float = 0.0

    kind = "rod"

    def __post_init__(self):
        if not (self.length > self.width > 0):
            raise SceneError(f"rod needs length > width > 0, got l={self.length}, w={self.width}")

    @property
    def peak_thickness(self) -> float:
        return self.width

    def _axis_distance(self, dx, dy):
        ux, uy = math.cos(self.orientation), math.sin(self.orientation)
        half = 0.5 * (self.length - self.width)
        along = np.clip(dx * ux + dy * uy, -half, half)
        px = dx - along * ux
        py = dy - along * uy
        return np.sqrt(px * px + py * py)

    def half_extent(self) -> tuple[float, float]:
        half = 0.5 * (self.length - self.width)
        r = 0.5 * self.width
        return (abs(math.cos(self.orientation)) * half + r,
                abs(math.sin(self.orientation)) * half + r)

    def inside(self, dx, dy):
        return self._axis_distance(dx, dy) <= 0.5 * self.width

    def thickness(self, dx, dy):
        s = self._axis_distance(dx, dy)
        return 2.0 * np.sqrt(np.maximum((0.5 * self.width) ** 2 - s * s, 0.0))

    def area(self) -> float:
        r = 0.5 * self.width
        return (self.length - self.width) * self.width + math.pi * r * r


@dataclass(frozen=True)
class ConcaveCube:
    """Axis-aligned cube seen face-on, with a spherical-cap dip of depth
    ``concavity * edge`` carved into the face (base circle inscribed)."""

    edge: float
    concavity: float = 0.25

    kind = "cube"

    def __post_init__(self):
        if not self.edge > 0:
            raise SceneError(f"cube edge must be positive, got {self.edge}")
        if not 0.0 <= self.concavity <= 0.5:
            raise SceneError(f"concavity must lie in [0, 0.5], got {self.concavity}")

    @property
    def peak_thickness(self) -> float:
        return self.edge

    def half_extent(self) -> tuple[float, float]:
        return 0.5 * self.edge, 0.5 * self.edge

    def inside(self, dx, dy):
        h = 0.5 * self.edge
        return (np.abs(dx) <= h) & (np.abs(dy) <= h)

    def thickness(self, dx, dy):
        a = self.edge
        t = np.where(self.inside(dx, dy), a, 0.0)
        depth = self.concavity * a
        if depth > 0:
            base = 0.5 * a
            rs = (base * base + depth * depth) / (2.0 * depth)
            rho2 = dx * dx + dy * dy
            dip = np.sqrt(np.maximum(rs * rs - rho2, 0.0)) - (rs - depth)
            t = t - np.where(rho2 < base * base, np.maximum(dip, 0.0), 0.0)
        return t

    def area(self) -> float:
        return self.edge ** 2


ParticleShape = Union[Sphere, Rod, ConcaveCube]
_SHAPES = {"sphere": Sphere, "rod": Rod, "cube": ConcaveCube}


@dataclass(frozen=True)
class ParticleSpec:
    shape: ParticleShape
    center: tuple[float, float]  # (x, y); pixel (row i, col j) has its center at (j, i)

    def to_dict(self) -> dict:
        d = {"shape": self.shape.kind, "center": [float(self.center[0]), float(self.center[1])]}
        d.update({k: float(v) for k, v in asdict(self.shape).items()})
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ParticleSpec":
        d = dict(d)
        kind = d.pop("shape")
        center = d.pop("center")
        if kind not in _SHAPES:
            raise SceneError(f"unknown particle shape {kind!r}")
        return cls(_SHAPES[kind](**d), (float(center[0]), float(center[1])))


@dataclass(frozen=True)
class ParticleSampler:
    """Request for ``count`` randomly placed particles.

    ``size_mean``/``size_std`` describe the sphere diameter, rod length or
    cube edge, in pixels.
    """

    count: int
    shape: str = "sphere"
    size_mean: float = 50.0
    size_std: float = 2.5
    rod_width: float = 10.0
    concavity: float = 0.25
    min_gap: int = OVERLAP_GAP

    def __post_init__(self):
        if self.min_gap < OVERLAP_GAP:
            raise SceneError(f"min_gap must be >= {OVERLAP_GAP} px")
        if self.count < 0:
            raise SceneError("particle count must be >= 0")
        if self.shape not in _SHAPES:
            raise SceneError(f"unknown shape family {self.shape!r}")
        if not self.size_mean > 0 or self.size_std < 0:
            raise SceneError("size distribution needs mean > 0 and std >= 0")


@dataclass(frozen=True)
class SceneSpec:
    width: int = 512
    height: int = 512
    pixel_size: float = 1.0  # nm per pixel
    particles: tuple[ParticleSpec, ...] | ParticleSampler = field(
        default_factory=lambda: ParticleSampler(count=24)
    )
    dose_rate: float = 1000.0  # e / A^2 / s
    exposure: float = 0.1  # s
    sin_thickness: float = 50.0  # nm, each of two windows
    liquid_thickness: float = 100.0  # nm
    background_texture_amplitude: float = 0.02
    target_snr: float | None = None
    seed: int = 0
    contrast_exponent: float = 0.1
    shot_noise: bool = True
    background: bool = True

    def __post_init__(self):
        if isinstance(self.particles, list):
            object.__setattr__(self, "particles", tuple(self.particles))
        for name in ("width", "height", "pixel_size", "dose_rate", "exposure",
                     "sin_thickness", "liquid_thickness", "contrast_exponent"):
            if not getattr(self, name) > 0:
                raise SceneError(f"{name} must be strictly positive")
        if self.background_texture_amplitude < 0:
            raise SceneError("background_texture_amplitude must be >= 0")
        if self.target_snr is not None and not self.target_snr > 0:
            raise SceneError("target_snr must be positive or null")
        if not 0 <= int(self.seed) < 2 ** 64:
            raise SceneError("seed must be a 64-bit unsigned integer")

    @property
    def shape(self) -> tuple[int, int]:
        return self.height, self.width

    def with_(self, **changes) -> "SceneSpec":
        return replace(self, **changes)

    def to_dict(self) -> dict:
        d = {"schema_version": SCHEMA_VERSION}
        for f in self.__dataclass_fields__:
            v = getattr(self, f)
            if f == "particles":
                if isinstance(v, ParticleSampler):
                    v = asdict(v)
                else:
                    v = [p.to_dict() for p in v]
            d[f] = v
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "SceneSpec":
        d = dict(d)
        version = d.pop("schema_version", SCHEMA_VERSION)
        if version != SCHEMA_VERSION:
            raise SceneError(f"unsupported scene schema_version {version}")
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise SceneError(f"unknown scene fields: {sorted(unknown)}")
        if "particles" in d:
            p = d["particles"]
            if isinstance(p, dict):
                d["particles"] = ParticleSampler(**p)
            elif isinstance(p, list):
                d["particles"] = tuple(ParticleSpec.from_dict(x) for x in p)
            else:
                raise SceneError("particles must be a list or a sampler object")
        try:
            return cls(**d)
        except TypeError as exc:
            raise SceneError(str(exc)) from exc


def load_scene_spec(path: str | Path) -> SceneSpec:
    try:
        data = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise SceneError(f"cannot read scene spec {path}: {exc}") from exc
    if not isinstance(data, dict):
        raise SceneError(f"{path}: scene spec must be a JSON object")
    return SceneSpec.from_dict(data.get("scene", data))


def save_scene_spec(spec: SceneSpec, path: str | Path, extra: dict | None = None) -> None:
    doc = spec.to_dict()
    if extra:
        doc = {"schema_version": SCHEMA_VERSION, "scene": doc, **extra}
    Path(path).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")


def stage_rng(seed: int, stream: int) -> np.random.Generator:
    """PCG64 generator for one stochastic stage of a scene."""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([int(seed), stream])))


# --- placement --------------------------------------------------------------

def _footprint(shape: ParticleShape, cx: float, cy: float, hw: int, ww: int):
    """Pixel-center footprint of a particle as (row slice, col slice, bool mask)."""
    ex, ey = shape.half_extent()
    j0 = max(int(math.floor(cx - ex)), 0)
    j1 = min(int(math.ceil(cx + ex)), ww - 1)
    i0 = max(int(math.floor(cy - ey)), 0)
    i1 = min(int(math.ceil(cy + ey)), hw - 1)
    jj = np.arange(j0, j1 + 1, dtype=np.float64) - cx
    ii = np.arange(i0, i1 + 1, dtype=np.float64) - cy
    mask = shape.inside(jj[None, :], ii[:, None])
    return slice(i0, i1 + 1), slice(j0, j1 + 1), mask


def _in_bounds(shape: ParticleShape, cx: float, cy: float, width: int, height: int) -> bool:
    ex, ey = shape.half_extent()
    return cx - ex >= 0 and cy - ey >= 0 and cx + ex <= width - 1 and cy + ey <= height - 1


def _draw_shape(s: ParticleSampler, rng: np.random.Generator) -> ParticleShape:
    while True:
        size = rng.normal(s.size_mean, s.size_std) if s.size_std > 0 else s.size_mean
        if size <= 0:
            continue
        if s.shape == "sphere":
            return Sphere(0.5 * size)
        if s.shape == "rod":
            if size <= s.rod_width:
                continue
            return Rod(size, s.rod_width, float(rng.uniform(0.0, math.pi)))
        return ConcaveCube(size, s.concavity)


def _disk(radius: int) -> np.ndarray:
    r = np.arange(-radius, radius + 1) ** 2
    return np.add.outer(r, r) <= radius * radius


def sample_scene(spec: SceneSpec) -> list[ParticleSpec]:
    """Place the particles requested by ``spec.particles``.

    Explicit particle lists are returned unchanged. Sampler requests are
    filled by rejection sampling: a candidate is accepted when its footprint
    is in-bounds and misses every earlier footprint dilated by
    ``min_gap`` px (2 px unless the request asks for more).
    """
    if not isinstance(spec.particles, ParticleSampler):
        return list(spec.particles)
    req = spec.particles
    rng = stage_rng(spec.seed, _STREAM_PLACEMENT)
    gap = _disk(req.min_gap)
    occupied = np.zeros(spec.shape, dtype=bool)
    placed: list[ParticleSpec] = []
    attempts = 0
    while len(placed) < req.count:
        if attempts >= PLACEMENT_BUDGET:
            raise PlacementError(req.count, len(placed))
        attempts += 1
        shape = _draw_shape(req, rng)
        ex, ey = shape.half_extent()
        if 2 * ex > spec.width - 1 or 2 * ey > spec.height - 1:
            continue
        cx = float(rng.uniform(ex, spec.width - 1 - ex))
        cy = float(rng.uniform(ey, spec.height - 1 - ey))
        rows, cols, mask = _footprint(shape, cx, cy, spec.height, spec.width)
        if np.any(occupied[rows, cols] & mask):
            continue
        grown = np.zeros(spec.shape, dtype=bool)
        grown[rows, cols] = mask
        occupied |= ndimage.binary_dilation(grown, structure=gap)
        placed.append(ParticleSpec(shape, (cx, cy)))
    return placed


# --- rendering --------------------------------------------------------------

def background_offset(spec: SceneSpec) -> float:
    """Constant intensity added by the two windows plus the liquid layer."""
    return ATTENUATION_PER_NM * (2.0 * spec.sin_thickness + spec.liquid_thickness)


def particle_peak(spec: SceneSpec) -> float:
    """Clean-image intensity given to the thickest point of the scene.

    The anchor is applied to the composite (particles + background), so
    the clean rendering peaks at ``PEAK_INTENSITY - background_offset``.
    """
    if not spec.background:
        return PEAK_INTENSITY
    return max(PEAK_INTENSITY - background_offset(spec), 0.05)


def render_scene(spec: SceneSpec, particles: list[ParticleSpec]) -> tuple[np.ndarray, np.ndarray]:
    """Rasterize ``particles`` into a clean image and a ground-truth label map.

    Intensity is ``peak * (t / t_max) ** contrast_exponent`` averaged over a
    4x4 sub-pixel grid, where ``t`` is projected thickness and ``t_max`` the
    largest peak thickness in the scene. Labels use pixel centers only.
    """
    h, w = spec.shape
    clean = np.zeros((h, w))
    truth = np.zeros((h, w), dtype=np.int64)
    if not particles:
        return clean, truth
    t_max = max(p.shape.peak_thickness for p in particles)
    peak = particle_peak(spec)
    gamma = spec.contrast_exponent
    sub = (np.arange(SUPERSAMPLE) + 0.5) / SUPERSAMPLE - 0.5
    for k, p in enumerate(particles, start=1):
        cx, cy = p.center
        if not _in_bounds(p.shape, cx, cy, w, h):
            raise SceneError(f"particle {k} extends outside the image")
        rows, cols, mask = _footprint(p.shape, cx, cy, h, w)
        if np.any(truth[rows, cols][mask]):
            raise SceneError(f"particle {k} overlaps an earlier particle")
        truth[rows, cols][mask] = k
        jj = np.arange(cols.start, cols.stop, dtype=np.float64) - cx
        ii = np.arange(rows.start, rows.stop, dtype=np.float64) - cy
        # (rows, cols, sub_y, sub_x)
        dx = jj[None, :, None, None] + sub[None, None, None, :]
        dy = ii[:, None, None, None] + sub[None, None, :, None]
        t = p.shape.thickness(dx, dy) / t_max
        clean[rows, cols] += peak * np.mean(t ** gamma, axis=(2, 3))
    return clean, truth


def add_background(img: np.ndarray, spec: SceneSpec, rng: np.random.Generator) -> np.ndarray:
    """Add the window/liquid offset plus a smooth zero-mean texture."""
    img = as_image(img)
    out = img + background_offset(spec)
    amp = spec.background_texture_amplitude
    if amp > 0:
        field_ = ndimage.gaussian_filter(rng.standard_normal(img.shape), TEXTURE_CORRELATION, mode="wrap")
        field_ -= field_.mean()
        peak = np.abs(field_).max()
        if peak > 0:
            out = out + amp * field_ / peak
    return np.clip(out, 0.0, 1.0)


def electrons_per_pixel(spec: SceneSpec) -> float:
    pixel_angstrom = spec.pixel_size * 10.0
    return spec.dose_rate * pixel_angstrom ** 2 * spec.exposure


def add_shot_noise(img: np.ndarray, spec: SceneSpec, rng: np.random.Generator) -> np.ndarray:
    """Replace each pixel ``v`` by ``Poisson(v N) / N``."""
    n = electrons_per_pixel(spec)
    if not n > 0:
        raise SceneError(f"electrons per pixel must be positive, got {n}")
    img = as_image(img)
    return np.clip(rng.poisson(img * n) / n, 0.0, 1.0)


@dataclass(frozen=True)
class NoiseRecord:
    sigma_gaussian: float
    mu_foreground_clean: float
    achieved_snr: float | None  # None encodes "no Gaussian noise" (infinite SNR)

    def to_dict(self) -> dict:
        return asdict(self)


def add_gaussian_noise_for_snr(
    img: np.ndarray,
    truth: np.ndarray,
    target_snr: float | None,
    rng: np.random.Generator,
) -> tuple[np.ndarray, NoiseRecord]:
    """Add i.i.d. Gaussian noise with sigma = (foreground mean) / target_snr.

    ``target_snr=None`` (or ``inf``) means no noise.
    """
    img = as_image(img)
    truth = as_labels(truth)
    check_same_shape(img, truth, "image and truth")
    fg = truth != 0
    if not fg.any():
        raise SceneError("ground truth has no foreground pixels")
    mu = float(img[fg].mean())
    if target_snr is None or math.isinf(target_snr):
        return img.copy(), NoiseRecord(0.0, mu, None)
    if not target_snr > 0:
        raise SceneError(f"target SNR must be positive, got {target_snr}")
    sigma = mu / target_snr
    noisy = np.clip(img + rng.normal(0.0, sigma, img.shape), 0.0, 1.0)
    return noisy, NoiseRecord(sigma, mu, mu / sigma)


def measure_snr(img: np.ndarray, truth: np.ndarray) -> float:
    """Foreground mean over background std (population); ``inf`` for a flat background."""
    img = as_image(img)
    truth = as_labels(truth)
    check_same_shape(img, truth, "image and truth")
    fg = truth != 0
    if not fg.any() or fg.all():
        raise SceneError("SNR needs both foreground and background pixels")
    bg = img[~fg]
    if np.ptp(bg) == 0:
        return math.inf
    return float(img[fg].mean()) / float(bg.std())


# --- full scene -------------------------------------------------------------

@dataclass
class Scene:
    spec: SceneSpec
    particles: list[ParticleSpec]
    clean: np.ndarray
    truth: np.ndarray
    noisy: np.ndarray
    noise: NoiseRecord


def simulate(spec: SceneSpec, particles: list[ParticleSpec] | None = None) -> Scene:
    """Run every stage for ``spec``; pass ``particles`` to reuse a layout."""
    if particles is None:
        particles = sample_scene(spec)
    clean, truth = render_scene(spec, particles)
    img = clean
    if spec.background:
        img = add_background(img, spec, stage_rng(spec.seed, _STREAM_TEXTURE))
    if spec.shot_noise:
        img = add_shot_noise(img, spec, stage_rng(spec.seed, _STREAM_SHOT))
    if truth.any():
        img, record = add_gaussian_noise_for_snr(
            img, truth, spec.target_snr, stage_rng(spec.seed, _STREAM_GAUSSIAN)
        )
    else:
        record = NoiseRecord(0.0, 0.0, None)
    return Scene(spec, particles, clean, truth, img, record)
