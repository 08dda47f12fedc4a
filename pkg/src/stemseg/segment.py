"""Threshold-based instance extraction and per-instance measurement.

The baseline is deliberately simple: a single global threshold (Otsu or
fixed) on the 8-bit quantized image, 8-connected components, an area
cut-off, and nothing else.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from . import kernels
from .imagecore import N_BINS, as_image, as_labels, compute_histogram, quantize
from .scenesim import ConcaveCube, ParticleShape, Rod, Sphere

DEFAULT_MIN_AREA = 500


class ThresholdError(ValueError):
    """Otsu is undefined because the image has a single occupied level."""


def otsu_level(hist: np.ndarray) -> int:
    """Otsu threshold of a 256-bin histogram.

    Class 0 holds levels ``<= t``. The between-class variance is compared as
    an exact rational so ties resolve to the smallest ``t``.
    """
    counts = [int(c) for c in hist]
    if len(counts) != N_BINS:
        raise ValueError(f"histogram must have {N_BINS} bins")
    total = sum(counts)
    total_sum = sum(b * c for b, c in enumerate(counts))
    best_t = -1
    best_num, best_den = 0, 1
    n0 = s0 = 0
    for t in range(N_BINS - 1):
        n0 += counts[t]
        s0 += t * counts[t]
        n1 = total - n0
        if n0 == 0 or n1 == 0:
            continue
        s1 = total_sum - s0
        # w0 w1 (mu0 - mu1)^2 = (n1 s0 - n0 s1)^2 / (n0 n1 total^2)
        num = (n1 * s0 - n0 * s1) ** 2
        den = n0 * n1
        if best_t < 0 or num * best_den > best_num * den:
            best_t, best_num, best_den = t, num, den
    if best_t < 0 or best_num == 0:
        raise ThresholdError("image has a single intensity level; Otsu needs two classes")
    return best_t


def apply_threshold(img: np.ndarray, t: int) -> np.ndarray:
    """Foreground mask: quantized level strictly above ``t``."""
    if not 0 <= t <= 255:
        raise ValueError(f"threshold level must lie in [0, 255], got {t}")
    return quantize(as_image(img)) > t


def otsu_threshold(img: np.ndarray) -> tuple[int, np.ndarray]:
    t = otsu_level(compute_histogram(img))
    return t, apply_threshold(img, t)


def connected_components(mask: np.ndarray) -> np.ndarray:
    """8-connected labeling, labels 1..N in first-encounter raster order."""
    mask = np.ascontiguousarray(mask, dtype=np.bool_)
    if mask.ndim != 2:
        raise ValueError("mask must be 2-D")
    labels, _ = kernels.label_8conn(mask)
    return labels


def filter_min_area(labels: np.ndarray, min_area: int = DEFAULT_MIN_AREA) -> np.ndarray:
    """Drop instances with fewer than ``min_area`` pixels and renumber."""
    labels = as_labels(labels)
    areas = np.bincount(labels.ravel())
    keep = areas >= min_area
    keep[0] = False
    remap = np.zeros(len(areas), dtype=np.int64)
    remap[keep] = np.arange(1, int(keep.sum()) + 1)
    return remap[labels]


@dataclass(frozen=True)
class InstanceStats:
    label: int
    area: int
    equivalent_diameter: float
    centroid: tuple[float, float]  # (x, y) in pixel-center coordinates
    perimeter: int
    rba: float

    def to_dict(self) -> dict:
        d = asdict(self)
        d["centroid"] = list(self.centroid)
        return d


def boundary_pixels(labels: np.ndarray) -> np.ndarray:
    """Foreground pixels with a 4-neighbour of another label or on the image edge."""
    padded = np.pad(labels, 1, mode="constant", constant_values=-1)
    core = padded[1:-1, 1:-1]
    edge = (
        (padded[:-2, 1:-1] != core) | (padded[2:, 1:-1] != core)
        | (padded[1:-1, :-2] != core) | (padded[1:-1, 2:] != core)
    )
    return edge & (core != 0)


def measure_instances(labels: np.ndarray) -> list[InstanceStats]:
    labels = as_labels(labels)
    n = int(labels.max(initial=0))
    if n == 0:
        return []
    flat = labels.ravel()
    rows, cols = np.indices(labels.shape)
    areas = np.bincount(flat, minlength=n + 1)
    sx = np.bincount(flat, weights=cols.ravel(), minlength=n + 1)
    sy = np.bincount(flat, weights=rows.ravel(), minlength=n + 1)
    perim = np.bincount(flat[boundary_pixels(labels).ravel()], minlength=n + 1)
    out = []
    for k in range(1, n + 1):
        a = int(areas[k])
        if a == 0:
            continue
        out.append(InstanceStats(
            label=k,
            area=a,
            equivalent_diameter=2.0 * math.sqrt(a / math.pi),
            centroid=(float(sx[k] / a), float(sy[k] / a)),
            perimeter=int(perim[k]),
            rba=float(perim[k] / a),
        ))
    return out


def compute_rba(shape: ParticleShape) -> float:
    """Analytic boundary/area ratio (rods as rectangles, cubes without concavity)."""
    if isinstance(shape, Sphere):
        return 2.0 / shape.radius
    if isinstance(shape, Rod):
        l, w = shape.length, shape.width
        return (2 * l + 2 * w) / (l * w)
    if isinstance(shape, ConcaveCube):
        return 4.0 / shape.edge
    raise TypeError(f"unknown shape {shape!r}")


def threshold_segment(
    img: np.ndarray,
    threshold: str | int = "otsu",
    min_area: int = DEFAULT_MIN_AREA,
) -> tuple[np.ndarray, int | None]:
    """Threshold, label and area-filter ``img``.

    Returns the label map and the threshold level used. A constant image
    under Otsu yields an empty label map and ``None``.
    """
    img = as_image(img)
    if threshold == "otsu":
        try:
            t, mask = otsu_threshold(img)
        except ThresholdError:
            return np.zeros(img.shape, dtype=np.int64), None
    else:
        t = int(threshold)
        mask = apply_threshold(img, t)
    return filter_min_area(connected_components(mask), min_area), t
