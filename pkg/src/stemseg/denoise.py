"""Gaussian blur and Non-Local Means filters.

Both use mirror borders (``d c b | a b c d | c b a``, the edge sample is
not repeated) and clamp their output to [0, 1].
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np
from scipy import ndimage

from . import kernels
from .imagecore import as_image

MAD_TO_SIGMA = 1.4826


@dataclass(frozen=True)
class GaussianParams:
    sigma: float = 5.0
    kernel: tuple[int, int] = (5, 5)  # (width, height)

    def __post_init__(self):
        if not self.sigma > 0:
            raise ValueError(f"sigma must be positive, got {self.sigma}")
        kw, kh = self.kernel
        if kw < 1 or kh < 1 or kw % 2 == 0 or kh % 2 == 0:
            raise ValueError(f"kernel dimensions must be odd and >= 1, got {self.kernel}")

    def to_dict(self) -> dict:
        return {"type": "gaussian", "sigma": self.sigma, "kernel": list(self.kernel)}


@dataclass(frozen=True)
class NlmParams:
    """NLM settings. ``sigma=None`` estimates the noise level from the image;
    ``h=None`` uses ``0.8 * sigma``."""

    patch_radius: int = 3
    search_radius: int = 10
    h: float | None = None
    sigma: float | None = None

    def __post_init__(self):
        if self.patch_radius < 1 or self.search_radius < 1:
            raise ValueError("patch and search radii must be >= 1")
        if self.h is not None and self.h < 0:
            raise ValueError("h must be >= 0")
        if self.sigma is not None and self.sigma < 0:
            raise ValueError("sigma must be >= 0")

    def to_dict(self) -> dict:
        return {"type": "nlm", **asdict(self)}


def gaussian_kernel_1d(size: int, sigma: float) -> np.ndarray:
    """Truncated, renormalized taps ``exp(-i^2 / 2 sigma^2)`` for ``|i| <= size // 2``."""
    r = size // 2
    i = np.arange(-r, r + 1, dtype=np.float64)
    k = np.exp(-(i * i) / (2.0 * sigma * sigma))
    return k / k.sum()


def gaussian_blur(img: np.ndarray, p: GaussianParams = GaussianParams()) -> np.ndarray:
    img = as_image(img)
    kw, kh = p.kernel
    out = ndimage.correlate1d(img, gaussian_kernel_1d(kw, p.sigma), axis=1, mode="mirror")
    out = ndimage.correlate1d(out, gaussian_kernel_1d(kh, p.sigma), axis=0, mode="mirror")
    return np.clip(out, 0.0, 1.0)


def estimate_noise_sigma(img: np.ndarray) -> float:
    """Noise std from the median absolute deviation of horizontal differences.

    Differences of neighbouring pixels cancel smooth structure and have
    variance ``2 sigma^2`` for white noise; the MAD ignores the few large
    differences at object edges.
    """
    img = as_image(img)
    if img.shape[1] < 2:
        return 0.0
    r = np.diff(img, axis=1).ravel() / math.sqrt(2.0)
    return float(MAD_TO_SIGMA * np.median(np.abs(r - np.median(r))))


def resolve_nlm(img: np.ndarray, p: NlmParams) -> tuple[float, float]:
    """Return the ``(sigma, h)`` pair NLM will use on ``img``."""
    sigma = estimate_noise_sigma(img) if p.sigma is None else float(p.sigma)
    h = 0.8 * sigma if p.h is None else float(p.h)
    return sigma, h


def nlm_denoise(img: np.ndarray, p: NlmParams = NlmParams()) -> np.ndarray:
    """Non-Local Means with weights ``exp(-max(d2 - 2 sigma^2, 0) / h^2)``.

    ``d2`` is the mean squared difference between the two patches. With
    ``h == 0`` only patches at distance ``d2 <= 2 sigma^2`` contribute.
    """
    img = as_image(img)
    sigma, h = resolve_nlm(img, p)
    pad = p.patch_radius + p.search_radius
    padded = np.ascontiguousarray(np.pad(img, pad, mode="reflect"))
    out = kernels.nlm_filter(
        padded, img.shape[0], img.shape[1], p.patch_radius, p.search_radius,
        2.0 * sigma * sigma, h * h,
    )
    return np.clip(out, 0.0, 1.0)


def denoise(img: np.ndarray, params: GaussianParams | NlmParams | None) -> np.ndarray:
    if params is None:
        return as_image(img).copy()
    if isinstance(params, GaussianParams):
        return gaussian_blur(img, params)
    if isinstance(params, NlmParams):
        return nlm_denoise(img, params)
    raise TypeError(f"unknown denoiser parameters {params!r}")


def denoiser_from_dict(d: dict | None) -> GaussianParams | NlmParams | None:
    if d is None:
        return None
    d = dict(d)
    kind = d.pop("type", None)
    if kind in (None, "none"):
        return None
    if kind == "gaussian":
        if "kernel" in d:
            d["kernel"] = tuple(int(k) for k in d["kernel"])
        return GaussianParams(**d)
    if kind == "nlm":
        return NlmParams(**d)
    raise ValueError(f"unknown denoiser type {kind!r}")
