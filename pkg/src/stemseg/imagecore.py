"""Raster conventions, quantization, histograms and image file I/O.

Images are 2-D ``float64`` arrays with intensities in [0, 1]. Label maps
are 2-D integer arrays where 0 is background and instances are numbered
``1..N`` without gaps. Plain numpy arrays are used for both; the helpers
below validate and convert at the module boundaries.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Literal

import numpy as np
from PIL import Image as PILImage
from PIL import PngImagePlugin

N_BINS = 256


class ImageIOError(Exception):
    """Base class for image reading/writing problems."""


class UnreadableImageError(ImageIOError):
    pass


class MultiChannelImageError(ImageIOError):
    pass


class UnsupportedBitDepthError(ImageIOError):
    pass


class DimensionMismatchError(ValueError):
    pass


class LabelMapError(ValueError):
    """A label map violates the 0 = background, 1..N compaction contract."""


def as_image(img) -> np.ndarray:
    """Return ``img`` as a C-contiguous 2-D float64 array."""
    arr = np.ascontiguousarray(img, dtype=np.float64)
    if arr.ndim != 2:
        raise ValueError(f"image must be 2-D, got shape {arr.shape}")
    return arr


def as_labels(labels) -> np.ndarray:
    arr = np.asarray(labels)
    if arr.ndim != 2:
        raise LabelMapError(f"label map must be 2-D, got shape {arr.shape}")
    if arr.dtype.kind not in "iu":
        raise LabelMapError(f"label map must be integer-typed, got {arr.dtype}")
    if arr.size and arr.min() < 0:
        raise LabelMapError("label map contains negative labels")
    return arr.astype(np.int64, copy=False)


def is_compact(labels: np.ndarray) -> bool:
    present = np.unique(labels)
    present = present[present != 0]
    return bool(np.array_equal(present, np.arange(1, len(present) + 1)))


def compact_labels(labels: np.ndarray) -> np.ndarray:
    """Renumber nonzero labels to 1..N, preserving their relative order."""
    labels = as_labels(labels)
    present = np.unique(labels)
    present = present[present != 0]
    remap = np.zeros(int(labels.max(initial=0)) + 1, dtype=np.int64)
    remap[present] = np.arange(1, len(present) + 1)
    return remap[labels]


def check_same_shape(a: np.ndarray, b: np.ndarray, what: str = "rasters") -> None:
    if a.shape != b.shape:
        raise DimensionMismatchError(f"{what} differ in shape: {a.shape} vs {b.shape}")


def quantize(img: np.ndarray, levels: int = 255) -> np.ndarray:
    """Map [0,1] intensities to integer levels with round-half-up."""
    q = np.floor(np.asarray(img, dtype=np.float64) * levels + 0.5)
    return np.clip(q, 0, levels).astype(np.int64)


# --- histograms -------------------------------------------------------------

def compute_histogram(img: np.ndarray) -> np.ndarray:
    """256-bin intensity histogram; pixel ``v`` lands in bin ``round(255 v)``."""
    return np.bincount(quantize(img).ravel(), minlength=N_BINS)


def write_histogram_csv(hist: np.ndarray, path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["bin", "count"])
        for b, c in enumerate(hist):
            writer.writerow([b, int(c)])


def read_histogram_csv(path: str | Path) -> np.ndarray:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    hist = np.zeros(N_BINS, dtype=np.int64)
    for row in rows:
        hist[int(row["bin"])] = int(row["count"])
    return hist


# --- statistics -------------------------------------------------------------

@dataclass(frozen=True)
class ImageStats:
    mean: float
    std: float
    min: float
    max: float

    def to_dict(self) -> dict:
        return {"mean": self.mean, "std": self.std, "min": self.min, "max": self.max}


def image_stats(
    img: np.ndarray,
    mask: np.ndarray | None = None,
    select: Literal["all", "foreground", "background"] = "all",
) -> ImageStats:
    """Mean, population std, min and max over the selected pixels.

    With a label map, ``select="foreground"`` uses pixels whose label is
    nonzero and ``"background"`` the zero-labelled ones.
    """
    img = as_image(img)
    if mask is None:
        if select != "all":
            raise ValueError(f"select={select!r} needs a mask")
        values = img.ravel()
    else:
        mask = np.asarray(mask)
        check_same_shape(img, mask, "image and mask")
        if select == "foreground":
            values = img[mask != 0]
        elif select == "background":
            values = img[mask == 0]
        elif select == "all":
            values = img.ravel()
        else:
            raise ValueError(f"unknown selector {select!r}")
    if values.size == 0:
        raise ValueError(f"no pixels selected ({select})")
    mean = float(values.mean())
    return ImageStats(mean, float(values.std()), float(values.min()), float(values.max()))


# --- file I/O ---------------------------------------------------------------

def _read_pgm(path: Path) -> np.ndarray:
    data = path.read_bytes()
    if data[:2] == b"P6" or data[:2] == b"P3":
        raise MultiChannelImageError(f"{path}: PPM color image, expected grayscale")
    if data[:2] != b"P5":
        raise UnreadableImageError(f"{path}: not a binary PGM (P5) file")
    # header: magic, width, height, maxval, each separated by whitespace; '#' comments allowed
    fields: list[bytes] = []
    pos = 2
    while len(fields) < 3:
        while pos < len(data) and data[pos:pos + 1].isspace():
            pos += 1
        if data[pos:pos + 1] == b"#":
            while pos < len(data) and data[pos:pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos:pos + 1].isspace():
            pos += 1
        if start == pos:
            raise UnreadableImageError(f"{path}: truncated PGM header")
        fields.append(data[start:pos])
    pos += 1  # single whitespace before raster
    try:
        width, height, maxval = (int(f) for f in fields)
    except ValueError as exc:
        raise UnreadableImageError(f"{path}: malformed PGM header") from exc
    if maxval == 255:
        dtype = np.dtype("u1")
    elif maxval == 65535:
        dtype = np.dtype(">u2")
    else:
        raise UnsupportedBitDepthError(f"{path}: PGM maxval {maxval} (need 255 or 65535)")
    n = width * height * dtype.itemsize
    raster = data[pos:pos + n]
    if len(raster) != n:
        raise UnreadableImageError(f"{path}: PGM raster truncated")
    arr = np.frombuffer(raster, dtype=dtype).reshape(height, width)
    return arr.astype(np.float64) / maxval


def _read_png(path: Path) -> np.ndarray:
    try:
        with PILImage.open(path) as im:
            im.load()
            mode = im.mode
            if mode in ("RGB", "RGBA", "LA", "P", "CMYK", "YCbCr", "PA", "La"):
                raise MultiChannelImageError(f"{path}: {mode} image, expected single-channel")
            if mode == "L":
                return np.asarray(im, dtype=np.float64) / 255.0
            if mode in ("I;16", "I;16B", "I;16L"):
                return np.asarray(im, dtype=np.float64) / 65535.0
            if mode == "I":
                # some Pillow versions widen 16-bit grayscale PNG to mode I
                return np.asarray(im, dtype=np.float64) / 65535.0
            raise UnsupportedBitDepthError(f"{path}: unsupported PNG mode {mode}")
    except ImageIOError:
        raise
    except (OSError, SyntaxError, ValueError) as exc:
        raise UnreadableImageError(f"{path}: {exc}") from exc


def load_image(path: str | Path) -> np.ndarray:
    """Read an 8/16-bit single-channel PNG or binary PGM into [0, 1] floats."""
    path = Path(path)
    try:
        head = path.read_bytes()[:8]
    except OSError as exc:
        raise UnreadableImageError(f"{path}: {exc}") from exc
    if head[:1] == b"P" and head[1:2] in b"123456":
        if head[1:2] in (b"3", b"6"):
            raise MultiChannelImageError(f"{path}: color PPM, expected grayscale")
        if head[1:2] != b"5":
            raise UnreadableImageError(f"{path}: only binary PGM (P5) is supported")
        return _read_pgm(path)
    return _read_png(path)


def _png_info(provenance: dict | None) -> PngImagePlugin.PngInfo | None:
    if provenance is None:
        return None
    info = PngImagePlugin.PngInfo()
    info.add_text("provenance", json.dumps(provenance, sort_keys=True))
    return info


def _write_pgm(levels: np.ndarray, depth: int, path: Path) -> None:
    h, w = levels.shape
    maxval = 255 if depth == 8 else 65535
    dtype = "u1" if depth == 8 else ">u2"
    header = f"P5\n{w} {h}\n{maxval}\n".encode("ascii")
    path.write_bytes(header + levels.astype(dtype).tobytes())


def save_image(
    img: np.ndarray,
    path: str | Path,
    depth: int = 16,
    provenance: dict | None = None,
) -> None:
    """Quantize to ``depth`` bits (round-half-up) and write PNG or PGM.

    The format follows the suffix: ``.pgm`` writes P5, anything else PNG.
    """
    if depth not in (8, 16):
        raise UnsupportedBitDepthError(f"depth must be 8 or 16, got {depth}")
    img = as_image(img)
    path = Path(path)
    levels = quantize(img, 255 if depth == 8 else 65535)
    try:
        if path.suffix.lower() == ".pgm":
            _write_pgm(levels, depth, path)
            return
        if depth == 8:
            im = PILImage.fromarray(levels.astype(np.uint8))
        else:
            im = PILImage.fromarray(levels.astype(np.uint16))
        im.save(path, format="PNG", pnginfo=_png_info(provenance))
    except OSError as exc:
        raise ImageIOError(f"cannot write {path}: {exc}") from exc


def save_labels(labels: np.ndarray, path: str | Path, provenance: dict | None = None) -> None:
    """Write a label map as a 16-bit PNG (pixel value = label)."""
    labels = as_labels(labels)
    if labels.size and labels.max() > 65535:
        raise LabelMapError("more than 65535 instances do not fit a 16-bit PNG")
    path = Path(path)
    try:
        im = PILImage.fromarray(labels.astype(np.uint16))
        im.save(path, format="PNG", pnginfo=_png_info(provenance))
    except OSError as exc:
        raise ImageIOError(f"cannot write {path}: {exc}") from exc


def load_labels(path: str | Path, compact: bool = False) -> np.ndarray:
    """Read a 16-bit (or 8-bit) single-channel label PNG.

    Raises :class:`LabelMapError` on non-compact maps unless ``compact``
    is set, in which case they are renumbered to 1..N.
    """
    path = Path(path)
    try:
        with PILImage.open(path) as im:
            im.load()
            if im.mode not in ("L", "I;16", "I;16B", "I;16L", "I"):
                raise MultiChannelImageError(f"{path}: {im.mode} label image, expected single-channel")
            labels = np.asarray(im).astype(np.int64)
    except ImageIOError:
        raise
    except OSError as exc:
        raise UnreadableImageError(f"{path}: {exc}") from exc
    if is_compact(labels):
        return labels
    if compact:
        return compact_labels(labels)
    raise LabelMapError(f"{path}: labels are not compact 1..N")
