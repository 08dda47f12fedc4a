"""Slow, obviously-correct reference implementations used as test oracles.

None of these share code with the package; they are written directly from
the definitions (exact rationals, BFS flood fill, explicit patch loops).
"""

from collections import deque
from fractions import Fraction
import math

import numpy as np
from numba import njit


def otsu_bruteforce(levels: np.ndarray) -> int:
    """Exhaustive Otsu over all 256 thresholds with exact rational arithmetic.

    ``levels`` holds integer grey levels 0..255. Class 0 is ``level <= t``.
    Every candidate recomputes the class weights and means from scratch and
    the smallest maximiser of w0 * w1 * (mu0 - mu1)^2 is returned.
    """
    counts = [0] * 256
    for v in np.asarray(levels).ravel():
        counts[int(v)] += 1
    total = sum(counts)
    best_t, best = None, None
    for t in range(256):
        n0 = sum(counts[: t + 1])
        n1 = total - n0
        if n0 == 0 or n1 == 0:
            continue
        mu0 = Fraction(sum(b * counts[b] for b in range(t + 1)), n0)
        mu1 = Fraction(sum(b * counts[b] for b in range(t + 1, 256)), n1)
        var = Fraction(n0, total) * Fraction(n1, total) * (mu0 - mu1) ** 2
        if best is None or var > best:
            best_t, best = t, var
    return best_t


def flood_fill_labels(mask: np.ndarray) -> np.ndarray:
    """8-connected BFS labeling; a raster scan starts each new component."""
    mask = np.asarray(mask, dtype=bool)
    h, w = mask.shape
    out = np.zeros((h, w), dtype=np.int64)
    nxt = 0
    for i in range(h):
        for j in range(w):
            if not mask[i, j] or out[i, j]:
                continue
            nxt += 1
            out[i, j] = nxt
            q = deque([(i, j)])
            while q:
                y, x = q.popleft()
                for dy in (-1, 0, 1):
                    for dx in (-1, 0, 1):
                        yy, xx = y + dy, x + dx
                        if 0 <= yy < h and 0 <= xx < w and mask[yy, xx] and not out[yy, xx]:
                            out[yy, xx] = nxt
                            q.append((yy, xx))
    return out


def mirror_index(k: int, n: int) -> int:
    # d c b | a b c d | c b a
    while k < 0 or k >= n:
        if k < 0:
            k = -k
        if k >= n:
            k = 2 * (n - 1) - k
    return k


@njit(cache=True)
def _mirror_nb(k, n):
    while k < 0 or k >= n:
        if k < 0:
            k = -k
        if k >= n:
            k = 2 * (n - 1) - k
    return k


@njit(cache=True)
def _nlm_reference_nb(img, pr, sr, sigma, h):
    H, W = img.shape
    out = np.empty((H, W))
    npatch = (2 * pr + 1) ** 2
    for i in range(H):
        for j in range(W):
            num = 0.0
            den = 0.0
            for di in range(-sr, sr + 1):
                for dj in range(-sr, sr + 1):
                    d2 = 0.0
                    for a in range(-pr, pr + 1):
                        for b in range(-pr, pr + 1):
                            p = img[_mirror_nb(i + a, H), _mirror_nb(j + b, W)]
                            q = img[_mirror_nb(i + di + a, H), _mirror_nb(j + dj + b, W)]
                            d2 += (p - q) * (p - q)
                    d2 /= npatch
                    excess = max(d2 - 2.0 * sigma * sigma, 0.0)
                    if h == 0.0:
                        wgt = 1.0 if excess == 0.0 else 0.0
                    else:
                        wgt = math.exp(-excess / (h * h))
                    num += wgt * img[_mirror_nb(i + di, H), _mirror_nb(j + dj, W)]
                    den += wgt
            out[i, j] = num / den
    return out


def nlm_reference(img: np.ndarray, patch_radius: int, search_radius: int, sigma: float, h: float) -> np.ndarray:
    """Direct quadruple-loop NLM (pixel x offset x patch row x patch column).

    Compiled with numba purely for speed; every index goes through an
    explicit mirror function instead of a padded array.
    """
    return _nlm_reference_nb(np.asarray(img, dtype=np.float64), patch_radius, search_radius,
                             float(sigma), float(h))


def gaussian_taps(size: int, sigma: float) -> np.ndarray:
    r = size // 2
    k = np.array([math.exp(-(i * i) / (2 * sigma * sigma)) for i in range(-r, r + 1)])
    return k / math.fsum(k)


def disk_mask(n: int, cy: float, cx: float, r: float) -> np.ndarray:
    """Pixel-center inside-circle test, looped per pixel."""
    out = np.zeros((n, n), dtype=bool)
    for i in range(n):
        for j in range(n):
            out[i, j] = (j - cx) ** 2 + (i - cy) ** 2 < r * r
    return out
