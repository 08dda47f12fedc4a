import math

import numpy as np
from numba import njit


@njit(cache=True)
def nlm_filter(padded, height, width, patch_radius, search_radius, offset, h2):
    """NLM over a mirror-padded image (pad = patch_radius + search_radius).

    Offsets are visited in raster order and each pixel accumulates its
    weights in that order, which fixes the summation sequence.
    """
    pr = patch_radius
    sr = search_radius
    side = 2 * pr + 1
    n = float(side * side)
    eh = height + 2 * pr
    ew = width + 2 * pr
    diff = np.empty((eh, ew))
    rows = np.empty((eh, width))
    wsum = np.zeros((height, width))
    acc = np.zeros((height, width))
    c0 = pr + sr
    for dy in range(-sr, sr + 1):
        for dx in range(-sr, sr + 1):
            for u in range(eh):
                for v in range(ew):
                    d = padded[u + sr, v + sr] - padded[u + sr + dy, v + sr + dx]
                    diff[u, v] = d * d
            for u in range(eh):
                for x in range(width):
                    s = 0.0
                    for b in range(side):
                        s += diff[u, x + b]
                    rows[u, x] = s
            for y in range(height):
                for x in range(width):
                    s = 0.0
                    for a in range(side):
                        s += rows[y + a, x]
                    e = s / n - offset
                    if e < 0.0:
                        e = 0.0
                    if h2 > 0.0:
                        w = math.exp(-e / h2)
                    elif e == 0.0:
                        w = 1.0
                    else:
                        w = 0.0
                    wsum[y, x] += w
                    acc[y, x] += w * padded[y + c0 + dy, x + c0 + dx]
    return acc / wsum


@njit(cache=True)
def _find(parent, i):
    root = i
    while parent[root] != root:
        root = parent[root]
    while parent[i] != root:
        nxt = parent[i]
        parent[i] = root
        i = nxt
    return root


@njit(cache=True)
def _union(parent, a, b):
    ra = _find(parent, a)
    rb = _find(parent, b)
    if ra < rb:
        parent[rb] = ra
    elif rb < ra:
        parent[ra] = rb


@njit(cache=True)
def label_8conn(mask):
    """Two-pass union-find labeling; labels in first-encounter raster order."""
    h, w = mask.shape
    prov = np.zeros((h, w), dtype=np.int64)
    parent = np.zeros(h * w // 2 + 2, dtype=np.int64)
    nxt = 1
    for i in range(h):
        for j in range(w):
            if not mask[i, j]:
                continue
            lab = 0
            # visited neighbors: W, NW, N, NE
            if j > 0 and prov[i, j - 1]:
                lab = prov[i, j - 1]
            if i > 0:
                for dj in (-1, 0, 1):
                    jj = j + dj
                    if 0 <= jj < w and prov[i - 1, jj]:
                        if lab == 0:
                            lab = prov[i - 1, jj]
                        else:
                            _union(parent, lab, prov[i - 1, jj])
            if lab == 0:
                if nxt >= parent.shape[0]:
                    grown = np.zeros(parent.shape[0] * 2, dtype=np.int64)
                    grown[: parent.shape[0]] = parent
                    parent = grown
                parent[nxt] = nxt
                lab = nxt
                nxt += 1
            prov[i, j] = lab

    final = np.zeros(nxt, dtype=np.int64)
    out = np.zeros((h, w), dtype=np.int64)
    count = 0
    for i in range(h):
        for j in range(w):
            p = prov[i, j]
            if p:
                r = _find(parent, p)
                if final[r] == 0:
                    count += 1
                    final[r] = count
                out[i, j] = final[r]
    return out, count
