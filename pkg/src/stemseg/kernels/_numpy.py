import numpy as np
from scipy import ndimage


def nlm_filter(padded, height, width, patch_radius, search_radius, offset, h2):
    pr = patch_radius
    sr = search_radius
    side = 2 * pr + 1
    n = float(side * side)
    eh = height + 2 * pr
    ew = width + 2 * pr
    c0 = pr + sr
    ref = padded[sr:sr + eh, sr:sr + ew]
    wsum = np.zeros((height, width))
    acc = np.zeros((height, width))
    for dy in range(-sr, sr + 1):
        for dx in range(-sr, sr + 1):
            d = ref - padded[sr + dy:sr + dy + eh, sr + dx:sr + dx + ew]
            diff = d * d
            # same left-to-right order as the compiled kernel
            rows = 0.0 + diff[:, 0:width]
            for b in range(1, side):
                rows = rows + diff[:, b:b + width]
            s = 0.0 + rows[0:height]
            for a in range(1, side):
                s = s + rows[a:a + height]
            e = np.maximum(s / n - offset, 0.0)
            if h2 > 0.0:
                w = np.exp(-e / h2)
            else:
                w = (e == 0.0).astype(np.float64)
            wsum += w
            acc += w * padded[c0 + dy:c0 + dy + height, c0 + dx:c0 + dx + width]
    return acc / wsum


_EIGHT = np.ones((3, 3), dtype=bool)


def label_8conn(mask):
    lab, count = ndimage.label(mask, structure=_EIGHT)
    if count == 0:
        return lab.astype(np.int64), 0
    flat = lab.ravel()
    ids, first = np.unique(flat, return_index=True)
    keep = ids > 0
    ids, first = ids[keep], first[keep]
    remap = np.zeros(count + 1, dtype=np.int64)
    remap[ids[np.argsort(first, kind="stable")]] = np.arange(1, len(ids) + 1)
    return remap[lab], int(count)
