"""Compare the numba and numpy kernel backends.

    python benchmarks/bench_kernels.py --size 256 --repeat 3

Times NLM (default radii) and 8-connected labeling on the same inputs with
both backends, checks that the outputs agree, and prints a small table.
The first numba call is a warm-up so JIT compilation is not timed.
"""

import argparse
import time

import numpy as np

from stemseg.kernels import load


def _nlm_args(img, patch_radius, search_radius, sigma):
    pad = patch_radius + search_radius
    padded = np.ascontiguousarray(np.pad(img, pad, mode="reflect"))
    h = 0.8 * sigma
    return (padded, img.shape[0], img.shape[1], patch_radius, search_radius, 2 * sigma * sigma, h * h)


def _best_of(fn, args, repeat):
    times = []
    out = None
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn(*args)
        times.append(time.perf_counter() - t0)
    return min(times), out


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--size", type=int, default=256, help="square image side in pixels")
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--patch-radius", type=int, default=3)
    ap.add_argument("--search-radius", type=int, default=10)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)

    rng = np.random.default_rng(args.seed)
    n = args.size
    yy, xx = np.indices((n, n))
    img = 0.3 + 0.4 * ((xx // 32 + yy // 32) % 2) + rng.normal(0, 0.05, (n, n))
    img = np.clip(img, 0, 1)
    mask = rng.random((n, n)) < 0.45

    nb = load("numba")
    npy = load("numpy")
    nlm_args = _nlm_args(img, args.patch_radius, args.search_radius, 0.05)
    nb.nlm_filter(*_nlm_args(img[:16, :16], args.patch_radius, args.search_radius, 0.05))
    nb.label_8conn(mask[:8, :8])

    rows = []
    t_nb, out_nb = _best_of(nb.nlm_filter, nlm_args, args.repeat)
    t_np, out_np = _best_of(npy.nlm_filter, nlm_args, args.repeat)
    rows.append(("nlm", t_nb, t_np, float(np.max(np.abs(out_nb - out_np)))))

    t_nb, (lab_nb, _) = _best_of(nb.label_8conn, (mask,), args.repeat)
    t_np, (lab_np, _) = _best_of(npy.label_8conn, (mask,), args.repeat)
    rows.append(("label_8conn", t_nb, t_np, float(np.count_nonzero(lab_nb != lab_np))))

    print(f"{n}x{n}, best of {args.repeat}")
    print(f"{'kernel':<12} {'numba [s]':>10} {'numpy [s]':>10} {'speedup':>8} {'max diff':>10}")
    for name, a, b, diff in rows:
        print(f"{name:<12} {a:10.4f} {b:10.4f} {b / a:8.2f} {diff:10.3g}")


if __name__ == "__main__":
    main()
