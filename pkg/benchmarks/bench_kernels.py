"""Time the numba and pure-numpy kernel paths side by side.

    python3 benchmarks/bench_kernels.py [--repeat 5]

Labels a synthetic 1024x768 word cloud and solves random assignment problems
of the sizes the sweep produces, checking along the way that both paths agree.
"""
from __future__ import annotations

import argparse
import time

import numpy as np

from cloudecode import _kernels
from cloudecode.evalgen import LayoutConfig, random_entries, synthesize_cloud
from cloudecode.raster import detect_background, foreground_mask


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t0)
    return min(times), out


def bench_labeling(repeat):
    image, _ = synthesize_cloud(random_entries(np.random.default_rng(7), 40), LayoutConfig(p_vertical=0.2), 7)
    fg = foreground_mask(image, detect_background(image), 48)
    rows = []
    for conn in (4, 8):
        _kernels.label_pixels(image.pixels, fg, conn, 48, use_numba=True)  # compile outside the timing
        t_nb, (lab_nb, n_nb) = best_of(lambda: _kernels.label_pixels(image.pixels, fg, conn, 48, True), repeat)
        t_np, (lab_np, n_np) = best_of(lambda: _kernels.label_pixels(image.pixels, fg, conn, 48, False), repeat)
        assert n_nb == n_np and np.array_equal(lab_nb, lab_np), "labeling paths disagree"
        rows.append((f"label {image.width}x{image.height} conn={conn}", t_nb, t_np))
    return rows


def bench_assignment(repeat):
    rng = np.random.default_rng(11)
    rows = []
    for n, m in ((6, 6), (20, 30), (80, 80)):
        costs = [rng.random((n, m)) for _ in range(50)]
        _kernels.assign_rows(costs[0], use_numba=True)
        t_nb, a = best_of(lambda: [_kernels.assign_rows(c, True) for c in costs], repeat)
        t_np, b = best_of(lambda: [_kernels.assign_rows(c, False) for c in costs], repeat)
        assert all(np.array_equal(x, y) for x, y in zip(a, b)), "assignment paths disagree"
        rows.append((f"assign 50 x ({n}x{m})", t_nb, t_np))
    return rows


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=5)
    args = parser.parse_args()
    if _kernels.numba is None:
        raise SystemExit("numba is not installed; nothing to compare")
    print(f"{'case':34s} {'numba s':>10s} {'numpy s':>10s} {'speedup':>8s}")
    for name, t_nb, t_np in bench_labeling(args.repeat) + bench_assignment(args.repeat):
        print(f"{name:34s} {t_nb:10.4f} {t_np:10.4f} {t_np / t_nb:7.1f}x")


if __name__ == "__main__":
    main()
