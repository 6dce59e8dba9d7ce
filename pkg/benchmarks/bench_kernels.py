#!/usr/bin/env python3
"""Benchmark the compiled kernels against the numpy reference.

Times the three hot kernels (im2col, col2im, polyline rasterization) at
training-realistic shapes plus one full generator/critic training
iteration per backend, and verifies both backends agree bitwise on the
benchmarked inputs.

Usage: python benchmarks/bench_kernels.py [--repeats N]
"""

import argparse
import time

import numpy as np

from csiloc import kernels
from csiloc.featuremap import FeatureMap
from csiloc.gan import HyperParams, train
from csiloc.rng import substream


def timeit(fn, repeats):
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def bench_case(name, make_fn, repeats):
    results = {}
    outputs = {}
    for backend in kernels.available_backends():
        kernels.use_backend(backend)
        fn = make_fn()
        outputs[backend] = fn()
        results[backend] = timeit(fn, repeats)
    if len(outputs) == 2:
        a, b = outputs["pure"], outputs["compiled"]
        if a is not None and not np.array_equal(a, b):
            raise AssertionError(f"{name}: backends disagree")
    pure = results.get("pure", float("nan"))
    fast = results.get("compiled")
    speedup = f"{pure / fast:5.1f}x" if fast else "  n/a"
    fast_ms = f"{fast * 1e3:9.2f}" if fast else "      n/a"
    print(f"{name:<34} {pure * 1e3:9.2f} {fast_ms} {speedup}")


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--repeats", type=int, default=5)
    args = parser.parse_args()

    rng = np.random.default_rng(0)
    print(f"{'kernel':<34} {'pure ms':>9} {'fast ms':>9} {'speedup':>6}")

    x32 = rng.normal(size=(16, 32, 16, 16)).astype(np.float32)
    cols32 = kernels.im2col(x32, 4, 4, 2, 2, 1, 1)

    bench_case("im2col 16x32x16x16 k4 s2", lambda: (lambda: kernels.im2col(x32, 4, 4, 2, 2, 1, 1)), args.repeats)
    bench_case(
        "col2im 16x32x16x16 k4 s2", lambda: (lambda: kernels.col2im(cols32, x32.shape, 4, 4, 2, 2, 1, 1)), args.repeats
    )

    xs = rng.integers(0, 256, size=(300, 30))
    ys = rng.integers(0, 256, size=(300, 30))

    def raster():
        canvas = np.zeros((256, 256), dtype=np.uint8)
        kernels.draw_polylines(canvas, xs, ys)
        return canvas

    bench_case("raster 300 polylines @256px", lambda: (lambda: raster()), args.repeats)

    # one full training iteration at desk scale, per backend
    maps = []
    mrng = substream(0, "bench-maps")
    for i in range(16):
        px = np.zeros((32, 32, 3), dtype=np.uint8)
        px[int(mrng.integers(8, 30)), :, 0] = 255
        maps.append(FeatureMap(rp_id=1, pixels=px, provenance="real", draw_index=i))
    hp = HyperParams(lr=1e-3, bs=8, f_d=2, z_dim=32, epochs=1, image_size=32)

    def train_iter():
        train(maps, hp, seed=1)
        return None

    bench_case("gan iteration 32px bs8 f_d2", lambda: (lambda: train_iter()), max(1, args.repeats // 2))
    kernels.use_backend("auto")
    print(f"\nactive backend restored: {kernels.active_backend()}")


if __name__ == "__main__":
    main()
