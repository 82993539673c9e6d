"""Wall-clock microbenchmarks for the main kernels."""

from __future__ import annotations

import time

import numpy as np

from .autodiff import Tensor, fourier
from .autodiff.nn import depthwise_conv2d
from .net import ModelConfig, dft_axis_flops, depthwise_flops, estimate_flops, forward, init_weights, scan_flops
from .ssm import init_ssm_params, selective_scan


def _time(fn, min_seconds: float, max_reps: int = 1000) -> tuple[float, int]:
    fn()  # warm-up (and JIT compilation)
    reps, total = 0, 0.0
    while total < min_seconds and reps < max_reps:
        t0 = time.perf_counter()
        fn()
        total += time.perf_counter() - t0
        reps += 1
    return total / reps, reps


def _entry(name, shape, seconds, reps, flops):
    return {"kernel": name, "shape": list(shape), "ns_per_op": seconds * 1e9, "reps": reps,
            "flops": flops, "gflops_per_s": (flops / seconds / 1e9) if flops else None}


def run_bench(min_seconds: float = 0.5, size: int = 256) -> dict:
    rng = np.random.default_rng(0)
    out = []
    x = rng.standard_normal((size, size))
    dft_flops = 2 * dft_axis_flops(size, size)
    fast, n = _time(lambda: fourier.dft2_array(x, (0, 1), fast=True), min_seconds)
    out.append(_entry("dft2.fft", x.shape, fast, n, dft_flops))
    direct, n = _time(lambda: fourier.dft2_array(x, (0, 1), fast=False), min_seconds, max_reps=20)
    out.append(_entry("dft2.direct", x.shape, direct, n, 2 * 8.0 * size ** 3))

    L, d, N = 1024, 64, 8
    p = init_ssm_params(d, N, rng, directions=None)
    u = Tensor(rng.standard_normal((L, d)))
    s, n = _time(lambda: selective_scan(u, p), min_seconds)
    out.append(_entry("selective_scan", (L, d, N), s, n, scan_flops(L, d, N)))

    fmap = Tensor(rng.standard_normal((64, 64, 64)))
    k = Tensor(rng.standard_normal((3, 3, 64)))
    s, n = _time(lambda: depthwise_conv2d(fmap, k), min_seconds)
    out.append(_entry("depthwise_conv2d", (64, 64, 64), s, n, depthwise_flops(64, 64, 64)))

    cfg = ModelConfig()
    w = init_weights(cfg, 0)
    hu = rng.integers(-200, 300, size=tuple(cfg.img_size))
    s, n = _time(lambda: forward(hu, cfg, w), min_seconds, max_reps=20)
    out.append(_entry("forward", cfg.img_size, s, n, estimate_flops(cfg)))
    return {"kernels": out, "fft_speedup": direct / fast, "fft_size": size,
            "fft_radix2": size & (size - 1) == 0}
