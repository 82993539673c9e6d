"""Finite-difference gradient checks over every differentiable operation.

Each check evaluates a scalar ``sum(f(x) * probe)`` with a fixed random probe
so that every output element contributes, and compares the tape gradient
with central differences via :func:`grad_check`.
"""

from __future__ import annotations

import time
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .autodiff import ComplexTensor, Tensor, cmul, dft2, grad_check, idft2, ops
from .autodiff.nn import conv2d, cross_entropy, depthwise_conv2d, group_norm, layer_norm, resize
from .mfe import MfeWeights, init_mfe_weights, mfe_forward
from .net import ModelConfig, forward, init_weights, patch_expand, patch_merge, pixel_rearrange
from .ssm import init_ssm_params, init_vss_params, scan_core, selective_scan, ss2d, vss_block
from .train import dice_ce_loss

OP_TOL = 1e-4
NET_TOL = 1e-3


@dataclass
class CheckResult:
    name: str
    error: float
    tol: float
    seconds: float

    @property
    def ok(self) -> bool:
        return bool(self.error < self.tol)


def _probed(fn: Callable[[Tensor], Tensor], shape, rng) -> Callable[[Tensor], Tensor]:
    probe = rng.standard_normal(shape)
    return lambda t: ops.sum(fn(t) * probe)


def _elementwise(rng):
    x = (3, 4)
    other = Tensor(rng.standard_normal(x))
    row = Tensor(rng.standard_normal((1, 4)))
    mat = Tensor(rng.standard_normal((4, 5)))
    w, b = Tensor(rng.standard_normal((4, 2))), Tensor(rng.standard_normal(2))
    return {
        "add": (lambda t: t + row, x),
        "sub": (lambda t: other - t, x),
        "mul": (lambda t: t * other, x),
        "div": (lambda t: other / (t * t + 1.0), x),
        "neg": (lambda t: -t * t, x),
        "power": (lambda t: (t * t + 0.5) ** 1.5, x),
        "exp": (lambda t: ops.exp(t), x),
        "log": (lambda t: ops.log(t * t + 0.1), x),
        "sqrt": (lambda t: ops.sqrt(t * t + 1.0), x),
        "sigmoid": (ops.sigmoid, x),
        "silu": (ops.silu, x),
        "softplus": (ops.softplus, x),
        "gelu": (ops.gelu, x),
        "tanh": (ops.tanh, x),
        "sum": (lambda t: ops.sum(t * t, axis=1, keepdims=True), x),
        "mean": (lambda t: ops.mean(t * t, axis=0), x),
        "logsumexp": (lambda t: ops.logsumexp(t, axis=1), x),
        "softmax": (lambda t: ops.softmax(t, axis=-1), x),
        "log_softmax": (lambda t: ops.log_softmax(t, axis=0), x),
        "reshape": (lambda t: ops.reshape(t, (2, 6)) * ops.reshape(t, (2, 6)), x),
        "transpose": (lambda t: ops.transpose(t, (1, 0)) @ t, x),
        "swapaxes": (lambda t: ops.swapaxes(t, 0, 1) * 2.0, x),
        "getitem": (lambda t: t[1:, ::2] * t[:2, 1::2], x),
        "flip": (lambda t: ops.flip(t, 1) * t, x),
        "concat": (lambda t: ops.concat([t, t * t], axis=0), x),
        "split": (lambda t: ops.split(t, 2, axis=1)[0] * ops.split(t, 2, axis=1)[1], x),
        "stack": (lambda t: ops.stack([t, t * t], axis=1), x),
        "pad": (lambda t: ops.pad(t, [(1, 0), (0, 2)]) ** 2, x),
        "matmul": (lambda t: t @ mat, x),
        "linear": (lambda t: ops.linear(t, w, b), x),
    }


def _spatial(rng):
    x = (4, 4, 2)
    k = Tensor(rng.standard_normal((3, 3, 2)))
    g, b = Tensor(rng.standard_normal(2)), Tensor(rng.standard_normal(2))
    cw = Tensor(rng.standard_normal((3, 3, 2, 3)))
    spec = ComplexTensor.from_complex(rng.standard_normal(x) + 1j * rng.standard_normal(x))
    labels = rng.integers(0, 2, size=(4, 4))
    labels3 = rng.integers(0, 3, size=(4, 4))
    W = Tensor(rng.standard_normal((8, 4)))
    return {
        "depthwise_conv2d.input": (lambda t: depthwise_conv2d(t, k, g), x),
        "depthwise_conv2d.kernel": (lambda t: depthwise_conv2d(Tensor(rng_fixed(x, 1)), t[:3, :3, :]), x),
        "conv2d": (lambda t: conv2d(t, cw, padding=1), x),
        "group_norm": (lambda t: group_norm(t, 2, g, b), x),
        "layer_norm": (lambda t: layer_norm(t, g, b), x),
        "resize.bilinear": (lambda t: resize(t, (6, 5), "bilinear"), x),
        "resize.nearest": (lambda t: resize(t, (8, 2), "nearest"), x),
        "dft2": (lambda t: dft2(t, (0, 1)).packed, x),
        "idft2": (lambda t: idft2(ComplexTensor(ops.stack([t, t * t], axis=-1)), (0, 1)), x),
        "cmul": (lambda t: cmul(spec, ComplexTensor(ops.stack([t, -t], axis=-1))).packed, x),
        "spectral_filter": (lambda t: idft2(cmul(dft2(t, (0, 2)), spec), (0, 2)), x),
        "cross_entropy": (lambda t: cross_entropy(t, labels), x),
        "dice_ce_loss": (lambda t: dice_ce_loss(ops.concat([t, t[..., :1] * 0.5], axis=-1), labels3), x),
        "patch_merge": (lambda t: patch_merge(t, W, Tensor(np.ones(4)), Tensor(np.zeros(4))), x),
        "patch_expand": (lambda t: patch_expand(t, Tensor(rng_fixed((2, 8), 2))), x),
        "pixel_rearrange": (lambda t: pixel_rearrange(ops.concat([t, t], axis=-1), 2) * 1.5, x),
    }


def rng_fixed(shape, seed) -> np.ndarray:
    return np.random.default_rng(1000 + seed).standard_normal(shape)


def _perturb(params: dict[str, Tensor], rng, scale=0.3) -> dict[str, Tensor]:
    return {k: Tensor(v.data + scale * rng.standard_normal(v.shape)) for k, v in params.items()}


def _modules(rng):
    checks = {}
    L, d, n = 6, 3, 2
    core = [rng.standard_normal((L, d)), np.log1p(np.exp(rng.standard_normal((L, d)))),
            -np.exp(rng.standard_normal((d, n))), rng.standard_normal((L, n)), rng.standard_normal((L, n)),
            rng.standard_normal(d)]
    for i, name in enumerate(("u", "delta", "A", "B", "C", "D")):
        def f(t, i=i):
            args = [Tensor(a) for a in core]
            args[i] = t
            return scan_core(*args)
        checks[f"scan_core.{name}"] = (f, (L, d), Tensor(core[i]))

    sp = _perturb(init_ssm_params(4, 3, rng, directions=None), rng)
    checks["selective_scan"] = (lambda t: selective_scan(t, sp), (5, 4), None)
    p4 = _perturb(init_ssm_params(4, 3, rng), rng)
    checks["ss2d.input"] = (lambda t: ss2d(t, p4), (3, 3, 4), None)
    for name in ("x_proj", "dt_w", "dt_b", "A_log", "D"):
        x = Tensor(rng.standard_normal((3, 3, 4)))
        checks[f"ss2d.{name}"] = (lambda t, name=name, x=x: ss2d(x, {**p4, name: t}), (3, 3, 4), p4[name])

    vp = _perturb(init_vss_params(8, 3, rng), rng, 0.1)
    checks["vss_block.input"] = (lambda t: vss_block(t, vp), (4, 4, 8), None)
    xv = Tensor(rng.standard_normal((4, 4, 8)))
    for name in ("in_proj", "conv.kernel", "out_norm.gamma", "out_proj", "ln.gamma"):
        checks[f"vss_block.{name}"] = (lambda t, name=name: vss_block(xv, {**vp, name: t}), (4, 4, 8), vp[name])

    mw = _perturb(init_mfe_weights(4, 4, 8, rng).named(), rng)
    checks["mfe.input"] = (lambda t: mfe_forward(t, MfeWeights.from_named(mw)), (4, 4, 8), None)
    xm = Tensor(rng.standard_normal((4, 4, 8)))
    for name in ("w_hw", "w_cw", "w_ch", "dw_kernel", "norm1_gamma", "norm2_beta", "ffn_w1", "ffn_b1", "ffn_w2"):
        checks[f"mfe.{name}"] = (lambda t, name=name: mfe_forward(xm, MfeWeights.from_named({**mw, name: t})),
                                 (4, 4, 8), mw[name])
    return checks


def build_checks(seed: int = 0) -> dict[str, tuple]:
    """name -> (scalar function, point, tolerance, coords or None)."""
    rng = np.random.default_rng(seed)
    out = {}
    for name, (fn, shape) in {**_elementwise(rng), **_spatial(rng)}.items():
        x = Tensor(rng.standard_normal(shape))
        out[name] = (_probed(fn, fn(x).shape, rng), x, OP_TOL, None)
    for name, (fn, shape, point) in _modules(rng).items():
        x = point if point is not None else Tensor(rng.standard_normal(shape))
        x = Tensor(x.data.copy())
        out[name] = (_probed(fn, fn(x).shape, rng), x, OP_TOL, None)
    out["network.end_to_end"] = _network_check(seed)
    return out


def _network_check(seed: int):
    """sum(logits) of a 32x32 forward pass against a sample of patch-embedding weights."""
    cfg = ModelConfig(img_size=[32, 32])
    weights = init_weights(cfg, seed)
    hu = np.random.default_rng(seed).integers(-200, 300, size=(32, 32))
    name = "patch_embed.weight"
    frozen = {k: Tensor(v.data) for k, v in weights.items()}

    def f(t):
        return ops.sum(forward(hu, cfg, {**frozen, name: t}))

    point = Tensor(weights[name].data.copy())
    coords = np.random.default_rng(seed).choice(point.size, size=12, replace=False)
    return f, point, NET_TOL, coords


def run_suite(seed: int = 0, only: str | None = None, log: Callable[[str], None] | None = None) -> list[CheckResult]:
    results = []
    for name, (fn, x, tol, coords) in build_checks(seed).items():
        if only and only not in name:
            continue
        t0 = time.time()
        err = grad_check(fn, x, coords=coords)
        res = CheckResult(name, float(err), tol, time.time() - t0)
        results.append(res)
        if log:
            log(f"{'ok  ' if res.ok else 'FAIL'} {name:<28} rel err {res.error:.2e} (tol {tol:.0e})")
    return results
