"""U-shaped VSS encoder-decoder with MFE-enhanced skip connections."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .autodiff import Tensor, ops
from .autodiff.nn import layer_norm
from .mfe import MfeWeights, init_mfe_weights, mfe_forward
from .ssm import init_vss_params, vss_block
from .windowing import TriWindowConfig, tri_window_stack


@dataclass
class ModelConfig:
    in_channels: int = 3
    num_classes: int = 3
    patch_size: int = 4
    depths: list[int] = field(default_factory=lambda: [2, 2, 2])
    dims: list[int] = field(default_factory=lambda: [32, 64, 128])
    d_state: int = 8
    ssm_expand: int = 2
    mfe_enabled: bool = True
    img_size: list[int] = field(default_factory=lambda: [64, 64])

    def validate(self) -> None:
        if self.in_channels != 3:
            raise ValueError("the tri-window input has exactly 3 channels")
        if len(self.depths) != len(self.dims) or not self.dims:
            raise ValueError("depths and dims must have the same non-zero length")
        if any(d % 4 for d in self.dims):
            raise ValueError(f"every stage width must be divisible by 4, got {self.dims}")
        if any(b < a for a, b in zip(self.dims, self.dims[1:])):
            raise ValueError("stage widths must be non-decreasing through the encoder")
        if self.d_state < 1 or self.patch_size < 1:
            raise ValueError("d_state and patch_size must be positive")
        H, W = self.img_size
        factor = self.patch_size * 2 ** (len(self.dims) - 1)
        if H % factor or W % factor:
            raise ValueError(f"image size {H}x{W} must be divisible by {factor}")

    def stage_hw(self, i: int) -> tuple[int, int]:
        H, W = self.img_size
        f = self.patch_size * 2 ** i
        return H // f, W // f

    def to_dict(self) -> dict:
        return asdict(self)


PAPER_SCALE = dict(depths=[2, 2, 9, 2], dims=[96, 192, 384, 768], d_state=16, img_size=[256, 256])


def _param(arr) -> Tensor:
    return Tensor(arr, requires_grad=True)


def _dense(rng, n_in, n_out):
    return _param(rng.standard_normal((n_in, n_out)) * np.sqrt(2.0 / (n_in + n_out)))


def init_weights(cfg: ModelConfig, seed: int = 0) -> dict[str, Tensor]:
    """Freshly initialized weights, keyed by stable parameter names."""
    cfg.validate()
    rng = np.random.default_rng(seed)
    p = cfg.patch_size
    d0 = cfg.dims[0]
    w: dict[str, Tensor] = {
        "patch_embed.weight": _dense(rng, p * p * cfg.in_channels, d0),
        "patch_embed.bias": _param(np.zeros(d0)),
        "patch_embed.norm.gamma": _param(np.ones(d0)),
        "patch_embed.norm.beta": _param(np.zeros(d0)),
    }
    S = len(cfg.dims)
    for i, (depth, dim) in enumerate(zip(cfg.depths, cfg.dims)):
        for j in range(depth):
            for k, v in init_vss_params(dim, cfg.d_state, rng, cfg.ssm_expand).items():
                w[f"enc.{i}.blocks.{j}.{k}"] = v
        if i + 1 < S:
            w[f"enc.{i}.merge.weight"] = _dense(rng, 4 * dim, cfg.dims[i + 1])
            w[f"enc.{i}.merge.norm.gamma"] = _param(np.ones(cfg.dims[i + 1]))
            w[f"enc.{i}.merge.norm.beta"] = _param(np.zeros(cfg.dims[i + 1]))
    for i in range(S - 2, -1, -1):
        dim = cfg.dims[i]
        w[f"dec.{i}.expand.weight"] = _dense(rng, cfg.dims[i + 1], 4 * dim)
        if cfg.mfe_enabled:
            h, ww = cfg.stage_hw(i)
            for k, v in init_mfe_weights(h, ww, dim, rng).named().items():
                w[f"mfe.{i}.{k}"] = v
        for j in range(cfg.depths[i]):
            for k, v in init_vss_params(dim, cfg.d_state, rng, cfg.ssm_expand).items():
                w[f"dec.{i}.blocks.{j}.{k}"] = v
    w["final_expand.weight"] = _dense(rng, d0, p * p * d0)
    w["final_expand.norm.gamma"] = _param(np.ones(d0))
    w["final_expand.norm.beta"] = _param(np.zeros(d0))
    w["head.weight"] = _dense(rng, d0, cfg.num_classes)
    w["head.bias"] = _param(np.zeros(cfg.num_classes))
    return w


def _sub(weights: dict[str, Tensor], prefix: str) -> dict[str, Tensor]:
    n = len(prefix) + 1
    return {k[n:]: v for k, v in weights.items() if k.startswith(prefix + ".")}


def patch_embed(x: Tensor, weights: dict[str, Tensor], patch: int) -> Tensor:
    """Non-overlapping p x p projection of [..., H, W, C] to [..., H/p, W/p, dim], then LayerNorm."""
    H, W, C = x.shape[-3:]
    if H % patch or W % patch:
        raise ValueError(f"spatial size {H}x{W} is not divisible by patch size {patch}")
    lead = x.shape[:-3]
    n = len(lead)
    t = ops.reshape(x, lead + (H // patch, patch, W // patch, patch, C))
    t = ops.transpose(t, tuple(range(n)) + (n, n + 2, n + 1, n + 3, n + 4))
    t = ops.reshape(t, lead + (H // patch, W // patch, patch * patch * C))
    t = ops.linear(t, weights["patch_embed.weight"], weights["patch_embed.bias"])
    return layer_norm(t, weights["patch_embed.norm.gamma"], weights["patch_embed.norm.beta"])


def patch_merge(x: Tensor, weight: Tensor, gamma: Tensor, beta: Tensor) -> Tensor:
    """[..., h, w, c] -> [..., h/2, w/2, c']: concat 2x2 neighbors (row-major), linear, LayerNorm."""
    h, w, c = x.shape[-3:]
    if h % 2 or w % 2:
        raise ValueError(f"patch merging needs even spatial extents, got {h}x{w}")
    lead = x.shape[:-3]
    n = len(lead)
    t = ops.reshape(x, lead + (h // 2, 2, w // 2, 2, c))
    t = ops.transpose(t, tuple(range(n)) + (n, n + 2, n + 1, n + 3, n + 4))
    t = ops.reshape(t, lead + (h // 2, w // 2, 4 * c))
    return layer_norm(ops.linear(t, weight), gamma, beta)


def pixel_rearrange(x: Tensor, r: int) -> Tensor:
    """[..., h, w, r*r*c] -> [..., r*h, r*w, c]; channel blocks fill each r x r cell row-major."""
    h, w, cc = x.shape[-3:]
    if cc % (r * r):
        raise ValueError(f"{cc} channels cannot be rearranged by factor {r}")
    c = cc // (r * r)
    lead = x.shape[:-3]
    n = len(lead)
    t = ops.reshape(x, lead + (h, w, r, r, c))
    t = ops.transpose(t, tuple(range(n)) + (n, n + 2, n + 1, n + 3, n + 4))
    return ops.reshape(t, lead + (r * h, r * w, c))


def patch_expand(x: Tensor, weight: Tensor) -> Tensor:
    """[..., h, w, c] -> [..., 2h, 2w, c'] via a linear map to 4c' channels and a 2x2 rearrangement."""
    if weight.shape[-1] % 4:
        raise ValueError("patch expanding needs an output width divisible by 4")
    return pixel_rearrange(ops.linear(x, weight), 2)


def mfe_weights(weights: dict[str, Tensor], stage: int) -> MfeWeights:
    return MfeWeights.from_named(_sub(weights, f"mfe.{stage}"))


def forward_features(x: Tensor, cfg: ModelConfig, weights: dict[str, Tensor]) -> Tensor:
    """Network body on a windowed input [..., H, W, 3]; returns logits [..., H, W, classes]."""
    S = len(cfg.dims)
    t = patch_embed(x, weights, cfg.patch_size)
    skips = []
    for i in range(S):
        for j in range(cfg.depths[i]):
            t = vss_block(t, _sub(weights, f"enc.{i}.blocks.{j}"))
        if i + 1 < S:
            skips.append(t)
            t = patch_merge(t, weights[f"enc.{i}.merge.weight"], weights[f"enc.{i}.merge.norm.gamma"],
                            weights[f"enc.{i}.merge.norm.beta"])
    for i in range(S - 2, -1, -1):
        t = patch_expand(t, weights[f"dec.{i}.expand.weight"])
        skip = skips[i]
        if cfg.mfe_enabled:
            skip = mfe_forward(skip, mfe_weights(weights, i))
        t = t + skip
        for j in range(cfg.depths[i]):
            t = vss_block(t, _sub(weights, f"dec.{i}.blocks.{j}"))
    t = pixel_rearrange(ops.linear(t, weights["final_expand.weight"]), cfg.patch_size)
    t = layer_norm(t, weights["final_expand.norm.gamma"], weights["final_expand.norm.beta"])
    return ops.linear(t, weights["head.weight"], weights["head.bias"])


def forward(hu, cfg: ModelConfig, weights: dict[str, Tensor],
            windows: TriWindowConfig | None = None) -> Tensor:
    """Logits [..., H, W, num_classes] for HU slice(s) [..., H, W]."""
    hu = np.asarray(hu)
    H, W = hu.shape[-2:]
    factor = cfg.patch_size * 2 ** (len(cfg.dims) - 1)
    if H % factor or W % factor:
        raise ValueError(f"slice size {H}x{W} must be divisible by {factor}")
    if cfg.mfe_enabled and [H, W] != list(cfg.img_size):
        raise ValueError(f"MFE filters were built for {cfg.img_size}, got a {H}x{W} slice")
    return forward_features(Tensor(tri_window_stack(hu, windows)), cfg, weights)


def predict(hu, cfg: ModelConfig, weights: dict[str, Tensor],
            windows: TriWindowConfig | None = None) -> np.ndarray:
    return forward(hu, cfg, weights, windows).data.argmax(axis=-1).astype(np.uint8)


# -- size accounting ---------------------------------------------------------------

def count_params(weights) -> int:
    return int(sum(t.size for t in weights.values()))


def count_params_config(cfg: ModelConfig) -> int:
    """Parameter count derived from the configuration alone (no allocation)."""
    p, S = cfg.patch_size, len(cfg.dims)

    def vss(dim):
        di = cfg.ssm_expand * dim
        rank = max(1, math.ceil(di / 16))
        ssm = 4 * (di * (rank + 2 * cfg.d_state) + rank * di + di + di * cfg.d_state + di)
        return 2 * dim + dim * 2 * di + 9 * di + di + 2 * di + di * dim + ssm

    def mfe(h, w, c):
        q = c // 4
        return 3 * 2 * h * w * q + 9 * q + 4 * c + c * 4 * c + 4 * c + 4 * c * c + c

    n = p * p * cfg.in_channels * cfg.dims[0] + 3 * cfg.dims[0]
    for i in range(S):
        n += cfg.depths[i] * vss(cfg.dims[i])
        if i + 1 < S:
            n += 4 * cfg.dims[i] * cfg.dims[i + 1] + 2 * cfg.dims[i + 1]
    for i in range(S - 1):
        n += cfg.dims[i + 1] * 4 * cfg.dims[i] + cfg.depths[i] * vss(cfg.dims[i])
        if cfg.mfe_enabled:
            n += mfe(*cfg.stage_hw(i), cfg.dims[i])
    d0 = cfg.dims[0]
    n += d0 * p * p * d0 + 2 * d0 + d0 * cfg.num_classes + cfg.num_classes
    return n


def linear_flops(tokens: int, n_in: int, n_out: int) -> int:
    return 2 * tokens * n_in * n_out


def depthwise_flops(h: int, w: int, c: int, k: int = 3) -> int:
    return 2 * k * k * h * w * c


def dft_axis_flops(lines: int, n: int) -> float:
    return lines * 5.0 * n * math.log2(n) if n > 1 else 0.0


def scan_flops(length: int, d_inner: int, d_state: int) -> int:
    return 9 * length * d_inner * d_state


def estimate_flops(cfg: ModelConfig, H: int | None = None, W: int | None = None) -> float:
    """Forward FLOPs for one slice.

    Linear/conv layers count 2 per multiply-accumulate, each DFT pass over an
    axis of length N costs 5 N log2 N per line, and the scan costs 9 per
    (step, channel, state). Normalizations and elementwise ops are ignored.
    """
    H, W = (cfg.img_size if H is None else (H, W))
    p, S = cfg.patch_size, len(cfg.dims)
    total = 0.0

    def vss(h, w, dim):
        di = cfg.ssm_expand * dim
        rank = max(1, math.ceil(di / 16))
        L = h * w
        f = linear_flops(L, dim, 2 * di) + depthwise_flops(h, w, di)
        f += 4 * (linear_flops(L, di, rank + 2 * cfg.d_state) + linear_flops(L, rank, di)
                  + scan_flops(L, di, cfg.d_state))
        return f + linear_flops(L, di, dim)

    def mfe(h, w, c):
        q = c // 4
        f = 0.0
        for a, b in ((h, w), (q, w), (q, h)):
            other = h * w * q
            passes = dft_axis_flops(other // a, a) + dft_axis_flops(other // b, b)
            f += 2 * passes + 6 * other  # forward + inverse, complex multiply
        f += depthwise_flops(h, w, q)
        return f + linear_flops(h * w, c, 4 * c) + linear_flops(h * w, 4 * c, c)

    h, w = H // p, W // p
    total += linear_flops(h * w, p * p * cfg.in_channels, cfg.dims[0])
    for i in range(S):
        hi, wi = H // (p * 2 ** i), W // (p * 2 ** i)
        total += cfg.depths[i] * vss(hi, wi, cfg.dims[i])
        if i + 1 < S:
            total += linear_flops((hi // 2) * (wi // 2), 4 * cfg.dims[i], cfg.dims[i + 1])
    for i in range(S - 1):
        hi, wi = H // (p * 2 ** i), W // (p * 2 ** i)
        total += linear_flops((hi // 2) * (wi // 2), cfg.dims[i + 1], 4 * cfg.dims[i])
        if cfg.mfe_enabled:
            total += mfe(hi, wi, cfg.dims[i])
        total += cfg.depths[i] * vss(hi, wi, cfg.dims[i])
    d0 = cfg.dims[0]
    total += linear_flops(h * w, d0, p * p * d0) + linear_flops(H * W, d0, cfg.num_classes)
    return total
