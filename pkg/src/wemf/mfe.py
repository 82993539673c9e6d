"""Multi-frequency enhancement of skip-connection features.

The normalized feature map is split into four channel groups. Three are
filtered in the frequency domain over the (H, W), (C, W) and (C, H) axis
pairs with learnable complex weights, the fourth goes through a 3x3
depthwise convolution. The concatenated result is added back onto the
input and followed by a normalized feed-forward residual.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .autodiff import ComplexTensor, Tensor, cmul, dft2, idft2, ops
from .autodiff.nn import depthwise_conv2d, group_norm

# axis pairs on a channels-last [..., H, W, C] map
VIEWS = {"hw": (-3, -2), "cw": (-1, -2), "ch": (-1, -3)}
NORM_GROUPS = 4
FFN_RATIO = 4


@dataclass
class MfeWeights:
    w_hw: ComplexTensor
    w_cw: ComplexTensor
    w_ch: ComplexTensor
    dw_kernel: Tensor
    norm1_gamma: Tensor
    norm1_beta: Tensor
    norm2_gamma: Tensor
    norm2_beta: Tensor
    ffn_w1: Tensor
    ffn_b1: Tensor
    ffn_w2: Tensor
    ffn_b2: Tensor

    def named(self) -> dict[str, Tensor]:
        out = {}
        for key, value in vars(self).items():
            out[key] = value.packed if isinstance(value, ComplexTensor) else value
        return out

    @classmethod
    def from_named(cls, named: dict[str, Tensor]) -> "MfeWeights":
        kw = {k: (ComplexTensor(v) if k.startswith("w_") else v) for k, v in named.items()}
        return cls(**kw)


def init_mfe_weights(h: int, w: int, channels: int, rng: np.random.Generator,
                     dw_noise: float = 1e-3, ratio: int = FFN_RATIO) -> MfeWeights:
    """Near-identity start: unit spectral filters, identity depthwise kernel, zero FFN output."""
    if channels % 4:
        raise ValueError(f"MFE needs a channel count divisible by 4, got {channels}")
    q = channels // 4

    def unit_filter():
        return ComplexTensor.from_parts(np.ones((h, w, q)), np.zeros((h, w, q)), requires_grad=True)

    kernel = np.zeros((3, 3, q))
    kernel[1, 1] = 1.0
    if dw_noise:
        kernel = kernel + dw_noise * rng.standard_normal(kernel.shape)
    hidden = ratio * channels
    return MfeWeights(
        w_hw=unit_filter(), w_cw=unit_filter(), w_ch=unit_filter(),
        dw_kernel=Tensor(kernel, requires_grad=True),
        norm1_gamma=Tensor(np.ones(channels), requires_grad=True),
        norm1_beta=Tensor(np.zeros(channels), requires_grad=True),
        norm2_gamma=Tensor(np.ones(channels), requires_grad=True),
        norm2_beta=Tensor(np.zeros(channels), requires_grad=True),
        ffn_w1=Tensor(rng.standard_normal((channels, hidden)) * np.sqrt(2.0 / (channels + hidden)),
                      requires_grad=True),
        ffn_b1=Tensor(np.zeros(hidden), requires_grad=True),
        ffn_w2=Tensor(np.zeros((hidden, channels)), requires_grad=True),
        ffn_b2=Tensor(np.zeros(channels), requires_grad=True),
    )


def mfe_split(x: Tensor) -> list[Tensor]:
    """Four contiguous channel groups of a [..., C] tensor."""
    if x.shape[-1] % 4:
        raise ValueError(f"cannot split {x.shape[-1]} channels into four groups; "
                         "check the stage width")
    return ops.split(x, 4, axis=-1)


def freq_filter_branch(x: Tensor, weight: ComplexTensor, view: str) -> Tensor:
    axes = VIEWS[view]
    if tuple(weight.shape) != tuple(x.shape[-len(weight.shape):]):
        raise ValueError(f"{view} filter shape {weight.shape} does not match input {x.shape}")
    return idft2(cmul(dft2(x, axes), weight), axes)


def local_branch(x: Tensor, kernel: Tensor) -> Tensor:
    if kernel.shape[:2] != (3, 3):
        raise ValueError(f"expected a 3x3 depthwise kernel, got {kernel.shape}")
    return depthwise_conv2d(x, kernel)


def mfe_fuse(branches, x: Tensor) -> Tensor:
    z = ops.concat(branches, axis=-1)
    if z.shape != x.shape:
        raise ValueError(f"fused branches have shape {z.shape}, skip input has {x.shape}")
    return z + x


def mfe_forward(x: Tensor, weights: MfeWeights) -> Tensor:
    """Enhance a skip feature map [..., H, W, C]; the output keeps its shape."""
    xn = group_norm(x, NORM_GROUPS, weights.norm1_gamma, weights.norm1_beta)
    x1, x2, x3, x4 = mfe_split(xn)
    z = mfe_fuse([
        freq_filter_branch(x1, weights.w_hw, "hw"),
        freq_filter_branch(x2, weights.w_cw, "cw"),
        freq_filter_branch(x3, weights.w_ch, "ch"),
        local_branch(x4, weights.dw_kernel),
    ], x)
    zn = group_norm(z, NORM_GROUPS, weights.norm2_gamma, weights.norm2_beta)
    hidden = ops.gelu(ops.linear(zn, weights.ffn_w1, weights.ffn_b1))
    return ops.linear(hidden, weights.ffn_w2, weights.ffn_b2) + z
