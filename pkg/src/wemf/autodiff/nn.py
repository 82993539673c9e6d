"""Neural-network layers on channels-last tensors ([..., H, W, C])."""

from __future__ import annotations

import numpy as np

from . import ops
from .tensor import Tensor, make


def _check_kernel(k: Tensor, channels: int) -> None:
    kh, kw, kc = k.shape
    if kh % 2 == 0 or kw % 2 == 0:
        raise ValueError(f"kernel extents must be odd, got {kh}x{kw}")
    if kc != channels:
        raise ValueError(f"kernel has {kc} channels but input has {channels}")


def depthwise_conv2d(x: Tensor, k: Tensor, bias: Tensor | None = None) -> Tensor:
    """Per-channel 2D cross-correlation with zero 'same' padding.

    ``x`` is [..., H, W, C], ``k`` is [kh, kw, C].
    """
    _check_kernel(k, x.shape[-1])
    kh, kw, _ = k.shape
    H, W = x.shape[-3], x.shape[-2]
    ph, pw = kh // 2, kw // 2
    widths = [(0, 0)] * (x.ndim - 3) + [(ph, ph), (pw, pw), (0, 0)]
    xp = np.pad(x.data, widths)
    out = np.zeros_like(x.data)
    for i in range(kh):
        for j in range(kw):
            out += xp[..., i:i + H, j:j + W, :] * k.data[i, j]

    def bw(g):
        gx = gk = None
        if x.requires_grad:
            gp = np.zeros_like(xp)
            for i in range(kh):
                for j in range(kw):
                    gp[..., i:i + H, j:j + W, :] += g * k.data[i, j]
            gx = gp[..., ph:ph + H, pw:pw + W, :]
        if k.requires_grad:
            lead = tuple(range(x.ndim - 1))
            gk = np.empty_like(k.data)
            for i in range(kh):
                for j in range(kw):
                    gk[i, j] = (xp[..., i:i + H, j:j + W, :] * g).sum(axis=lead)
        return gx, gk

    y = make(out, (x, k), "depthwise_conv2d", bw)
    return ops.add(y, bias) if bias is not None else y


def conv2d(x: Tensor, weight: Tensor, bias: Tensor | None = None, stride: int = 1,
           padding: int = 0) -> Tensor:
    """Dense 2D cross-correlation; ``weight`` is [kh, kw, C_in, C_out]."""
    kh, kw, cin, cout = weight.shape
    if x.shape[-1] != cin:
        raise ValueError(f"weight expects {cin} input channels, got {x.shape[-1]}")
    if padding:
        x = ops.pad(x, [(0, 0)] * (x.ndim - 3) + [(padding, padding)] * 2 + [(0, 0)])
    H, W = x.shape[-3], x.shape[-2]
    oh, ow = (H - kh) // stride + 1, (W - kw) // stride + 1
    cols = []
    for i in range(kh):
        for j in range(kw):
            cols.append(x[..., i:i + stride * (oh - 1) + 1:stride, j:j + stride * (ow - 1) + 1:stride, :])
    patches = ops.concat(cols, axis=-1)
    return ops.linear(patches, ops.reshape(weight, (kh * kw * cin, cout)), bias)


def layer_norm(x: Tensor, gamma: Tensor, beta: Tensor, eps: float = 1e-5) -> Tensor:
    """Normalize over the last axis, then apply a per-channel affine map."""
    mu = x.data.mean(axis=-1, keepdims=True)
    xc = x.data - mu
    rstd = 1.0 / np.sqrt((xc * xc).mean(axis=-1, keepdims=True) + eps)
    xhat = xc * rstd
    lead = tuple(range(x.ndim - 1))

    def bw(g):
        gxhat = g * gamma.data
        gx = rstd * (gxhat - gxhat.mean(axis=-1, keepdims=True)
                     - xhat * (gxhat * xhat).mean(axis=-1, keepdims=True))
        return gx, (g * xhat).sum(axis=lead), g.sum(axis=lead)

    return make(xhat * gamma.data + beta.data, (x, gamma, beta), "layer_norm", bw)


def group_norm(x: Tensor, groups: int, gamma: Tensor, beta: Tensor, eps: float = 1e-5) -> Tensor:
    """Group normalization of a [..., H, W, C] feature map.

    Statistics are taken per leading (batch) index over H, W and the
    channels of each group.
    """
    C = x.shape[-1]
    if eps <= 0:
        raise ValueError("eps must be positive")
    if x.ndim < 3:
        raise ValueError("group_norm expects a [..., H, W, C] tensor")
    if C % groups:
        raise ValueError(f"{C} channels are not divisible into {groups} groups")
    shape = x.shape
    xg = x.data.reshape(shape[:-1] + (groups, C // groups))
    red = (-4, -3, -1)
    mu = xg.mean(axis=red, keepdims=True)
    xc = xg - mu
    rstd = 1.0 / np.sqrt((xc * xc).mean(axis=red, keepdims=True) + eps)
    xhat = xc * rstd
    xhat_flat = xhat.reshape(shape)
    lead = tuple(range(x.ndim - 1))

    def bw(g):
        gxhat = (g * gamma.data).reshape(xg.shape)
        gx = rstd * (gxhat - gxhat.mean(axis=red, keepdims=True)
                     - xhat * (gxhat * xhat).mean(axis=red, keepdims=True))
        return gx.reshape(shape), (g * xhat_flat).sum(axis=lead), g.sum(axis=lead)

    return make(xhat_flat * gamma.data + beta.data, (x, gamma, beta), "group_norm", bw)


def _along_axis(x: Tensor, m: np.ndarray, axis: int, op: str) -> Tensor:
    """Apply matrix ``m`` [n_out, n_in] along ``axis``."""
    xm = np.moveaxis(x.data, axis, -1)
    out = np.moveaxis(xm @ m.T, -1, axis)

    def bw(g):
        gm = np.moveaxis(g, axis, -1)
        return (np.ascontiguousarray(np.moveaxis(gm @ m, -1, axis)),)

    return make(np.ascontiguousarray(out), (x,), op, bw)


def _interp_matrix(n_in: int, n_out: int, mode: str) -> np.ndarray:
    m = np.zeros((n_out, n_in))
    scale = n_in / n_out
    for o in range(n_out):
        if mode == "nearest":
            m[o, min(int(np.floor(o * scale)), n_in - 1)] = 1.0
        else:  # bilinear with half-pixel centers, clamped at the edges
            src = min(max((o + 0.5) * scale - 0.5, 0.0), n_in - 1)
            lo = int(np.floor(src))
            hi = min(lo + 1, n_in - 1)
            t = src - lo
            m[o, lo] += 1.0 - t
            m[o, hi] += t
    return m


def resize(x: Tensor, size: tuple[int, int], mode: str = "bilinear") -> Tensor:
    """Resize the H, W axes of a [..., H, W, C] tensor."""
    if mode not in ("nearest", "bilinear"):
        raise ValueError(f"unknown resize mode {mode!r}")
    H, W = x.shape[-3], x.shape[-2]
    y = _along_axis(x, _interp_matrix(H, size[0], mode), x.ndim - 3, f"resize_{mode}")
    return _along_axis(y, _interp_matrix(W, size[1], mode), x.ndim - 2, f"resize_{mode}")


def cross_entropy(logits: Tensor, labels: np.ndarray) -> Tensor:
    """Mean cross-entropy of integer ``labels`` under ``logits`` [..., K]."""
    labels = np.asarray(labels)
    K = logits.shape[-1]
    if labels.shape != logits.shape[:-1]:
        raise ValueError(f"labels shape {labels.shape} does not match logits {logits.shape}")
    if labels.min() < 0 or labels.max() >= K:
        raise ValueError(f"labels must lie in [0, {K})")
    z = logits.data.reshape(-1, K)
    y = labels.reshape(-1).astype(np.int64)
    m = z.max(axis=1, keepdims=True)
    e = np.exp(z - m)
    s = e.sum(axis=1, keepdims=True)
    lse = (np.log(s) + m)[:, 0]
    n = z.shape[0]
    loss = np.mean(lse - z[np.arange(n), y])

    def bw(g):
        p = e / s
        p[np.arange(n), y] -= 1.0
        return ((g / n) * p.reshape(logits.shape),)

    return make(np.asarray(loss), (logits,), "cross_entropy", bw)
