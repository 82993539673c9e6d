"""Differentiable array primitives.

Each op computes its forward value with numpy and registers a closure that
maps the output gradient to one gradient per parent.
"""

from __future__ import annotations

from typing import Sequence

import numpy as np
from scipy import special

from .tensor import Tensor, as_tensor, make, unbroadcast


# -- elementwise arithmetic ---------------------------------------------------

def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    return make(a.data + b.data, (a, b), "add",
                lambda g: (unbroadcast(g, a.shape), unbroadcast(g, b.shape)))


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    return make(a.data - b.data, (a, b), "sub",
                lambda g: (unbroadcast(g, a.shape), unbroadcast(-g, b.shape)))


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)

    def bw(g):
        ga = unbroadcast(g * b.data, a.shape) if a.requires_grad else None
        gb = unbroadcast(g * a.data, b.shape) if b.requires_grad else None
        return ga, gb

    return make(a.data * b.data, (a, b), "mul", bw)


def div(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out = a.data / b.data

    def bw(g):
        ga = unbroadcast(g / b.data, a.shape) if a.requires_grad else None
        gb = unbroadcast(-g * out / b.data, b.shape) if b.requires_grad else None
        return ga, gb

    return make(out, (a, b), "div", bw)


def neg(a: Tensor) -> Tensor:
    return make(-a.data, (a,), "neg", lambda g: (-g,))


def power(a: Tensor, p: float) -> Tensor:
    p = float(p)
    return make(a.data ** p, (a,), "power", lambda g: (g * p * a.data ** (p - 1.0),))


def exp(a: Tensor) -> Tensor:
    out = np.exp(a.data)
    return make(out, (a,), "exp", lambda g: (g * out,))


def log(a: Tensor) -> Tensor:
    if (a.data <= 0).any():
        raise ValueError("log of non-positive value")
    return make(np.log(a.data), (a,), "log", lambda g: (g / a.data,))


def sqrt(a: Tensor) -> Tensor:
    out = np.sqrt(a.data)
    return make(out, (a,), "sqrt", lambda g: (g * 0.5 / out,))


# -- activations -------------------------------------------------------------

def sigmoid(a: Tensor) -> Tensor:
    out = special.expit(a.data)
    return make(out, (a,), "sigmoid", lambda g: (g * out * (1.0 - out),))


def silu(a: Tensor) -> Tensor:
    s = special.expit(a.data)
    return make(a.data * s, (a,), "silu", lambda g: (g * s * (1.0 + a.data * (1.0 - s)),))


def softplus(a: Tensor) -> Tensor:
    out = np.logaddexp(0.0, a.data)
    return make(out, (a,), "softplus", lambda g: (g * special.expit(a.data),))


def gelu(a: Tensor) -> Tensor:
    """Exact (erf) GELU."""
    x = a.data
    cdf = 0.5 * (1.0 + special.erf(x / np.sqrt(2.0)))
    pdf = np.exp(-0.5 * x * x) / np.sqrt(2.0 * np.pi)
    return make(x * cdf, (a,), "gelu", lambda g: (g * (cdf + x * pdf),))


def tanh(a: Tensor) -> Tensor:
    out = np.tanh(a.data)
    return make(out, (a,), "tanh", lambda g: (g * (1.0 - out * out),))


# -- reductions ----------------------------------------------------------------

def _norm_axes(axis, ndim):
    if axis is None:
        return tuple(range(ndim))
    if isinstance(axis, int):
        axis = (axis,)
    return tuple(sorted(ax % ndim for ax in axis))


def sum(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:  # noqa: A001
    axes = _norm_axes(axis, a.ndim)
    out = a.data.sum(axis=axes, keepdims=keepdims)

    def bw(g):
        if not keepdims:
            g = np.expand_dims(g, axes)
        return (np.broadcast_to(g, a.shape).copy(),)

    return make(out, (a,), "sum", bw)


def mean(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    axes = _norm_axes(axis, a.ndim)
    n = int(np.prod([a.shape[i] for i in axes]))
    return mul(sum(a, axis=axes, keepdims=keepdims), 1.0 / n)


def logsumexp(a: Tensor, axis: int = -1, keepdims: bool = False) -> Tensor:
    m = a.data.max(axis=axis, keepdims=True)
    e = np.exp(a.data - m)
    s = e.sum(axis=axis, keepdims=True)
    out = np.log(s) + m
    soft = e / s

    def bw(g):
        gk = g if keepdims else np.expand_dims(g, axis)
        return (gk * soft,)

    return make(out if keepdims else np.squeeze(out, axis=axis), (a,), "logsumexp", bw)


def log_softmax(a: Tensor, axis: int = -1) -> Tensor:
    m = a.data.max(axis=axis, keepdims=True)
    shifted = a.data - m
    lse = np.log(np.exp(shifted).sum(axis=axis, keepdims=True))
    out = shifted - lse
    soft = np.exp(out)

    def bw(g):
        return (g - soft * g.sum(axis=axis, keepdims=True),)

    return make(out, (a,), "log_softmax", bw)


def softmax(a: Tensor, axis: int = -1) -> Tensor:
    m = a.data.max(axis=axis, keepdims=True)
    e = np.exp(a.data - m)
    out = e / e.sum(axis=axis, keepdims=True)

    def bw(g):
        return (out * (g - (g * out).sum(axis=axis, keepdims=True)),)

    return make(out, (a,), "softmax", bw)


# -- shape manipulation ----------------------------------------------------------

def reshape(a: Tensor, shape: Sequence[int]) -> Tensor:
    return make(a.data.reshape(shape), (a,), "reshape", lambda g: (g.reshape(a.shape),))


def transpose(a: Tensor, axes: Sequence[int] | None = None) -> Tensor:
    axes = tuple(range(a.ndim))[::-1] if axes is None else tuple(ax % a.ndim for ax in axes)
    inv = tuple(np.argsort(axes))
    return make(np.ascontiguousarray(a.data.transpose(axes)), (a,), "transpose",
                lambda g: (g.transpose(inv),))


permute = transpose


def swapaxes(a: Tensor, i: int, j: int) -> Tensor:
    axes = list(range(a.ndim))
    axes[i], axes[j] = axes[j], axes[i]
    return transpose(a, axes)


def getitem(a: Tensor, index) -> Tensor:
    out = a.data[index]

    def bw(g):
        full = np.zeros_like(a.data)
        np.add.at(full, index, g)
        return (full,)

    return make(np.array(out, copy=True), (a,), "getitem", bw)


def flip(a: Tensor, axis: int | Sequence[int]) -> Tensor:
    axes = (axis,) if isinstance(axis, int) else tuple(axis)
    return make(np.ascontiguousarray(np.flip(a.data, axes)), (a,), "flip",
                lambda g: (np.flip(g, axes).copy(),))


def concat(tensors: Sequence[Tensor], axis: int = -1) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    axis = axis % tensors[0].ndim
    sizes = [t.shape[axis] for t in tensors]
    bounds = np.cumsum(sizes)[:-1]

    def bw(g):
        return tuple(np.split(g, bounds, axis=axis))

    return make(np.concatenate([t.data for t in tensors], axis=axis), tuple(tensors), "concat", bw)


def stack(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    axis = axis % (tensors[0].ndim + 1)
    return make(np.stack([t.data for t in tensors], axis=axis), tuple(tensors), "stack",
                lambda g: tuple(np.moveaxis(g, axis, 0)))


def split(a: Tensor, sections: int, axis: int = -1) -> list[Tensor]:
    """Split into ``sections`` equal contiguous blocks along ``axis``."""
    n = a.shape[axis]
    if n % sections:
        raise ValueError(f"axis of length {n} is not divisible into {sections} groups")
    step = n // sections
    axis = axis % a.ndim
    out = []
    for i in range(sections):
        index = [slice(None)] * a.ndim
        index[axis] = slice(i * step, (i + 1) * step)
        out.append(getitem(a, tuple(index)))
    return out


def pad(a: Tensor, widths) -> Tensor:
    index = tuple(slice(lo, lo + n) for (lo, _), n in zip(widths, a.shape))
    return make(np.pad(a.data, widths), (a,), "pad", lambda g: (g[index].copy(),))


# -- linear algebra ----------------------------------------------------------------

def matmul(a, b) -> Tensor:
    """Batched matrix product with numpy broadcasting over leading axes."""
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or b.ndim < 2:
        raise ValueError("matmul needs operands of rank >= 2")
    out = a.data @ b.data

    def bw(g):
        ga = unbroadcast(g @ np.swapaxes(b.data, -1, -2), a.shape) if a.requires_grad else None
        gb = unbroadcast(np.swapaxes(a.data, -1, -2) @ g, b.shape) if b.requires_grad else None
        return ga, gb

    return make(out, (a, b), "matmul", bw)


def linear(x: Tensor, weight: Tensor, bias: Tensor | None = None) -> Tensor:
    """``x @ weight + bias`` over the last axis; ``weight`` is [in, out]."""
    lead = x.shape[:-1]
    y = matmul(reshape(x, (-1, x.shape[-1])), weight)
    if bias is not None:
        y = add(y, bias)
    return reshape(y, lead + (weight.shape[-1],))
