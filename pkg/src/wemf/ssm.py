"""Selective state-space scans and visual state-space (VSS) blocks.

Recurrence, per channel and state index::

    delta_t = softplus(dt_proj(u_t))
    h_t     = exp(delta_t * A) * h_{t-1} + delta_t * B_t * u_t      (h_0 = 0)
    y_t     = <C_t, h_t> + D * u_t

with A = -exp(A_log) < 0. The 2D variant scans a feature map in four
orders (row-major, reversed row-major, column-major, reversed column-major)
with separate parameters per order and sums the four results.
"""

from __future__ import annotations

import math

import numpy as np

try:
    import numba
except ImportError:  # pragma: no cover
    numba = None

from .autodiff import Tensor, ops
from .autodiff.nn import depthwise_conv2d, layer_norm
from .autodiff.tensor import make, unbroadcast

N_DIRECTIONS = 4


def _scan_forward_np(u, dt, A, B, C, D):
    """Reference numpy scan on flattened [M, L, ...] arrays; returns (y, states, decays)."""
    M, L, d = u.shape
    dA = np.exp(dt[..., None] * A[:, None])
    x = (dt * u)[..., None] * B[:, :, None, :]
    hs = np.empty((M, L, d, A.shape[-1]))
    h = np.zeros((M, d, A.shape[-1]))
    for t in range(L):
        h = dA[:, t] * h + x[:, t]
        hs[:, t] = h
    y = np.einsum("mldn,mln->mld", hs, C) + D[:, None, :] * u
    return y, hs, dA


def _scan_backward_np(g, u, dt, A, B, C, D, hs, dA):
    M, L, d = u.shape
    gC = np.einsum("mldn,mld->mln", hs, g)
    gD = (g * u).sum(axis=1)
    gH = np.empty_like(hs)
    gh = np.zeros((M, d, A.shape[-1]))
    for t in range(L - 1, -1, -1):
        if t + 1 < L:
            gh = gh * dA[:, t + 1]
        gh = gh + g[:, t, :, None] * C[:, t, None, :]
        gH[:, t] = gh
    h_prev = np.concatenate([np.zeros_like(hs[:, :1]), hs[:, :-1]], axis=1)
    t1 = gH * h_prev * dA
    s = (gH * B[:, :, None, :]).sum(axis=-1)
    gdt = (t1 * A[:, None]).sum(axis=-1) + s * u
    gu = g * D[:, None, :] + s * dt
    gA = (t1 * dt[..., None]).sum(axis=1)
    gB = np.einsum("mldn,mld->mln", gH, dt * u)
    return gu, gdt, gA, gB, gC, gD


if numba is not None:
    @numba.njit(cache=True)
    def _scan_forward_nb(u, dt, A, B, C, D):
        M, L, d = u.shape
        N = A.shape[2]
        hs = np.empty((M, L, d, N))
        dA = np.empty((M, L, d, N))
        y = np.empty((M, L, d))
        for m in range(M):
            for t in range(L):
                for i in range(d):
                    dti = dt[m, t, i]
                    bu = dti * u[m, t, i]
                    acc = D[m, i] * u[m, t, i]
                    for n in range(N):
                        prev = hs[m, t - 1, i, n] if t > 0 else 0.0
                        e = np.exp(dti * A[m, i, n])
                        h = e * prev + bu * B[m, t, n]
                        dA[m, t, i, n] = e
                        hs[m, t, i, n] = h
                        acc += h * C[m, t, n]
                    y[m, t, i] = acc
        return y, hs, dA

    @numba.njit(cache=True)
    def _scan_backward_nb(g, u, dt, A, B, C, D, hs, dA):
        M, L, d = u.shape
        N = A.shape[2]
        gu = np.zeros((M, L, d))
        gdt = np.zeros((M, L, d))
        gA = np.zeros((M, d, N))
        gB = np.zeros((M, L, N))
        gC = np.zeros((M, L, N))
        gD = np.zeros((M, d))
        gh = np.zeros((d, N))
        for m in range(M):
            gh[:] = 0.0
            for t in range(L - 1, -1, -1):
                for i in range(d):
                    gy = g[m, t, i]
                    dti = dt[m, t, i]
                    ui = u[m, t, i]
                    s = 0.0
                    a_acc = 0.0
                    for n in range(N):
                        a = A[m, i, n]
                        v = gh[i, n]
                        if t + 1 < L:
                            v *= dA[m, t + 1, i, n]
                        v += gy * C[m, t, n]
                        gh[i, n] = v
                        gC[m, t, n] += gy * hs[m, t, i, n]
                        if t > 0:
                            t1 = v * hs[m, t - 1, i, n] * dA[m, t, i, n]
                            a_acc += t1 * a
                            gA[m, i, n] += t1 * dti
                        s += v * B[m, t, n]
                        gB[m, t, n] += v * dti * ui
                    gdt[m, t, i] = a_acc + s * ui
                    gu[m, t, i] = gy * D[m, i] + s * dti
                    gD[m, i] += gy * ui
        return gu, gdt, gA, gB, gC, gD

USE_NUMBA = numba is not None


def scan_core(u: Tensor, delta: Tensor, A: Tensor, B: Tensor, C: Tensor, D: Tensor) -> Tensor:
    """Sequential selective scan with a hand-written adjoint.

    Shapes: ``u``, ``delta`` [..., L, d]; ``B``, ``C`` [..., L, N];
    ``A`` [..., d, N] and ``D`` [..., d], both broadcast against the
    leading axes.
    """
    L, d = u.shape[-2:]
    N = A.shape[-1]
    lead = np.broadcast_shapes(u.shape[:-2], delta.shape[:-2], B.shape[:-2], C.shape[:-2],
                               A.shape[:-2], D.shape[:-1])
    M = int(np.prod(lead))

    def flat(arr, tail):
        return np.ascontiguousarray(np.broadcast_to(arr, lead + tail)).reshape((M,) + tail)

    args = (flat(u.data, (L, d)), flat(delta.data, (L, d)), flat(A.data, (d, N)),
            flat(B.data, (L, N)), flat(C.data, (L, N)), flat(D.data, (d,)))
    fast = USE_NUMBA
    y, hs, dA = (_scan_forward_nb if fast else _scan_forward_np)(*args)

    def bw(g):
        grads = (_scan_backward_nb if fast else _scan_backward_np)(
            np.ascontiguousarray(g.reshape((M, L, d))), *args, hs, dA)
        tails = ((L, d), (L, d), (d, N), (L, N), (L, N), (d,))
        return tuple(unbroadcast(gr.reshape(lead + tail), t.shape)
                     for gr, tail, t in zip(grads, tails, (u, delta, A, B, C, D)))

    return make(y.reshape(lead + (L, d)), (u, delta, A, B, C, D), "selective_scan", bw)


def init_ssm_params(d_inner: int, d_state: int, rng: np.random.Generator,
                    directions: int | None = N_DIRECTIONS, dt_min: float = 1e-3,
                    dt_max: float = 1e-1) -> dict[str, Tensor]:
    """Scan parameters; with ``directions`` set, each carries a leading direction axis."""
    if d_state < 1:
        raise ValueError("d_state must be at least 1")
    lead = () if directions is None else (directions,)
    rank = max(1, math.ceil(d_inner / 16))
    dt = np.exp(rng.uniform(np.log(dt_min), np.log(dt_max), size=lead + (d_inner,)))
    dt_bias = dt + np.log(-np.expm1(-dt))  # inverse softplus
    a_log = np.log(np.broadcast_to(np.arange(1, d_state + 1, dtype=np.float64), lead + (d_inner, d_state)))
    return {
        "x_proj": Tensor(rng.standard_normal(lead + (d_inner, rank + 2 * d_state)) / np.sqrt(d_inner),
                         requires_grad=True),
        "dt_w": Tensor(rng.uniform(-1, 1, size=lead + (rank, d_inner)) / np.sqrt(rank), requires_grad=True),
        "dt_b": Tensor(dt_bias, requires_grad=True),
        "A_log": Tensor(a_log, requires_grad=True),
        "D": Tensor(np.ones(lead + (d_inner,)), requires_grad=True),
    }


def ssm_inputs(u: Tensor, params: dict[str, Tensor]):
    """Input-dependent (delta, A, B, C) for :func:`scan_core`."""
    rank = params["dt_w"].shape[-2]
    n = params["A_log"].shape[-1]
    proj = ops.matmul(u, params["x_proj"])
    dt_low = proj[..., :rank]
    Bm = proj[..., rank:rank + n]
    Cm = proj[..., rank + n:]
    dt_b = params["dt_b"]
    dt_b = ops.reshape(dt_b, dt_b.shape[:-1] + (1, dt_b.shape[-1]))
    delta = ops.softplus(ops.matmul(dt_low, params["dt_w"]) + dt_b)
    A = -ops.exp(params["A_log"])
    return delta, A, Bm, Cm


def selective_scan(u: Tensor, params: dict[str, Tensor]) -> Tensor:
    """Scan ``u`` [..., L, d_inner] with input-dependent discretization."""
    delta, A, Bm, Cm = ssm_inputs(u, params)
    return scan_core(u, delta, A, Bm, Cm, params["D"])


def scan_sequences(x: Tensor) -> Tensor:
    """Flatten [..., h, w, d] in the four scan orders -> [..., 4, h*w, d]."""
    h, w, d = x.shape[-3:]
    lead = x.shape[:-3]
    rows = ops.reshape(x, lead + (h * w, d))
    cols = ops.reshape(ops.swapaxes(x, -3, -2), lead + (h * w, d))
    return ops.stack([rows, ops.flip(rows, -2), cols, ops.flip(cols, -2)], axis=-3)


def unscan(y: Tensor, h: int, w: int) -> list[Tensor]:
    """Inverse of :func:`scan_sequences`, one [..., h, w, d] map per order."""
    d = y.shape[-1]
    lead = y.shape[:-3]
    out = []
    for k in range(N_DIRECTIONS):
        seq = y[(Ellipsis, k, slice(None), slice(None))]
        if k % 2:
            seq = ops.flip(seq, -2)
        if k < 2:
            out.append(ops.reshape(seq, lead + (h, w, d)))
        else:
            out.append(ops.swapaxes(ops.reshape(seq, lead + (w, h, d)), -3, -2))
    return out


def ss2d_directions(x: Tensor, params: dict[str, Tensor]) -> list[Tensor]:
    h, w = x.shape[-3], x.shape[-2]
    return unscan(selective_scan(scan_sequences(x), params), h, w)


def ss2d(x: Tensor, params: dict[str, Tensor]) -> Tensor:
    """Four-direction 2D selective scan of [..., h, w, d_inner]; outputs are summed."""
    y0, y1, y2, y3 = ss2d_directions(x, params)
    return y0 + y1 + y2 + y3


def init_vss_params(dim: int, d_state: int, rng: np.random.Generator, expand: int = 2) -> dict[str, Tensor]:
    d_inner = expand * dim
    conv = np.zeros((3, 3, d_inner))
    conv[1, 1] = 1.0
    conv += rng.standard_normal(conv.shape) * 0.1
    p = {
        "ln.gamma": Tensor(np.ones(dim), requires_grad=True),
        "ln.beta": Tensor(np.zeros(dim), requires_grad=True),
        "in_proj": Tensor(rng.standard_normal((dim, 2 * d_inner)) / np.sqrt(dim), requires_grad=True),
        "conv.kernel": Tensor(conv, requires_grad=True),
        "conv.bias": Tensor(np.zeros(d_inner), requires_grad=True),
        "out_norm.gamma": Tensor(np.ones(d_inner), requires_grad=True),
        "out_norm.beta": Tensor(np.zeros(d_inner), requires_grad=True),
        "out_proj": Tensor(rng.standard_normal((d_inner, dim)) / np.sqrt(d_inner), requires_grad=True),
    }
    for k, v in init_ssm_params(d_inner, d_state, rng).items():
        p[f"ssm.{k}"] = v
    return p


def vss_block(x: Tensor, p: dict[str, Tensor]) -> Tensor:
    """x + out_proj(LN(SS2D(SiLU(DWConv(in_x)))) * SiLU(in_z)), with in_x, in_z = in_proj(LN(x))."""
    xn = layer_norm(x, p["ln.gamma"], p["ln.beta"])
    xs, z = ops.split(ops.linear(xn, p["in_proj"]), 2, axis=-1)
    xs = ops.silu(depthwise_conv2d(xs, p["conv.kernel"], p["conv.bias"]))
    ssm = {k[4:]: v for k, v in p.items() if k.startswith("ssm.")}
    y = layer_norm(ss2d(xs, ssm), p["out_norm.gamma"], p["out_norm.beta"])
    return x + ops.linear(y * ops.silu(z), p["out_proj"])
