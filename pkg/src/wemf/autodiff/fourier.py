"""Two-axis discrete Fourier transforms.

Forward transforms are unnormalized; inverses carry the 1/(Na*Nb) factor.
Power-of-two extents go through an iterative radix-2 FFT, everything else
through a dense DFT matrix. Complex values inside the graph are stored as a
real tensor with a trailing axis of length 2 (real, imaginary).
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

try:
    import numba
except ImportError:  # pragma: no cover
    numba = None

from .tensor import Tensor, make, unbroadcast

USE_FFT = True


# -- 1D kernels on the last axis of a complex array ------------------------------

@lru_cache(maxsize=64)
def dft_matrix(n: int) -> np.ndarray:
    k = np.arange(n)
    return np.exp(-2j * np.pi * np.outer(k, k) / n)


def dft_direct(x: np.ndarray) -> np.ndarray:
    """Dense O(N^2) forward DFT along the last axis."""
    return x @ dft_matrix(x.shape[-1])


@lru_cache(maxsize=64)
def _bitrev(n: int) -> np.ndarray:
    bits = n.bit_length() - 1
    idx = np.arange(n)
    rev = np.zeros(n, dtype=np.int64)
    for b in range(bits):
        rev |= ((idx >> b) & 1) << (bits - 1 - b)
    return rev


@lru_cache(maxsize=64)
def _twiddles(n: int) -> np.ndarray:
    return np.exp(-2j * np.pi * np.arange(n // 2) / n)


if numba is not None:
    @numba.njit(cache=True, fastmath=True)
    def _fft_cols(xr, xi, rev, twr, twi):
        # transform along axis 0 of an (n, m) array given as real and imaginary
        # planes; columns are processed in cache-sized blocks, and the inner
        # loop runs over the columns of a block
        n, m = xr.shape
        out = np.empty((n, m), dtype=np.complex128)
        blk = 16
        re = np.empty((n, blk))
        im = np.empty((n, blk))
        for c0 in range(0, m, blk):
            w = min(blk, m - c0)
            for i in range(n):
                k = rev[i]
                for c in range(w):
                    re[k, c] = xr[i, c0 + c]
                    im[k, c] = xi[i, c0 + c]
            size = 2
            while size <= n:
                half = size // 2
                step = n // size
                for start in range(0, n, size):
                    for j in range(half):
                        wr = twr[j * step]
                        wi = twi[j * step]
                        a = start + j
                        b = a + half
                        for c in range(w):
                            tr = re[b, c] * wr - im[b, c] * wi
                            ti = re[b, c] * wi + im[b, c] * wr
                            ur = re[a, c]
                            ui = im[a, c]
                            re[a, c] = ur + tr
                            im[a, c] = ui + ti
                            re[b, c] = ur - tr
                            im[b, c] = ui - ti
                size *= 2
            for i in range(n):
                for c in range(w):
                    out[i, c0 + c] = complex(re[i, c], im[i, c])
        return out


def fft_radix2(x: np.ndarray, axis: int = -1) -> np.ndarray:
    """Iterative decimation-in-time FFT along ``axis`` (length 2^k)."""
    n = x.shape[axis]
    if n & (n - 1):
        raise ValueError(f"radix-2 FFT needs a power-of-two length, got {n}")
    if numba is not None:
        xm = np.moveaxis(x, axis, 0)
        rest = xm.shape[1:]
        flat = xm.reshape(n, -1)
        xr = np.ascontiguousarray(flat.real)
        xi = np.ascontiguousarray(flat.imag) if np.iscomplexobj(flat) else np.zeros(flat.shape)
        tw = _twiddles(n)
        out = _fft_cols(xr, xi, _bitrev(n), np.ascontiguousarray(tw.real), np.ascontiguousarray(tw.imag))
        out = out.reshape((n,) + rest)
        return np.moveaxis(out, 0, axis)
    xm = np.moveaxis(x, axis, -1)
    a = np.ascontiguousarray(xm[..., _bitrev(n)], dtype=np.complex128)
    return np.moveaxis(_fft_stages(a, n, xm.shape[:-1]), -1, axis)


def _fft_stages(a: np.ndarray, n: int, lead: tuple) -> np.ndarray:
    """Vectorized butterfly passes used when numba is unavailable."""
    tw = _twiddles(n)
    size = 2
    while size <= n:
        half = size // 2
        a = a.reshape(lead + (n // size, size))
        w = tw[:: n // size][:half]
        even = a[..., :half]
        odd = a[..., half:] * w
        a = np.concatenate([even + odd, even - odd], axis=-1)
        size *= 2
    return a.reshape(lead + (n,))


def _is_pow2(n: int) -> bool:
    return n > 0 and not n & (n - 1)


def dft1(x: np.ndarray, axis: int, inverse: bool = False, fast: bool | None = None) -> np.ndarray:
    """Unnormalized transform of ``x`` along ``axis``; ``inverse`` flips the sign."""
    fast = USE_FFT if fast is None else fast
    xm = np.asarray(x)
    if xm.dtype != np.float64:
        xm = xm.astype(np.complex128, copy=False)
    if inverse and np.iscomplexobj(xm):
        xm = np.conj(xm)
    n = xm.shape[axis]
    if n == 1:
        out = xm.astype(np.complex128)
    elif fast and _is_pow2(n):
        out = fft_radix2(xm, axis)
    else:
        out = np.moveaxis(dft_direct(np.moveaxis(xm, axis, -1)), -1, axis)
    if inverse:
        out = np.conj(out)
    return out


def _check_axes(ndim: int, axes) -> tuple[int, int]:
    if len(axes) != 2:
        raise ValueError("exactly two axes are required")
    a, b = axes
    for ax in (a, b):
        if not -ndim <= ax < ndim:
            raise ValueError(f"axis {ax} out of range for rank {ndim}")
    a, b = a % ndim, b % ndim
    if a == b:
        raise ValueError(f"duplicate axes {axes}")
    return a, b


def dft2_array(x: np.ndarray, axes, inverse: bool = False, fast: bool | None = None) -> np.ndarray:
    a, b = _check_axes(np.ndim(x), axes)
    out = dft1(dft1(x, a, inverse, fast), b, inverse, fast)
    if inverse:
        out = out / (x.shape[a] * x.shape[b])
    return out


# -- graph-level complex values -----------------------------------------------------

@dataclass
class ComplexTensor:
    """Complex array in the graph, backed by a real tensor of shape ``shape + (2,)``."""

    packed: Tensor

    @property
    def shape(self) -> tuple[int, ...]:
        return self.packed.shape[:-1]

    @property
    def re(self) -> np.ndarray:
        return self.packed.data[..., 0]

    @property
    def im(self) -> np.ndarray:
        return self.packed.data[..., 1]

    def numpy(self) -> np.ndarray:
        return self.re + 1j * self.im

    @classmethod
    def from_parts(cls, re, im, requires_grad: bool = False) -> "ComplexTensor":
        re, im = np.asarray(re, dtype=np.float64), np.asarray(im, dtype=np.float64)
        if re.shape != im.shape:
            raise ValueError("real and imaginary parts differ in shape")
        return cls(Tensor(np.stack([re, im], axis=-1), requires_grad=requires_grad))

    @classmethod
    def from_complex(cls, z, requires_grad: bool = False) -> "ComplexTensor":
        z = np.asarray(z, dtype=np.complex128)
        return cls.from_parts(z.real, z.imag, requires_grad)


def _pack(z: np.ndarray) -> np.ndarray:
    return np.stack([z.real, z.imag], axis=-1)


def _unpack(p: np.ndarray) -> np.ndarray:
    return p[..., 0] + 1j * p[..., 1]


def dft2(x: Tensor, axes) -> ComplexTensor:
    """Unnormalized forward 2D DFT of a real tensor over an axis pair."""
    axes = _check_axes(x.ndim, axes)
    n = x.shape[axes[0]] * x.shape[axes[1]]

    def bw(g):
        # adjoint of the forward DFT = n * inverse DFT, restricted to the real input
        return (np.real(dft2_array(_unpack(g), axes, inverse=True)) * n,)

    return ComplexTensor(make(_pack(dft2_array(x.data, axes)), (x,), "dft2", bw))


def idft2(s: ComplexTensor, axes, imag_tol: float | None = None) -> Tensor:
    """Inverse 2D DFT, returning the real part.

    When ``imag_tol`` is given the discarded imaginary residue is checked
    against it, which is only meaningful for Hermitian-symmetric spectra.
    """
    p = s.packed
    axes = _check_axes(p.ndim - 1, axes)
    n = p.shape[axes[0]] * p.shape[axes[1]]
    z = dft2_array(_unpack(p.data), axes, inverse=True)
    if imag_tol is not None:
        resid = float(np.abs(z.imag).max())
        if resid >= imag_tol:
            raise ValueError(f"imaginary residue {resid:.3e} exceeds {imag_tol:.1e}")

    def bw(g):
        return (_pack(dft2_array(g, axes)) / n,)

    return make(np.ascontiguousarray(z.real), (p,), "idft2", bw)


def cmul(s: ComplexTensor, w: ComplexTensor) -> ComplexTensor:
    """Elementwise complex product with broadcasting."""
    a, b = s.packed, w.packed
    za, zb = _unpack(a.data), _unpack(b.data)

    def bw(g):
        gz = _unpack(g)
        ga = unbroadcast(_pack(gz * np.conj(zb)), a.shape) if a.requires_grad else None
        gb = unbroadcast(_pack(gz * np.conj(za)), b.shape) if b.requires_grad else None
        return ga, gb

    return ComplexTensor(make(_pack(za * zb), (a, b), "cmul", bw))
