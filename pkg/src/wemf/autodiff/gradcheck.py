from __future__ import annotations

from typing import Callable

import numpy as np

from .tensor import Tensor, backward


def grad_check(f: Callable[[Tensor], Tensor], x: Tensor, eps: float = 1e-6,
               coords: np.ndarray | None = None) -> float:
    """Max over coordinates of |analytic - central difference| / max(1, |analytic|).

    ``f`` must return a scalar tensor. ``coords`` optionally restricts the
    check to a subset of flat indices of ``x``.
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    x.requires_grad = True
    x.grad = None
    out = f(x)
    if out.size != 1:
        raise ValueError(f"grad_check needs a scalar-valued function, got shape {out.shape}")
    backward(out)
    analytic = x.grad.reshape(-1).copy()
    x.grad = None

    flat = x.data.reshape(-1)
    idx = np.arange(flat.size) if coords is None else np.asarray(coords)
    worst = 0.0
    for i in idx:
        orig = flat[i]
        flat[i] = orig + eps
        fp = f(x).item()
        flat[i] = orig - eps
        fm = f(x).item()
        flat[i] = orig
        numeric = (fp - fm) / (2 * eps)
        err = abs(analytic[i] - numeric) / max(1.0, abs(analytic[i]))
        worst = max(worst, err)
    return worst
