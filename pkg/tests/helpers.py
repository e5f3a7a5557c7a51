"""Independent oracles shared by the test modules.

These stay deliberately dumb: finite differences for gradients, a direct
non-separable 2-D evaluation for the resampler, a scalar Adam trace. They
never call the code paths they are used to check.
"""

from __future__ import annotations

import math

import numpy as np

from mrdn import tensor as T
from mrdn.tensor import Tensor, backward


def rel_err(a: float, b: float) -> float:
    return abs(a - b) / max(1.0, abs(a), abs(b))


def finite_diff_check(build, tensors, rng=None, max_coords=None, h=1e-4,
                      skip=None) -> float:
    """Max relative error between autodiff and central differences.

    build() evaluates the scalar loss from the live tensors (define-by-run, so
    perturbing tensor.data in place and re-calling build() is enough). coords
    are subsampled per tensor when max_coords is given. skip(tensor, index)
    can exclude coordinates (e.g. near relu kinks)."""
    loss = build()
    backward(loss)
    grads = [t.grad.copy() if t.grad is not None else np.zeros_like(t.data)
             for t in tensors]
    for t in tensors:
        t.zero_grad()

    worst = 0.0
    for t, ad in zip(tensors, grads):
        coords = list(np.ndindex(t.data.shape))
        if max_coords is not None and len(coords) > max_coords:
            assert rng is not None
            picks = rng.choice(len(coords), size=max_coords, replace=False)
            coords = [coords[int(i)] for i in picks]
        for idx in coords:
            if skip is not None and skip(t, idx):
                continue
            orig = t.data[idx]
            t.data[idx] = orig + h
            with T.no_grad():
                fp = build().item()
            t.data[idx] = orig - h
            with T.no_grad():
                fm = build().item()
            t.data[idx] = orig
            fd = (fp - fm) / (2.0 * h)
            worst = max(worst, rel_err(float(ad[idx]), fd))
    return worst


def bicubic_kernel_scalar(x: float, a: float = -0.5) -> float:
    ax = abs(x)
    if ax <= 1:
        return (a + 2) * ax ** 3 - (a + 3) * ax ** 2 + 1
    if ax < 2:
        return a * ax ** 3 - 5 * a * ax ** 2 + 8 * a * ax - 4 * a
    return 0.0


def bicubic_resize_bruteforce(img: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Direct 2-D (non-separable) evaluation with joint weight normalization."""
    h, w, c = img.shape
    out = np.zeros((out_h, out_w, c))
    for oy in range(out_h):
        sy = (oy + 0.5) * h / out_h - 0.5
        by = math.floor(sy)
        for ox in range(out_w):
            sx = (ox + 0.5) * w / out_w - 0.5
            bx = math.floor(sx)
            num = np.zeros(c)
            den = 0.0
            for ty in range(-1, 3):
                for tx in range(-1, 3):
                    wt = (bicubic_kernel_scalar(sy - (by + ty))
                          * bicubic_kernel_scalar(sx - (bx + tx)))
                    py = min(max(by + ty, 0), h - 1)
                    px = min(max(bx + tx, 0), w - 1)
                    num += wt * img[py, px]
                    den += wt
            out[oy, ox] = num / den
    return np.clip(out, 0.0, 1.0)


def scalar_adam_trace(grads, lr, x0=0.0, b1=0.9, b2=0.999, eps=1e-8):
    """Parameter value after each step of textbook Adam on one scalar."""
    m = v = 0.0
    x = x0
    out = []
    for t, g in enumerate(grads, start=1):
        m = b1 * m + (1 - b1) * g
        v = b2 * v + (1 - b2) * g * g
        mh = m / (1 - b1 ** t)
        vh = v / (1 - b2 ** t)
        x = x - lr * mh / (math.sqrt(vh) + eps)
        out.append(x)
    return out


def rand_tensor(rng, shape, lo=-1.0, hi=1.0, requires_grad=False) -> Tensor:
    return Tensor(rng.uniform(lo, hi, size=shape), requires_grad=requires_grad)
