"""Network operators: 3x3 / 1x1 convolution and pixel (un)shuffle.

Only the two kernel sizes the architecture uses are supported; k=3 always pads
by 1 and k=1 never pads, so spatial size is preserved. There is deliberately
no batch-norm, pooling, or strided convolution in this module.

The production forward lowers to im2col + matrix multiply. In wide (float64)
mode the contraction accumulates taps in a fixed (ci, ky, kx) order instead of
calling BLAS, which makes it bitwise-identical to the shift-and-add reference
`conv2d_direct` (the equivalence test relies on that; BLAS kernels reassociate
sums, so no tolerance-free comparison is possible otherwise).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ShapeMismatchError
from .tensor import Tensor, record


@dataclass
class ConvParams:
    """Weight (C_out, C_in, k, k) and bias, k in {1, 3}."""

    weight: Tensor
    bias: Tensor  # stored (1, C_out, 1, 1); serialized rank-1

    def __post_init__(self):
        co, ci, kh, kw = self.weight.shape
        if kh != kw or kh not in (1, 3):
            raise ShapeMismatchError(f"unsupported kernel size {kh}x{kw}; only 1x1 and 3x3")
        if self.bias.shape != (1, co, 1, 1):
            raise ShapeMismatchError(
                f"bias shape {self.bias.shape} does not match {co} output channels")

    @property
    def kernel(self) -> int:
        return self.weight.shape[2]

    @property
    def in_channels(self) -> int:
        return self.weight.shape[1]

    @property
    def out_channels(self) -> int:
        return self.weight.shape[0]

    @property
    def padding(self) -> int:
        return 1 if self.kernel == 3 else 0


def _pad_spatial(arr: np.ndarray, p: int) -> np.ndarray:
    if p == 0:
        return arr
    return np.pad(arr, ((0, 0), (0, 0), (p, p), (p, p)))


def _im2col(xp: np.ndarray, k: int, out_h: int, out_w: int) -> np.ndarray:
    """(B, C, Hp, Wp) -> (B, C*k*k, out_h*out_w) view-backed column matrix."""
    b, c, _, _ = xp.shape
    sb, sc, sh, sw = xp.strides
    patches = np.lib.stride_tricks.as_strided(
        xp,
        shape=(b, c, k, k, out_h, out_w),
        strides=(sb, sc, sh, sw, sh, sw),
        writeable=False,
    )
    return patches.reshape(b, c * k * k, out_h * out_w)


def _contract(wmat: np.ndarray, cols: np.ndarray) -> np.ndarray:
    """(C_out, K) x (B, K, N) -> (B, C_out, N)."""
    if wmat.dtype == np.float64:
        # Ordered tap accumulation: same add sequence as conv2d_direct.
        b, kk, n = cols.shape
        out = np.zeros((b, wmat.shape[0], n), dtype=wmat.dtype)
        for t in range(kk):
            out += wmat[None, :, t, None] * cols[:, None, t, :]
        return out
    return np.matmul(wmat, cols)


def conv(x: Tensor, p: ConvParams) -> Tensor:
    """Cross-correlation with the fixed stride-1 padding rule; differentiable
    w.r.t. x, weight, and bias."""
    n, c, h, w = x.shape
    if c != p.in_channels:
        raise ShapeMismatchError(
            f"conv: input has {c} channels, weight expects {p.in_channels}")
    k, pad, co = p.kernel, p.padding, p.out_channels
    xp = _pad_spatial(x.data, pad)
    cols = _im2col(xp, k, h, w)
    wmat = p.weight.data.reshape(co, c * k * k)
    out_mat = _contract(wmat, cols)
    out_mat = out_mat.reshape(n, co, h, w) + p.bias.data
    out = Tensor(out_mat)

    # Backward needs the materialized columns; keep them for the closure.
    cols_saved = np.ascontiguousarray(cols)

    def bw(g):
        g_cols = g.reshape(n, co, h * w)
        grad_b = g.sum(axis=(0, 2, 3)).reshape(1, co, 1, 1)
        grad_w = np.tensordot(g_cols, cols_saved, axes=([0, 2], [0, 2]))
        grad_w = grad_w.reshape(p.weight.shape)
        grad_cols = np.matmul(wmat.T, g_cols).reshape(n, c, k, k, h, w)
        gxp = np.zeros((n, c, h + 2 * pad, w + 2 * pad), dtype=g.dtype)
        for ky in range(k):
            for kx in range(k):
                gxp[:, :, ky:ky + h, kx:kx + w] += grad_cols[:, :, ky, kx]
        grad_x = gxp[:, :, pad:pad + h, pad:pad + w] if pad else gxp
        return grad_x, grad_w, grad_b

    return record(out, (x, p.weight, p.bias), bw)


def conv2d_direct(x: np.ndarray, weight: np.ndarray, bias: np.ndarray) -> np.ndarray:
    """Shift-and-add reference forward on raw arrays (test oracle path)."""
    n, c, h, w = x.shape
    co, ci, k, _ = weight.shape
    if c != ci:
        raise ShapeMismatchError(f"conv2d_direct: {c} input channels vs weight {ci}")
    if k not in (1, 3):
        raise ShapeMismatchError(f"unsupported kernel size {k}")
    pad = 1 if k == 3 else 0
    xp = _pad_spatial(x, pad)
    out = np.zeros((n, co, h, w), dtype=x.dtype)
    for cin in range(c):
        for ky in range(k):
            for kx in range(k):
                out += (weight[None, :, cin, ky, kx, None, None]
                        * xp[:, None, cin, ky:ky + h, kx:kx + w])
    return out + bias.reshape(1, co, 1, 1)


def _shuffle_fwd(arr: np.ndarray, r: int) -> np.ndarray:
    n, c, h, w = arr.shape
    cout = c // (r * r)
    t = arr.reshape(n, cout, r, r, h, w).transpose(0, 1, 4, 2, 5, 3)
    return np.ascontiguousarray(t).reshape(n, cout, h * r, w * r)


def _unshuffle_fwd(arr: np.ndarray, r: int) -> np.ndarray:
    n, c, h, w = arr.shape
    t = arr.reshape(n, c, h // r, r, w // r, r).transpose(0, 1, 3, 5, 2, 4)
    return np.ascontiguousarray(t).reshape(n, c * r * r, h // r, w // r)


def pixel_shuffle(x: Tensor, r: int) -> Tensor:
    """Channel-to-space: out[n, c, r*h+dy, r*w+dx] = in[n, c*r^2 + dy*r + dx, h, w]."""
    n, c, h, w = x.shape
    if r < 1:
        raise ShapeMismatchError(f"pixel_shuffle: upscale factor {r} < 1")
    if c % (r * r) != 0:
        raise ShapeMismatchError(f"pixel_shuffle: {c} channels not divisible by {r}^2")
    if r == 1:
        out = Tensor(x.data.copy())
        return record(out, (x,), lambda g: (g,))
    out = Tensor(_shuffle_fwd(x.data, r))
    return record(out, (x,), lambda g: (_unshuffle_fwd(g, r),))


def pixel_unshuffle(x: Tensor, r: int) -> Tensor:
    """Exact inverse of pixel_shuffle's index map."""
    n, c, h, w = x.shape
    if r < 1:
        raise ShapeMismatchError(f"pixel_unshuffle: factor {r} < 1")
    if h % r != 0 or w % r != 0:
        raise ShapeMismatchError(
            f"pixel_unshuffle: spatial dims ({h},{w}) not divisible by {r}")
    if r == 1:
        out = Tensor(x.data.copy())
        return record(out, (x,), lambda g: (g,))
    out = Tensor(_unshuffle_fwd(x.data, r))
    return record(out, (x,), lambda g: (_shuffle_fwd(g, r),))
