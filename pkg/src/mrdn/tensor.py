"""Rank-4 tensors with reverse-mode autodiff over a dynamically recorded tape.

Every value is an NCHW float array. Ops executed while recording is on and at
least one input requires (or carries) a gradient are appended to a global tape;
``backward(loss)`` replays the tape in reverse, accumulating ``.grad`` buffers,
and clears the tape afterwards. The tape is rebuilt on every forward pass, so
the same parameter tensor may legally appear at several graph positions (the
scale-recurrent forward relies on this).

Two precision modes exist: "standard" (float32, training) and "wide" (float64,
used by the finite-difference test builds where float32 noise would swamp the
tolerances).
"""

from __future__ import annotations

import contextlib
from typing import Callable, Iterable, Sequence

import numpy as np

from .errors import ShapeMismatchError

_DTYPES = {"standard": np.float32, "wide": np.float64}
_mode = "standard"
_grad_enabled = True


def set_precision(mode: str) -> None:
    global _mode
    if mode not in _DTYPES:
        raise ValueError(f"unknown precision mode {mode!r}; expected 'standard' or 'wide'")
    _mode = mode


def precision_mode() -> str:
    return _mode


def current_dtype() -> np.dtype:
    return np.dtype(_DTYPES[_mode])


@contextlib.contextmanager
def precision(mode: str):
    """Temporarily switch the default dtype (tests use `precision("wide")`)."""
    global _mode
    prev = _mode
    set_precision(mode)
    try:
        yield
    finally:
        _mode = prev


@contextlib.contextmanager
def no_grad():
    """Disable tape recording (inference, data preparation)."""
    global _grad_enabled
    prev = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = prev


class Tensor:
    """A rank-4 (N, C, H, W) array, optionally participating in the tape."""

    __slots__ = ("data", "requires_grad", "grad", "_tape_child")

    def __init__(self, data, requires_grad: bool = False):
        arr = np.asarray(data, dtype=current_dtype())
        if arr.ndim != 4:
            raise ShapeMismatchError(f"tensors are rank-4 NCHW; got shape {arr.shape}")
        self.data = arr
        self.requires_grad = requires_grad
        self.grad: np.ndarray | None = None
        # True when produced by a recorded op: such tensors receive transient
        # grad buffers during backward even though requires_grad may be False.
        self._tape_child = False

    @property
    def shape(self) -> tuple[int, int, int, int]:
        return self.data.shape

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        if self.data.size != 1:
            raise ShapeMismatchError(f"item() needs a scalar tensor, got shape {self.shape}")
        return float(self.data.reshape(()))

    def detach(self) -> "Tensor":
        return Tensor(self.data.copy())

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self) -> str:
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}{flag})"

    # Convenience operators; the full rules live in the module functions.
    def __add__(self, other: "Tensor") -> "Tensor":
        return add(self, other)

    def __sub__(self, other: "Tensor") -> "Tensor":
        return sub(self, other)

    def __mul__(self, other):
        if isinstance(other, Tensor):
            return mul(self, other)
        return scale(self, float(other))

    __rmul__ = __mul__


def zeros(n: int, c: int, h: int, w: int, requires_grad: bool = False) -> Tensor:
    return Tensor(np.zeros((n, c, h, w), dtype=current_dtype()), requires_grad)


def ones(n: int, c: int, h: int, w: int, requires_grad: bool = False) -> Tensor:
    return Tensor(np.ones((n, c, h, w), dtype=current_dtype()), requires_grad)


def from_array(arr, requires_grad: bool = False) -> Tensor:
    return Tensor(np.asarray(arr), requires_grad)


class _TapeEntry:
    __slots__ = ("out", "inputs", "backward_fn")

    def __init__(self, out: Tensor, inputs: Sequence[Tensor], backward_fn):
        self.out = out
        self.inputs = inputs
        self.backward_fn = backward_fn


_tape: list[_TapeEntry] = []


def tape_length() -> int:
    return len(_tape)


def clear_tape() -> None:
    _tape.clear()


def _tracked(t: Tensor) -> bool:
    return t.requires_grad or t._tape_child


def record(out: Tensor, inputs: Sequence[Tensor], backward_fn: Callable[[np.ndarray], Iterable[np.ndarray | None]]) -> Tensor:
    """Append an op to the tape if recording is on and any input is tracked.

    ``backward_fn(grad_out)`` must return one gradient array (or None) per
    input, in input order.
    """
    if _grad_enabled and any(_tracked(t) for t in inputs):
        out._tape_child = True
        _tape.append(_TapeEntry(out, tuple(inputs), backward_fn))
    return out


def _accumulate(t: Tensor, g: np.ndarray) -> None:
    if g.shape != t.data.shape:
        raise ShapeMismatchError(
            f"gradient shape {g.shape} does not match tensor shape {t.data.shape}")
    if t.grad is None:
        t.grad = g.astype(t.data.dtype, copy=True)
    else:
        t.grad += g


def backward(loss: Tensor) -> None:
    """Reverse sweep from a scalar loss; populates .grad and clears the tape."""
    if loss.shape != (1, 1, 1, 1):
        raise ShapeMismatchError(f"backward() needs a (1,1,1,1) scalar loss, got {loss.shape}")
    if not _tape:
        raise RuntimeError("backward() called with an empty tape")
    try:
        loss.grad = np.ones_like(loss.data)
        for entry in reversed(_tape):
            g_out = entry.out.grad
            if g_out is None:
                continue  # branch not reachable from the loss
            grads = entry.backward_fn(g_out)
            for inp, g in zip(entry.inputs, grads):
                if g is None or not _tracked(inp):
                    continue
                _accumulate(inp, g)
            # Intermediate grads are only needed while walking the tape.
            if not entry.out.requires_grad:
                entry.out.grad = None
    finally:
        _tape.clear()


# ---------------------------------------------------------------------------
# Elementwise ops


def _check_same_shape(a: Tensor, b: Tensor, op: str) -> None:
    if a.shape != b.shape:
        raise ShapeMismatchError(f"{op}: shapes {a.shape} and {b.shape} differ")


def add(a: Tensor, b: Tensor) -> Tensor:
    """a + b; b may instead have batch size 1 and broadcast over the batch."""
    if a.shape != b.shape:
        if b.shape[0] == 1 and a.shape[1:] == b.shape[1:]:
            pass  # batch broadcast
        else:
            raise ShapeMismatchError(f"add: shapes {a.shape} and {b.shape} differ")
    out = Tensor(a.data + b.data)
    broadcast = a.shape != b.shape

    def bw(g):
        gb = g.sum(axis=0, keepdims=True) if broadcast else g
        return g, gb

    return record(out, (a, b), bw)


def sub(a: Tensor, b: Tensor) -> Tensor:
    _check_same_shape(a, b, "sub")
    out = Tensor(a.data - b.data)
    return record(out, (a, b), lambda g: (g, -g))


def mul(a: Tensor, b: Tensor) -> Tensor:
    _check_same_shape(a, b, "mul")
    out = Tensor(a.data * b.data)
    return record(out, (a, b), lambda g: (g * b.data, g * a.data))


def scale(a: Tensor, s: float) -> Tensor:
    out = Tensor(a.data * s)
    return record(out, (a,), lambda g: (g * s,))


def neg(a: Tensor) -> Tensor:
    return scale(a, -1.0)


def relu(x: Tensor) -> Tensor:
    out = Tensor(np.maximum(x.data, 0))
    mask = x.data > 0  # gradient is 0 exactly at the kink
    return record(out, (x,), lambda g: (g * mask,))


def leaky_relu(x: Tensor, slope: float = 0.2) -> Tensor:
    out = Tensor(np.where(x.data > 0, x.data, slope * x.data))
    factor = np.where(x.data > 0, 1.0, slope).astype(x.data.dtype)
    return record(out, (x,), lambda g: (g * factor,))


def absolute(x: Tensor) -> Tensor:
    out = Tensor(np.abs(x.data))
    sgn = np.sign(x.data)  # 0 at ties, matching the L1 subgradient convention
    return record(out, (x,), lambda g: (g * sgn,))


def clamp(x: Tensor, lo: float, hi: float) -> Tensor:
    out = Tensor(np.clip(x.data, lo, hi))
    mask = (x.data >= lo) & (x.data <= hi)
    return record(out, (x,), lambda g: (g * mask,))


# ---------------------------------------------------------------------------
# Structure ops


def concat_channels(parts: Sequence[Tensor]) -> Tensor:
    if len(parts) == 0:
        raise ShapeMismatchError("concat_channels: empty part list")
    first = parts[0].shape
    for p in parts[1:]:
        if (p.shape[0], p.shape[2], p.shape[3]) != (first[0], first[2], first[3]):
            raise ShapeMismatchError(
                f"concat_channels: N/H/W mismatch between {first} and {p.shape}")
    out = Tensor(np.concatenate([p.data for p in parts], axis=1))
    widths = [p.shape[1] for p in parts]
    splits = np.cumsum(widths)[:-1]

    def bw(g):
        return tuple(np.split(g, splits, axis=1))

    return record(out, tuple(parts), bw)


# ---------------------------------------------------------------------------
# Reductions (always produce a (1,1,1,1) scalar)


def tsum(x: Tensor) -> Tensor:
    out = Tensor(np.array(x.data.sum(), dtype=x.data.dtype).reshape(1, 1, 1, 1))
    return record(out, (x,), lambda g: (np.broadcast_to(g.reshape(()), x.shape).copy(),))


def tmean(x: Tensor) -> Tensor:
    n = x.size
    val = x.data.sum() / n if n else 0.0  # empty batch flows through as 0
    out = Tensor(np.array(val, dtype=x.data.dtype).reshape(1, 1, 1, 1))

    def bw(g):
        if n == 0:
            return (np.zeros_like(x.data),)
        return (np.broadcast_to(g.reshape(()) / n, x.shape).astype(x.data.dtype),)

    return record(out, (x,), bw)


def mean_chw(x: Tensor) -> Tensor:
    """Per-item mean over channels and space: (N, C, H, W) -> (N, 1, 1, 1)."""
    n, c, h, w = x.shape
    cnt = c * h * w
    out = Tensor(x.data.mean(axis=(1, 2, 3), keepdims=True) if cnt else
                 np.zeros((n, 1, 1, 1), dtype=x.data.dtype))

    def bw(g):
        if cnt == 0:
            return (np.zeros_like(x.data),)
        return (np.broadcast_to(g / cnt, x.shape).astype(x.data.dtype),)

    return record(out, (x,), bw)


def bce_with_logits(logits: Tensor, label: float) -> Tensor:
    """Mean binary cross-entropy against a constant 0/1 label, stable form.

    loss = mean(max(z,0) - z*y + log1p(exp(-|z|)));  d/dz = (sigmoid(z) - y)/n.
    """
    z = logits.data
    n = z.size
    if n == 0:
        val = 0.0
    else:
        val = float(np.mean(np.maximum(z, 0) - z * label + np.log1p(np.exp(-np.abs(z)))))
    out = Tensor(np.array(val, dtype=z.dtype).reshape(1, 1, 1, 1))

    def bw(g):
        if n == 0:
            return (np.zeros_like(z),)
        sig = 1.0 / (1.0 + np.exp(-z))
        return ((sig - label) * (g.reshape(()) / n),)

    return record(out, (logits,), bw)
