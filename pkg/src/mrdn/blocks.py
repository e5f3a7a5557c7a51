"""Residual dense blocks, with and without the extra 1x1 multi-residual taps.

Both kinds map G0 channels to G0 channels. Layer i (1-based) applies a 3x3
conv from G0+(i-1)*G to G channels followed by relu; the growing feature
stack is the concatenation of the block input with every layer output. The
multi-residual variant additionally projects the *block input* through a 1x1
conv to the current stack width and adds it onto the stack after each
concatenation, including the final one feeding local feature fusion. Fusion
is a 1x1 conv back to G0 channels, and the block input is added to its output
(local residual learning). No activation follows the 1x1 convs or the
residual additions.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .errors import ShapeMismatchError
from .ops import ConvParams, conv
from .tensor import Tensor, concat_channels, relu


@dataclass(frozen=True)
class BlockConfig:
    g0: int            # block input/output width
    growth: int        # channels added per dense layer
    layers: int        # dense layers per block
    kind: str = "mrdb"  # "rdb" | "mrdb"

    def __post_init__(self):
        if self.g0 < 1 or self.growth < 1 or self.layers < 1:
            raise ValueError(f"invalid block config {self}; g0, growth, layers must be >= 1")
        if self.kind not in ("rdb", "mrdb"):
            raise ValueError(f"unknown block kind {self.kind!r}")


def init_conv(rng: np.random.Generator, c_out: int, c_in: int, k: int,
              trainable: bool = True) -> ConvParams:
    """Fan-in scaled uniform weights, zero bias."""
    bound = 1.0 / np.sqrt(c_in * k * k)
    w = rng.uniform(-bound, bound, size=(c_out, c_in, k, k))
    weight = Tensor(w, requires_grad=trainable)
    bias = Tensor(np.zeros((1, c_out, 1, 1)), requires_grad=trainable)
    return ConvParams(weight, bias)


class DenseBlock:
    """One RDB or MRDB instance owning its conv parameters."""

    def __init__(self, cfg: BlockConfig, rng: np.random.Generator, trainable: bool = True):
        self.cfg = cfg
        g0, g, c = cfg.g0, cfg.growth, cfg.layers
        self.conv3 = [init_conv(rng, g, g0 + (i - 1) * g, 3, trainable) for i in range(1, c + 1)]
        self.mr1 = None
        if cfg.kind == "mrdb":
            self.mr1 = [init_conv(rng, g0 + i * g, g0, 1, trainable) for i in range(1, c + 1)]
        self.lff = init_conv(rng, g0, g0 + c * g, 1, trainable)

    def params(self, prefix: str = "") -> dict[str, Tensor]:
        out: dict[str, Tensor] = {}
        for i, p in enumerate(self.conv3, start=1):
            out[f"{prefix}layer{i}.conv3.weight"] = p.weight
            out[f"{prefix}layer{i}.conv3.bias"] = p.bias
            if self.mr1 is not None:
                out[f"{prefix}layer{i}.mr1.weight"] = self.mr1[i - 1].weight
                out[f"{prefix}layer{i}.mr1.bias"] = self.mr1[i - 1].bias
        out[f"{prefix}lff.weight"] = self.lff.weight
        out[f"{prefix}lff.bias"] = self.lff.bias
        return out

    def forward(self, x: Tensor) -> Tensor:
        cfg = self.cfg
        if x.shape[1] != cfg.g0:
            raise ShapeMismatchError(
                f"block expects {cfg.g0} input channels, got {x.shape[1]}")
        feats = [x]
        h = x  # input to the next 3x3 conv
        for i in range(cfg.layers):
            f = relu(conv(h, self.conv3[i]))
            feats.append(f)
            h = concat_channels(feats)  # width g0 + (i+1)*growth, from raw x and f's
            if self.mr1 is not None:
                h = T.add(h, conv(x, self.mr1[i]))
        return T.add(conv(h, self.lff), x)

    __call__ = forward


def rdb_forward(x: Tensor, block: DenseBlock) -> Tensor:
    if block.cfg.kind != "rdb":
        raise ValueError("rdb_forward needs an rdb-kind block")
    return block.forward(x)


def mrdb_forward(x: Tensor, block: DenseBlock) -> Tensor:
    if block.cfg.kind != "mrdb":
        raise ValueError("mrdb_forward needs an mrdb-kind block")
    return block.forward(x)


def block_param_count(cfg: BlockConfig) -> int:
    """Closed-form trainable scalar count for one block."""
    g0, g, c = cfg.g0, cfg.growth, cfg.layers
    total = 0
    for i in range(1, c + 1):
        total += (g0 + (i - 1) * g) * g * 9 + g  # 3x3 conv weight + bias
    total += (g0 + c * g) * g0 + g0  # local feature fusion 1x1
    if cfg.kind == "mrdb":
        for i in range(1, c + 1):
            total += g0 * (g0 + i * g) + (g0 + i * g)  # 1x1 tap weight + bias
    return total
