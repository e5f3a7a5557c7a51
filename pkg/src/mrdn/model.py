"""Scale-recurrent generator plus the auxiliary discriminator and frozen
feature extractor used by the loss mixtures.

The generator contains exactly one 2x upsampling stage; factors 4 and 8 are
reached by running the same parameter set 2 or 3 times, clamping each
intermediate image back to [0, 1] before re-entry. Inference can additionally
snap intermediates to the 8-bit grid so that chaining the CLI at scale 2
twice reproduces a single scale-4 invocation byte for byte.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .blocks import BlockConfig, DenseBlock, init_conv
from .data import bicubic_resize, quantize_unit
from .errors import CheckpointError, ShapeMismatchError
from .ops import conv, pixel_shuffle, pixel_unshuffle
from .tensor import Tensor, clamp, concat_channels, leaky_relu, mean_chw, relu


@dataclass(frozen=True)
class ModelConfig:
    blocks: int
    block: BlockConfig
    scale: int = 2
    in_channels: int = 3

    def __post_init__(self):
        if self.blocks < 1:
            raise ValueError("need at least one block")
        if self.scale not in (2, 4, 8):
            raise ValueError(f"unsupported scale {self.scale}; expected 2, 4, or 8")


def default_config(scale: int = 2, kind: str = "mrdb") -> ModelConfig:
    return ModelConfig(blocks=8, block=BlockConfig(64, 32, 6, kind), scale=scale)


def tiny_config(scale: int = 2, kind: str = "mrdb") -> ModelConfig:
    """Desk-scale preset used throughout the tests."""
    return ModelConfig(blocks=2, block=BlockConfig(8, 4, 2, kind), scale=scale)


class Generator:
    def __init__(self, cfg: ModelConfig, rng: np.random.Generator):
        g0 = cfg.block.g0
        self.cfg = cfg
        self.sfe1 = init_conv(rng, g0, cfg.in_channels, 3)
        self.sfe2 = init_conv(rng, g0, g0, 3)
        self.blocks = [DenseBlock(cfg.block, rng) for _ in range(cfg.blocks)]
        self.gff1 = init_conv(rng, g0, cfg.blocks * g0, 1)
        self.gff2 = init_conv(rng, g0, g0, 3)
        self.up = init_conv(rng, 4 * g0, g0, 3)
        self.out = init_conv(rng, cfg.in_channels, g0, 3)

    @classmethod
    def from_seed(cls, cfg: ModelConfig, seed: int) -> "Generator":
        return cls(cfg, np.random.default_rng(seed))

    def params(self) -> dict[str, Tensor]:
        out: dict[str, Tensor] = {}
        for name, p in (("sfe1", self.sfe1), ("sfe2", self.sfe2)):
            out[f"{name}.weight"] = p.weight
            out[f"{name}.bias"] = p.bias
        for d, blk in enumerate(self.blocks, start=1):
            out.update(blk.params(prefix=f"block{d}."))
        for name, p in (("gff1", self.gff1), ("gff2", self.gff2),
                        ("up", self.up), ("out", self.out)):
            out[f"{name}.weight"] = p.weight
            out[f"{name}.bias"] = p.bias
        return out

    def param_count(self) -> int:
        return sum(p.size for p in self.params().values())

    def forward_2x(self, x: Tensor) -> Tensor:
        if x.shape[1] != self.cfg.in_channels:
            raise ShapeMismatchError(
                f"generator expects {self.cfg.in_channels} channels, got {x.shape[1]}")
        f0 = conv(x, self.sfe1)
        h = conv(f0, self.sfe2)
        block_outs = []
        for blk in self.blocks:
            h = blk(h)
            block_outs.append(h)
        fused = conv(conv(concat_channels(block_outs), self.gff1), self.gff2)
        g = T.add(fused, f0)
        return conv(pixel_shuffle(conv(g, self.up), 2), self.out)

    def forward_recurrent(self, x: Tensor, scale: int, quantize_steps: bool = False) -> Tensor:
        """Apply the shared 2x stage log2(scale) times.

        quantize_steps snaps intermediates to the 8-bit grid (inference only;
        it cuts the gradient path)."""
        if scale not in (2, 4, 8):
            raise ShapeMismatchError(f"unsupported scale {scale}; expected 2, 4, or 8")
        steps = int(math.log2(scale))
        cur = x
        for step in range(steps):
            y = self.forward_2x(cur)
            if step == steps - 1:
                return y
            cur = clamp(y, 0.0, 1.0)
            if quantize_steps:
                cur = Tensor(quantize_unit(cur.data))
        return y

    __call__ = forward_2x

    def state_dict(self) -> dict[str, np.ndarray]:
        out = {}
        for name, p in self.params().items():
            arr = p.data.astype("<f4")
            if name.endswith(".bias"):
                arr = arr.reshape(-1)  # serialized rank-1, shape (C,)
            out[name] = arr
        return out

    def load_state_dict(self, entries: dict[str, np.ndarray]) -> None:
        load_params(self.params(), entries, owner="generator")


def load_params(params: dict[str, Tensor], entries: dict[str, np.ndarray],
                owner: str) -> None:
    """Copy checkpoint entries into live parameters; extra entries are ignored,
    missing names or shape mismatches raise listing the first 5 offenders."""
    bad: list[str] = []
    for name, p in params.items():
        if name not in entries:
            bad.append(f"{name} (missing)")
            continue
        arr = np.asarray(entries[name])
        want = p.data.shape
        if name.endswith(".bias") and arr.ndim == 1:
            if arr.shape[0] == want[1]:
                arr = arr.reshape(want)
            else:
                bad.append(f"{name} (got ({arr.shape[0]},), want {want})")
                continue
        if arr.shape != want:
            bad.append(f"{name} (got {arr.shape}, want {want})")
            continue
        p.data = arr.astype(T.current_dtype())
    if bad:
        shown = ", ".join(bad[:5])
        raise CheckpointError(
            f"{owner}: {len(bad)} parameter entries do not match the configured "
            f"architecture: {shown}")


class Discriminator:
    """Conditioned patch critic: candidate HR concatenated with the
    bicubic-upsampled LR (6 channels in), two space-to-depth downsampling
    stages, one scalar logit per batch item."""

    def __init__(self, rng: np.random.Generator, width: int = 16):
        self.width = width
        self.layer1 = init_conv(rng, width, 6, 3)
        self.layer2 = init_conv(rng, width * 2, width * 4, 3)
        self.layer3 = init_conv(rng, width * 4, width * 8, 3)
        self.layer4 = init_conv(rng, 1, width * 4, 1)

    @classmethod
    def from_seed(cls, seed: int, width: int = 16) -> "Discriminator":
        return cls(np.random.default_rng(seed), width)

    def params(self) -> dict[str, Tensor]:
        out = {}
        for k, p in enumerate((self.layer1, self.layer2, self.layer3, self.layer4), start=1):
            out[f"disc.layer{k}.weight"] = p.weight
            out[f"disc.layer{k}.bias"] = p.bias
        return out

    def forward(self, hr_candidate: Tensor, lr: Tensor) -> Tensor:
        n, c, h, w = hr_candidate.shape
        ln, lc, lh, lw = lr.shape
        if ln != n or lc != c:
            raise ShapeMismatchError(
                f"discriminator: candidate {hr_candidate.shape} vs condition {lr.shape}")
        if lh == 0 or lw == 0 or h % lh or w % lw or h // lh != w // lw:
            raise ShapeMismatchError(
                f"discriminator: candidate {h}x{w} is not an integer upscale of {lh}x{lw}")
        if h % 4 or w % 4:
            raise ShapeMismatchError(
                f"discriminator: spatial dims {h}x{w} must be divisible by 4")
        cond = upsample_batch(lr.data, h, w)
        x = concat_channels([hr_candidate, Tensor(cond)])
        x = pixel_unshuffle(leaky_relu(conv(x, self.layer1)), 2)
        x = pixel_unshuffle(leaky_relu(conv(x, self.layer2)), 2)
        x = leaky_relu(conv(x, self.layer3))
        return mean_chw(conv(x, self.layer4))

    __call__ = forward


def upsample_batch(arr: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Bicubic-upsample an NCHW batch (no gradient participation)."""
    n = arr.shape[0]
    out = np.empty((n, arr.shape[1], out_h, out_w), dtype=arr.dtype)
    for i in range(n):
        hwc = np.ascontiguousarray(arr[i].transpose(1, 2, 0)).astype(np.float64)
        out[i] = bicubic_resize(hwc, out_h, out_w).transpose(2, 0, 1)
    return out


class FeatureExtractor:
    """Frozen mid-level feature stack: 5 convs, two space-to-depth steps
    (downsampling factor 4), 32 output channels. Parameters come from a fixed
    seed (default 54) or an external checkpoint; they never receive grads."""

    CHANNELS = (16, 16, 32, 32, 32)
    OUT_CHANNELS = 32
    DOWNSAMPLE = 4

    def __init__(self, rng: np.random.Generator):
        c = self.CHANNELS
        self.layers = [
            init_conv(rng, c[0], 3, 3, trainable=False),
            init_conv(rng, c[1], c[0], 3, trainable=False),
            init_conv(rng, c[2], c[1] * 4, 3, trainable=False),
            init_conv(rng, c[3], c[2], 3, trainable=False),
            init_conv(rng, c[4], c[3] * 4, 3, trainable=False),
        ]

    @classmethod
    def from_seed(cls, seed: int = 54) -> "FeatureExtractor":
        return cls(np.random.default_rng(seed))

    @classmethod
    def from_checkpoint(cls, entries: dict[str, np.ndarray]) -> "FeatureExtractor":
        fx = cls.from_seed()
        load_params(fx.params(), entries, owner="feature extractor")
        return fx

    def params(self) -> dict[str, Tensor]:
        out = {}
        for k, p in enumerate(self.layers, start=1):
            out[f"feat.layer{k}.weight"] = p.weight
            out[f"feat.layer{k}.bias"] = p.bias
        return out

    def forward(self, img: Tensor) -> Tensor:
        if img.shape[1] != 3:
            raise ShapeMismatchError(f"feature extractor expects RGB, got {img.shape}")
        x = relu(conv(img, self.layers[0]))
        x = pixel_unshuffle(relu(conv(x, self.layers[1])), 2)
        x = relu(conv(x, self.layers[2]))
        x = pixel_unshuffle(relu(conv(x, self.layers[3])), 2)
        return conv(x, self.layers[4])

    __call__ = forward
