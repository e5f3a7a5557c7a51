"""Image I/O, bicubic degradation, dataset manifests, and patch sampling.

Images are float64 (H, W, 3) arrays in [0, 1], decoded from 8-bit RGB PNG or
binary PPM (P6) files. The resampler is a Keys cubic (a = -0.5) applied
separably with half-pixel centers, edge clamping, and per-output-pixel weight
normalization; outputs are clamped to [0, 1]. The four taps of each output
pixel are combined as a fixed pairwise tree, which keeps the result exactly
mirror-symmetric (horizontal flip commutes with degradation bitwise).
"""

from __future__ import annotations

import os
import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image, UnidentifiedImageError

from .errors import DataError
from .tensor import Tensor, current_dtype

_KEYS_A = -0.5


def bicubic_kernel(x):
    """Keys cubic interpolation kernel with a = -0.5."""
    ax = np.abs(np.asarray(x, dtype=np.float64))
    a = _KEYS_A
    near = (a + 2) * ax ** 3 - (a + 3) * ax ** 2 + 1
    far = a * ax ** 3 - 5 * a * ax ** 2 + 8 * a * ax - 4 * a
    out = np.where(ax <= 1, near, np.where(ax < 2, far, 0.0))
    return out if out.ndim else float(out)


def _axis_taps(in_len: int, out_len: int):
    """Tap indices (clamped) and weights for one resize axis."""
    ratio = in_len / out_len
    centers = (np.arange(out_len, dtype=np.float64) + 0.5) * ratio - 0.5
    base = np.floor(centers).astype(np.int64)
    offsets = np.arange(-1, 3)
    idx = base[:, None] + offsets[None, :]
    weights = bicubic_kernel(centers[:, None] - idx)
    idx = np.clip(idx, 0, in_len - 1)
    return idx, weights


def _pairwise(v0, v1, v2, v3):
    # Fixed reduction tree; reversing the tap order gives a bitwise-equal sum.
    return (v0 + v1) + (v2 + v3)


def _resize_axis(img: np.ndarray, out_len: int, axis: int) -> np.ndarray:
    idx, w = _axis_taps(img.shape[axis], out_len, )
    if axis == 0:
        taps = [img[idx[:, t], :, :] * w[:, t, None, None] for t in range(4)]
    else:
        taps = [img[:, idx[:, t], :] * w[None, :, t, None] for t in range(4)]
    num = _pairwise(*taps)
    den = _pairwise(w[:, 0], w[:, 1], w[:, 2], w[:, 3])
    den = den[:, None, None] if axis == 0 else den[None, :, None]
    return num / den


def bicubic_resize(img: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Separable bicubic resize of an (H, W, C) image to (out_h, out_w)."""
    if out_h <= 0 or out_w <= 0:
        raise DataError(f"bicubic_resize: target size {out_h}x{out_w} must be positive")
    img = np.asarray(img, dtype=np.float64)
    if img.ndim != 3:
        raise DataError(f"bicubic_resize: expected (H, W, C), got shape {img.shape}")
    out = _resize_axis(img, out_w, axis=1)  # rows first
    out = _resize_axis(out, out_h, axis=0)  # then columns
    return np.clip(out, 0.0, 1.0)


def degrade_bi(hr: np.ndarray, scale: int) -> np.ndarray:
    """Bicubic downsampling by an integer factor; dims must divide evenly."""
    h, w = hr.shape[:2]
    if h % scale or w % scale:
        raise DataError(
            f"degrade_bi: image {h}x{w} not divisible by scale {scale}; crop first")
    return bicubic_resize(hr, h // scale, w // scale)


def center_crop_to_multiple(img: np.ndarray, scale: int) -> np.ndarray:
    h, w = img.shape[:2]
    ch, cw = (h // scale) * scale, (w // scale) * scale
    if ch == 0 or cw == 0:
        raise DataError(f"image {h}x{w} too small for scale {scale}")
    y0, x0 = (h - ch) // 2, (w - cw) // 2
    return img[y0:y0 + ch, x0:x0 + cw]


def quantize_unit(arr: np.ndarray) -> np.ndarray:
    """Snap [0,1] values to the 8-bit grid exactly as a save->load round trip
    does (clamp, round half away from zero, divide by 255)."""
    a = np.clip(np.asarray(arr, dtype=np.float64), 0.0, 1.0)
    return np.floor(a * 255.0 + 0.5) / 255.0


# ---------------------------------------------------------------------------
# File I/O


def load_image(path) -> np.ndarray:
    path = Path(path)
    try:
        head = path.open("rb").read(8)
    except OSError as e:
        raise DataError(f"cannot read {path}: {e}") from e
    if head.startswith(b"\x89PNG"):
        return _load_png(path)
    if head.startswith(b"P6"):
        return _load_ppm(path)
    raise DataError(f"{path}: unsupported format (need 8-bit RGB PNG or binary PPM P6)")


def _load_png(path: Path) -> np.ndarray:
    try:
        with Image.open(path) as im:
            im.load()
            if im.mode != "RGB":
                raise DataError(f"{path}: expected 3-channel RGB, got mode {im.mode}")
            arr = np.asarray(im, dtype=np.uint8)
    except (OSError, UnidentifiedImageError, SyntaxError) as e:
        raise DataError(f"{path}: broken PNG file ({e})") from e
    return arr.astype(np.float64) / 255.0


_PPM_TOKEN = re.compile(rb"(?:\s|#[^\n]*\n)*(\S+)")


def _load_ppm(path: Path) -> np.ndarray:
    raw = path.read_bytes()
    pos = 0
    fields = []
    for _ in range(4):  # magic, width, height, maxval
        m = _PPM_TOKEN.match(raw, pos)
        if not m:
            raise DataError(f"{path}: truncated PPM header")
        fields.append(m.group(1))
        pos = m.end()
    if fields[0] != b"P6":
        raise DataError(f"{path}: not a binary PPM (P6) file")
    try:
        w, h, maxval = (int(f) for f in fields[1:])
    except ValueError as e:
        raise DataError(f"{path}: malformed PPM header") from e
    if maxval != 255:
        raise DataError(f"{path}: only maxval 255 PPM supported, got {maxval}")
    if w <= 0 or h <= 0:
        raise DataError(f"{path}: bad PPM dimensions {w}x{h}")
    pos += 1  # single whitespace after maxval
    data = raw[pos:pos + w * h * 3]
    if len(data) < w * h * 3:
        raise DataError(f"{path}: truncated PPM payload "
                        f"({len(data)} of {w * h * 3} bytes)")
    arr = np.frombuffer(data, dtype=np.uint8).reshape(h, w, 3)
    return arr.astype(np.float64) / 255.0


def save_image(img: np.ndarray, path) -> None:
    """Write an (H, W, 3) [0,1] image as PNG or PPM, atomically."""
    path = Path(path)
    img = np.asarray(img, dtype=np.float64)
    if img.ndim != 3 or img.shape[2] != 3:
        raise DataError(f"save_image: expected (H, W, 3), got {img.shape}")
    u8 = np.floor(np.clip(img, 0.0, 1.0) * 255.0 + 0.5).astype(np.uint8)
    suffix = path.suffix.lower()
    tmp = path.with_name(path.name + ".tmp")
    path.parent.mkdir(parents=True, exist_ok=True)
    if suffix == ".png":
        Image.fromarray(u8, "RGB").save(tmp, format="PNG")
    elif suffix == ".ppm":
        header = f"P6\n{u8.shape[1]} {u8.shape[0]}\n255\n".encode("ascii")
        tmp.write_bytes(header + u8.tobytes())
    else:
        raise DataError(f"save_image: unsupported extension {suffix!r} (png/ppm)")
    os.replace(tmp, path)


# ---------------------------------------------------------------------------
# Manifests and batch sampling


@dataclass
class DatasetManifest:
    """HR/LR path pairs; LR is degraded on the fly when absent."""

    pairs: list[tuple[str, str | None]]
    scale: int
    degradation: str = "BI"
    _cache: dict = field(default_factory=dict, repr=False)

    def __len__(self) -> int:
        return len(self.pairs)

    def load_pair(self, i: int) -> tuple[np.ndarray, np.ndarray]:
        if i not in self._cache:
            hr_path, lr_path = self.pairs[i]
            hr = center_crop_to_multiple(load_image(hr_path), self.scale)
            if lr_path is None:
                lr = degrade_bi(hr, self.scale)
            else:
                lr = load_image(lr_path)
                want = (hr.shape[0] // self.scale, hr.shape[1] // self.scale)
                if lr.shape[:2] != want:
                    raise DataError(
                        f"{lr_path}: LR is {lr.shape[1]}x{lr.shape[0]}, expected "
                        f"{want[1]}x{want[0]} for {hr_path} at scale {self.scale}")
            self._cache[i] = (hr, lr)
        return self._cache[i]


def read_manifest(path, scale: int) -> DatasetManifest:
    """One pair per line: `hr_path<TAB>lr_path` or just `hr_path`; `#` comments.
    Relative paths resolve against the manifest's directory."""
    path = Path(path)
    base = path.parent
    pairs: list[tuple[str, str | None]] = []
    try:
        lines = path.read_text().splitlines()
    except OSError as e:
        raise DataError(f"cannot read manifest {path}: {e}") from e
    for ln, line in enumerate(lines, start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split("\t")
        if len(parts) > 2:
            raise DataError(f"{path}:{ln}: expected 1 or 2 tab-separated paths")
        hr = str(base / parts[0]) if not os.path.isabs(parts[0]) else parts[0]
        lr = None
        if len(parts) == 2 and parts[1]:
            lr = str(base / parts[1]) if not os.path.isabs(parts[1]) else parts[1]
        pairs.append((hr, lr))
    if not pairs:
        raise DataError(f"manifest {path} lists no images")
    return DatasetManifest(pairs, scale)


def write_manifest(pairs: list[tuple[str, str | None]], path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = ["# hr_path<TAB>lr_path"]
    for hr, lr in pairs:
        lines.append(f"{hr}\t{lr}" if lr else str(hr))
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text("\n".join(lines) + "\n")
    os.replace(tmp, path)


@dataclass(frozen=True)
class PatchRecord:
    image_index: int
    y0: int  # LR crop origin
    x0: int
    rot90: int  # counter-clockwise quarter turns
    hflip: bool


@dataclass
class PatchBatch:
    lr: Tensor  # (N, 3, p, p)
    hr: Tensor  # (N, 3, s*p, s*p)
    records: list[PatchRecord]


def _augment(patch: np.ndarray, rot: int, flip: bool) -> np.ndarray:
    if rot:
        patch = np.rot90(patch, rot, axes=(0, 1))
    if flip:
        patch = patch[:, ::-1]
    return patch


def sample_batch(manifest: DatasetManifest, scale: int, patch: int = 32,
                 n: int = 16, rng: np.random.Generator | None = None) -> PatchBatch:
    """Aligned random LR/HR crops with per-patch rotation/flip augmentation."""
    if rng is None:
        rng = np.random.default_rng()
    lr_list, hr_list, records = [], [], []
    for _ in range(n):
        idx = int(rng.integers(len(manifest)))
        hr, lr = manifest.load_pair(idx)
        h, w = lr.shape[:2]
        if h < patch or w < patch:
            raise DataError(
                f"image {manifest.pairs[idx][0]} LR is {w}x{h}, smaller than "
                f"patch size {patch}")
        y0 = int(rng.integers(h - patch + 1))
        x0 = int(rng.integers(w - patch + 1))
        rot = int(rng.integers(4))
        flip = bool(rng.integers(2))
        lr_crop = lr[y0:y0 + patch, x0:x0 + patch]
        hr_crop = hr[scale * y0:scale * (y0 + patch), scale * x0:scale * (x0 + patch)]
        lr_list.append(_augment(lr_crop, rot, flip))
        hr_list.append(_augment(hr_crop, rot, flip))
        records.append(PatchRecord(idx, y0, x0, rot, flip))
    dt = current_dtype()
    lr_arr = np.ascontiguousarray(np.stack(lr_list).transpose(0, 3, 1, 2), dtype=dt)
    hr_arr = np.ascontiguousarray(np.stack(hr_list).transpose(0, 3, 1, 2), dtype=dt)
    return PatchBatch(Tensor(lr_arr), Tensor(hr_arr), records)


def image_to_tensor(img: np.ndarray) -> Tensor:
    """(H, W, 3) [0,1] image -> (1, 3, H, W) tensor in the current dtype."""
    chw = np.ascontiguousarray(np.asarray(img, np.float64).transpose(2, 0, 1))
    return Tensor(chw[None])


def tensor_to_image(t: Tensor, index: int = 0) -> np.ndarray:
    """(N, 3, H, W) tensor -> (H, W, 3) float64 image (not clamped)."""
    return np.ascontiguousarray(t.data[index].astype(np.float64).transpose(1, 2, 0))


def synthetic_image(rng: np.random.Generator, size: int = 64, scale: int = 2,
                    n_rects: int = 7) -> np.ndarray:
    """Piecewise-constant test image from a small palette, with rectangle
    edges snapped to the scale grid.

    Snapped sharp edges survive downsampling unambiguously (no aliased
    sub-grid detail), so a trained model can recover them while plain bicubic
    upsampling cannot; that keeps desk-scale overfit runs meaningful."""
    if size < 4 * scale:
        raise DataError(f"synthetic_image: size {size} too small for scale {scale}")
    palette = rng.uniform(0.0, 1.0, size=(5, 3))
    img = np.empty((size, size, 3), dtype=np.float64)
    img[:] = palette[0]
    min_side = 4  # in grid cells
    origin_cells = max(1, (size - min_side * scale) // scale)
    for _ in range(n_rects):
        y0 = int(rng.integers(0, origin_cells)) * scale
        x0 = int(rng.integers(0, origin_cells)) * scale
        hgt = int(rng.integers(min_side, (size - y0) // scale + 1)) * scale
        wdt = int(rng.integers(min_side, (size - x0) // scale + 1)) * scale
        img[y0:y0 + hgt, x0:x0 + wdt] = palette[rng.integers(1, 5)]
    return np.clip(img, 0.0, 1.0)
