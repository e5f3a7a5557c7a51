"""Distortion and perceptual evaluation, plus the test-time output blend.

All distortion numbers are reported on the 8-bit [0, 255] scale over RGB
after shaving a border (default: the scale factor, set by the CLI). A luma
mode (BT.601 Y) is available behind a flag.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DataError, ShapeMismatchError

PSNR_CAP_DB = 100.0


def _shaved_diff255(ref: np.ndarray, test: np.ndarray, shave: int,
                    luma: bool) -> np.ndarray:
    if ref.shape != test.shape:
        raise ShapeMismatchError(f"metric shapes differ: {ref.shape} vs {test.shape}")
    if shave < 0:
        raise ValueError(f"shave must be >= 0, got {shave}")
    h, w = ref.shape[:2]
    if 2 * shave >= h or 2 * shave >= w:
        raise ValueError(f"shave {shave} leaves no pixels of a {h}x{w} image")
    if shave:
        ref = ref[shave:-shave, shave:-shave]
        test = test[shave:-shave, shave:-shave]
    if luma:
        coef = np.array([65.481, 128.553, 24.966])
        ref = ref @ coef + 16.0
        test = test @ coef + 16.0
        return ref - test
    return (ref - test) * 255.0


def _mse255(ref, test, shave, luma):
    d = _shaved_diff255(np.asarray(ref, np.float64), np.asarray(test, np.float64),
                        shave, luma)
    return float(np.mean(d * d))


def rmse(ref: np.ndarray, test: np.ndarray, shave: int = 0, luma: bool = False) -> float:
    return float(np.sqrt(_mse255(ref, test, shave, luma)))


def psnr(ref: np.ndarray, test: np.ndarray, shave: int = 0, luma: bool = False) -> float:
    mse = _mse255(ref, test, shave, luma)
    if mse == 0.0:
        return PSNR_CAP_DB
    return min(10.0 * np.log10(255.0 ** 2 / mse), PSNR_CAP_DB)


def perceptual_score(m_val: float, n_val: float) -> float:
    """Combine the two no-reference scores; lower is better."""
    return 0.5 * ((10.0 - m_val) + n_val)


def classify_track(rmse_val: float) -> int:
    """RMSE bands: 1 for <= 11.5, 2 for (11.5, 12.5], 3 above."""
    if rmse_val < 0:
        raise ValueError(f"rmse must be non-negative, got {rmse_val}")
    if rmse_val <= 11.5:
        return 1
    if rmse_val <= 12.5:
        return 2
    return 3


def blend(out_distortion: np.ndarray, out_perceptual: np.ndarray,
          alpha: float) -> np.ndarray:
    """Convex combination of two model outputs, clamped to [0, 1]."""
    if not 0.0 <= alpha <= 1.0:
        raise ValueError(f"alpha must be in [0, 1], got {alpha}")
    if out_distortion.shape != out_perceptual.shape:
        raise ShapeMismatchError(
            f"blend shapes differ: {out_distortion.shape} vs {out_perceptual.shape}")
    mixed = (1.0 - alpha) * out_distortion + alpha * out_perceptual
    return np.clip(mixed, 0.0, 1.0)


@dataclass
class MetricReport:
    image_id: str
    psnr_db: float
    rmse: float
    perceptual: float | None
    track: int


class TargetUnreachableError(DataError):
    """Requested RMSE lies outside the [alpha=0, alpha=1] endpoint range."""

    def __init__(self, target: float, rmse_at_0: float, rmse_at_1: float):
        self.target = target
        self.rmse_at_0 = rmse_at_0
        self.rmse_at_1 = rmse_at_1
        super().__init__(
            f"target RMSE {target} unreachable: alpha=0 gives {rmse_at_0:.6f}, "
            f"alpha=1 gives {rmse_at_1:.6f}")


def tune_alpha_for_track(pairs: list[tuple[np.ndarray, np.ndarray, np.ndarray]],
                         target_rmse: float, shave: int = 0,
                         tol: float = 0.01, max_iter: int = 80):
    """Bisect alpha so the set-mean RMSE of the blends hits target_rmse.

    pairs holds (out_distortion, out_perceptual, reference) triples. Returns
    (alpha, per-image MetricReport list at that alpha)."""

    def mean_rmse(alpha: float) -> float:
        vals = [rmse(ref, blend(d, p, alpha), shave) for d, p, ref in pairs]
        return float(np.mean(vals))

    r0, r1 = mean_rmse(0.0), mean_rmse(1.0)
    if not min(r0, r1) <= target_rmse <= max(r0, r1):
        raise TargetUnreachableError(target_rmse, r0, r1)
    if abs(r0 - target_rmse) <= tol:
        alpha = 0.0
    elif abs(r1 - target_rmse) <= tol:
        alpha = 1.0
    else:
        increasing = r1 >= r0
        lo, hi = 0.0, 1.0
        for _ in range(max_iter):
            alpha = 0.5 * (lo + hi)
            r_mid = mean_rmse(alpha)
            if abs(r_mid - target_rmse) <= tol:
                break
            if (r_mid < target_rmse) == increasing:
                lo = alpha
            else:
                hi = alpha
    reports = []
    for i, (d, p, ref) in enumerate(pairs):
        b = blend(d, p, alpha)
        r = rmse(ref, b, shave)
        reports.append(MetricReport(str(i), psnr(ref, b, shave), r, None,
                                    classify_track(r)))
    return alpha, reports


# ---------------------------------------------------------------------------
# Score backend and CSV output


class ScoreBackend:
    """Named provider of the two no-reference scores, keyed by image id."""

    def __init__(self, name: str, scores: dict[str, tuple[float, float]]):
        self.name = name
        self.scores = scores

    def get(self, image_id: str) -> tuple[float, float] | None:
        return self.scores.get(image_id)


def read_score_file(path) -> ScoreBackend:
    """`image_id<TAB>M<TAB>N` per line; `#` comments."""
    path = Path(path)
    scores: dict[str, tuple[float, float]] = {}
    try:
        lines = path.read_text().splitlines()
    except OSError as e:
        raise DataError(f"cannot read score file {path}: {e}") from e
    for ln, line in enumerate(lines, start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split("\t")
        if len(parts) != 3:
            raise DataError(f"{path}:{ln}: expected `id<TAB>M<TAB>N`")
        try:
            scores[parts[0]] = (float(parts[1]), float(parts[2]))
        except ValueError as e:
            raise DataError(f"{path}:{ln}: bad score values") from e
    return ScoreBackend(str(path), scores)


def _fmt(x: float | None) -> str:
    return "" if x is None else repr(float(x))


def write_report_csv(reports: list[MetricReport], mean_row: MetricReport, path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["id", "psnr", "rmse", "P", "track"])
        for r in reports + [mean_row]:
            w.writerow([r.image_id, _fmt(r.psnr_db), _fmt(r.rmse),
                        _fmt(r.perceptual), r.track])
    tmp.replace(path)


def summarize(reports: list[MetricReport]) -> MetricReport:
    """Mean row; its track is classified from the mean RMSE."""
    ps = [r.perceptual for r in reports if r.perceptual is not None]
    mean_p = float(np.mean(ps)) if len(ps) == len(reports) and reports else None
    mean_rmse = float(np.mean([r.rmse for r in reports]))
    return MetricReport(
        "mean",
        float(np.mean([r.psnr_db for r in reports])),
        mean_rmse,
        mean_p,
        classify_track(mean_rmse),
    )


def write_curve_csv(rows: list[tuple[float, float, float | None]], path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["alpha", "rmse", "P_mean"])
        for alpha, r, p in rows:
            w.writerow([_fmt(alpha), _fmt(r), _fmt(p)])
    tmp.replace(path)
