"""Command-line entry points: train / infer / eval / curve / degrade.

Exit codes: 0 success, 1 usage or configuration error, 2 data error,
3 checkpoint error. Outputs are written via temp-file + rename, so an
interrupted command never leaves partial files under final names.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from .checkpoint import load_checkpoint, save_checkpoint
from .config import RunConfig, parse_config, with_overrides
from .data import (center_crop_to_multiple, degrade_bi, image_to_tensor,
                   load_image, quantize_unit, read_manifest, save_image,
                   tensor_to_image, write_manifest)
from .errors import CheckpointError, ConfigError, DataError, MrdnError
from .figures import save_curve_figure, save_eval_figure, save_loss_figure
from .metrics import (MetricReport, classify_track, perceptual_score, psnr,
                      read_score_file, rmse, summarize, write_curve_csv,
                      write_report_csv)
from .metrics import blend as blend_images
from .model import (Discriminator, FeatureExtractor, Generator, ModelConfig,
                    default_config, tiny_config)
from .tensor import no_grad
from .train import train_phase

_IMAGE_SUFFIXES = (".png", ".ppm")


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # usage problems exit 1, not argparse's 2
        raise ConfigError(message)


def _add_arch_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="run config supplying the architecture")
    p.add_argument("--tiny", action="store_true", help="use the tiny test preset")


def _arch_from_args(args, scale: int) -> ModelConfig:
    if args.config:
        cfg = parse_config(args.config, tiny=args.tiny)
        block = cfg.model.block
        return ModelConfig(blocks=cfg.model.blocks, block=block, scale=scale)
    if args.tiny:
        return tiny_config(scale)
    return default_config(scale)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="mrdn", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="run one training phase", parents=[])
    p.add_argument("--config", required=True)
    p.add_argument("--resume", help="checkpoint to fine-tune from")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", default=None, help="output directory (overrides config)")
    p.add_argument("--tiny", action="store_true")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("infer", help="super-resolve images with a checkpoint")
    p.add_argument("checkpoint")
    p.add_argument("images", nargs="+")
    p.add_argument("--scale", type=int, choices=(2, 4, 8), required=True)
    p.add_argument("--out", required=True, help="output directory")
    _add_arch_flags(p)
    p.set_defaults(func=cmd_infer)

    p = sub.add_parser("eval", help="PSNR/RMSE/perceptual report over a directory pair")
    p.add_argument("ref_dir")
    p.add_argument("test_dir")
    p.add_argument("--scale", type=int, default=4,
                   help="scale factor; sets the default shave border")
    p.add_argument("--shave", type=int, default=None)
    p.add_argument("--scores", help="score file: id<TAB>M<TAB>N")
    p.add_argument("--luma", action="store_true", help="measure on the Y channel")
    p.add_argument("--out", default="report.csv")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("curve", help="blend two checkpoints across alphas")
    p.add_argument("ckpt_distortion")
    p.add_argument("ckpt_perceptual")
    p.add_argument("--manifest", required=True)
    p.add_argument("--alphas", default="0,0.25,0.5,0.75,1")
    p.add_argument("--scale", type=int, choices=(2, 4, 8), default=4)
    p.add_argument("--shave", type=int, default=None)
    p.add_argument("--scores")
    p.add_argument("--out", default="curve_out")
    _add_arch_flags(p)
    p.set_defaults(func=cmd_curve)

    p = sub.add_parser("degrade", help="bicubic-downsample a directory of HR images")
    p.add_argument("hr_dir")
    p.add_argument("--scale", type=int, required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_degrade)

    return parser


def _list_images(directory) -> list[Path]:
    d = Path(directory)
    if not d.is_dir():
        raise DataError(f"not a directory: {d}")
    return sorted(p for p in d.iterdir() if p.suffix.lower() in _IMAGE_SUFFIXES)


def _load_generator(ckpt_path, arch: ModelConfig) -> Generator:
    entries = load_checkpoint(ckpt_path)
    gen = Generator.from_seed(arch, 0)
    gen.load_state_dict(entries)
    return gen


def _infer_image(gen: Generator, img: np.ndarray, scale: int) -> np.ndarray:
    with no_grad():
        out = gen.forward_recurrent(image_to_tensor(img), scale, quantize_steps=True)
    return np.clip(tensor_to_image(out), 0.0, 1.0)


# ---------------------------------------------------------------------------


def cmd_train(args) -> None:
    cfg: RunConfig = parse_config(args.config, tiny=args.tiny)
    cfg = with_overrides(cfg, seed=args.seed, out_dir=args.out)
    cfg.validate_paths()
    phase = cfg.plan.phase
    if phase in ("finetune-recurrent", "gan-finetune") and not args.resume:
        raise ConfigError(
            f"phase {phase} fine-tunes shared weights and requires --resume "
            "with a 2x-pretrained checkpoint")

    scale = 2 if phase == "pretrain-2x" else cfg.model.scale
    manifest = read_manifest(cfg.manifest_path, scale)
    rng = np.random.default_rng(cfg.seed)
    gen = Generator(cfg.model, rng)
    disc = Discriminator(rng) if phase == "gan-finetune" else None

    if args.resume:
        entries = load_checkpoint(args.resume)
        gen.load_state_dict(entries)
        if disc is not None and all(n in entries for n in disc.params()):
            from .model import load_params
            load_params(disc.params(), entries, owner="discriminator")

    fx = None
    if cfg.weights.w_feat > 0:
        if cfg.feat_checkpoint:
            fx = FeatureExtractor.from_checkpoint(load_checkpoint(cfg.feat_checkpoint))
        else:
            fx = FeatureExtractor.from_seed()

    out_dir = Path(cfg.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    trace_path = out_dir / "loss_trace.tsv"
    state, history = train_phase(gen, manifest, cfg.plan, cfg.weights, cfg.seed,
                                 scale=scale, disc=disc, fx=fx,
                                 trace_path=trace_path)
    ckpt_path = out_dir / "checkpoint.mrdn"
    save_checkpoint(state, ckpt_path)
    save_loss_figure(history, out_dir / "loss_trace.png")
    last = history["loss_total"][-1] if history["loss_total"] else float("nan")
    print(f"{phase}: {cfg.plan.iterations} iterations at scale {scale}, "
          f"final loss {last:.6g}")
    print(f"wrote {ckpt_path}, {trace_path}, {out_dir / 'loss_trace.png'}")


def cmd_infer(args) -> None:
    arch = _arch_from_args(args, args.scale)
    gen = _load_generator(args.checkpoint, arch)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    for src in args.images:
        src = Path(src)
        sr = _infer_image(gen, load_image(src), args.scale)
        dst = out_dir / src.name
        save_image(sr, dst)
        print(f"{src} -> {dst}")


def cmd_eval(args) -> None:
    shave = args.shave if args.shave is not None else args.scale
    refs = {p.name: p for p in _list_images(args.ref_dir)}
    tests = {p.name: p for p in _list_images(args.test_dir)}
    unmatched = sorted(set(refs) ^ set(tests))
    if unmatched:
        raise DataError("unmatched filenames between directories: "
                        + ", ".join(unmatched))
    if not refs:
        raise DataError(f"no images found in {args.ref_dir}")
    scores = read_score_file(args.scores) if args.scores else None

    reports = []
    for name in sorted(refs):
        ref = load_image(refs[name])
        test = load_image(tests[name])
        image_id = Path(name).stem
        r = rmse(ref, test, shave, luma=args.luma)
        p_val = None
        if scores is not None:
            mn = scores.get(image_id)
            if mn is not None:
                p_val = perceptual_score(*mn)
        reports.append(MetricReport(image_id, psnr(ref, test, shave, luma=args.luma),
                                    r, p_val, classify_track(r)))
    mean_row = summarize(reports)
    out = Path(args.out)
    write_report_csv(reports, mean_row, out)
    save_eval_figure(reports, mean_row, out.with_suffix(".png"))
    print(f"wrote {out} and {out.with_suffix('.png')} "
          f"({len(reports)} images, mean psnr {mean_row.psnr_db:.4f} dB, "
          f"mean rmse {mean_row.rmse:.4f})")


def _parse_alphas(spec: str) -> list[float]:
    try:
        alphas = [float(a) for a in spec.split(",") if a.strip() != ""]
    except ValueError as e:
        raise ConfigError(f"bad --alphas value {spec!r}") from e
    if not alphas:
        raise ConfigError("--alphas lists no values")
    for a in alphas:
        if not 0.0 <= a <= 1.0:
            raise ConfigError(f"alpha {a} outside [0, 1]")
    return alphas


def cmd_curve(args) -> None:
    alphas = _parse_alphas(args.alphas)
    shave = args.shave if args.shave is not None else args.scale
    arch = _arch_from_args(args, args.scale)
    gen_d = _load_generator(args.ckpt_distortion, arch)
    gen_p = _load_generator(args.ckpt_perceptual, arch)
    manifest = read_manifest(args.manifest, args.scale)
    scores = read_score_file(args.scores) if args.scores else None

    items = []  # (id, hr, out_d, out_p)
    for i in range(len(manifest)):
        hr, lr = manifest.load_pair(i)
        lr = quantize_unit(lr)  # match the on-disk LR a degrade+infer run sees
        image_id = Path(manifest.pairs[i][0]).stem
        items.append((image_id, hr,
                      _infer_image(gen_d, lr, args.scale),
                      _infer_image(gen_p, lr, args.scale)))

    out_dir = Path(args.out)
    rows: list[tuple[float, float, float | None]] = []
    for alpha in alphas:
        sub = out_dir / f"alpha_{alpha:g}"
        rmses, p_vals = [], []
        for image_id, hr, od, op in items:
            mixed = blend_images(od, op, alpha)
            save_image(mixed, sub / f"{image_id}.png")
            rmses.append(rmse(hr, mixed, shave))
            if scores is not None:
                mn = scores.get(f"alpha_{alpha:g}/{image_id}") or scores.get(image_id)
                if mn is not None:
                    p_vals.append(perceptual_score(*mn))
        p_mean = float(np.mean(p_vals)) if p_vals else None
        rows.append((alpha, float(np.mean(rmses)), p_mean))
    write_curve_csv(rows, out_dir / "curve.csv")
    save_curve_figure(rows, out_dir / "curve.png")
    print(f"wrote {out_dir / 'curve.csv'} and blended outputs for "
          f"{len(alphas)} alphas x {len(items)} images")


def cmd_degrade(args) -> None:
    sources = _list_images(args.hr_dir)
    if not sources:
        raise DataError(f"no images found in {args.hr_dir}")
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    pairs: list[tuple[str, str | None]] = []
    failures: list[str] = []
    for src in sources:
        try:
            hr = center_crop_to_multiple(load_image(src), args.scale)
            lr = degrade_bi(hr, args.scale)
        except DataError as e:
            failures.append(f"{src}: {e}")
            continue
        dst = out_dir / src.name
        save_image(lr, dst)
        pairs.append((str(src.resolve()), dst.name))
        print(f"{src} -> {dst}")
    if pairs:
        write_manifest(pairs, out_dir / "manifest.txt")
        print(f"wrote {out_dir / 'manifest.txt'} ({len(pairs)} pairs)")
    if failures:
        raise DataError("failed to process: " + "; ".join(failures))


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        args.func(args)
        return 0
    except ConfigError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    except CheckpointError as e:
        print(f"checkpoint error: {e}", file=sys.stderr)
        return 3
    except DataError as e:
        print(f"data error: {e}", file=sys.stderr)
        return 2
    except MrdnError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
