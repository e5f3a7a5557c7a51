"""Flat `key = value` run configuration with [model]/[train]/[data] sections.

Unknown sections or keys are rejected; `#` starts a comment line. Loss-weight
keys are optional as a group: when none is given the phase default applies
(content phases: 1.0/0.05/0; adversarial phase: 0/1.0/5e-3).
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from pathlib import Path

from .blocks import BlockConfig
from .errors import ConfigError
from .losses import GAN_WEIGHTS, PRETRAIN_WEIGHTS, LossWeights
from .model import ModelConfig, tiny_config
from .train import PHASES, TrainPlan

_MODEL_KEYS = {"blocks", "base_width", "growth", "layers_per_block", "block", "scale"}
_TRAIN_KEYS = {"phase", "iterations", "base_lr", "lr_halve_period", "batch_size",
               "patch_size", "w_l1", "w_feat", "w_adv", "seed"}
_DATA_KEYS = {"manifest", "out_dir", "feat_checkpoint"}
_SECTIONS = {"model": _MODEL_KEYS, "train": _TRAIN_KEYS, "data": _DATA_KEYS}


@dataclass
class RunConfig:
    model: ModelConfig
    plan: TrainPlan
    weights: LossWeights
    seed: int
    manifest_path: str | None
    out_dir: str
    feat_checkpoint: str | None

    def validate_paths(self) -> None:
        """Check every referenced path before any work starts."""
        from .data import read_manifest

        if self.manifest_path is None:
            raise ConfigError("config is missing data.manifest")
        if not Path(self.manifest_path).is_file():
            raise ConfigError(f"manifest not found: {self.manifest_path}")
        man = read_manifest(self.manifest_path, self.model.scale)
        for hr, lr in man.pairs:
            for p in (hr, lr):
                if p is not None and not Path(p).is_file():
                    raise ConfigError(f"manifest references missing file: {p}")
        if self.feat_checkpoint and not Path(self.feat_checkpoint).is_file():
            raise ConfigError(f"feature checkpoint not found: {self.feat_checkpoint}")


def _parse_sections(text: str, source: str) -> dict[str, dict[str, str]]:
    sections: dict[str, dict[str, str]] = {}
    current: str | None = None
    for ln, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if line.startswith("[") and line.endswith("]"):
            current = line[1:-1].strip()
            if current not in _SECTIONS:
                raise ConfigError(f"{source}:{ln}: unknown section [{current}]")
            sections.setdefault(current, {})
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{ln}: expected `key = value`")
        if current is None:
            raise ConfigError(f"{source}:{ln}: key outside any section")
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in _SECTIONS[current]:
            raise ConfigError(f"{source}:{ln}: unknown key {key!r} in [{current}]")
        if key in sections[current]:
            raise ConfigError(f"{source}:{ln}: duplicate key {key!r}")
        sections[current][key] = value
    return sections


def _get(section: dict[str, str], key: str, cast, default):
    if key not in section:
        return default
    try:
        return cast(section[key])
    except ValueError as e:
        raise ConfigError(f"bad value for {key}: {section[key]!r}") from e


def parse_config(path, tiny: bool = False) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as e:
        raise ConfigError(f"cannot read config {path}: {e}") from e
    return parse_config_text(text, str(path), tiny=tiny)


def parse_config_text(text: str, source: str = "<config>", tiny: bool = False) -> RunConfig:
    sections = _parse_sections(text, source)
    model_s = sections.get("model", {})
    train_s = sections.get("train", {})
    data_s = sections.get("data", {})

    scale = _get(model_s, "scale", int, 2)
    try:
        if tiny:
            model = tiny_config(scale, _get(model_s, "block", str, "mrdb"))
        else:
            block = BlockConfig(
                g0=_get(model_s, "base_width", int, 64),
                growth=_get(model_s, "growth", int, 32),
                layers=_get(model_s, "layers_per_block", int, 6),
                kind=_get(model_s, "block", str, "mrdb"),
            )
            model = ModelConfig(blocks=_get(model_s, "blocks", int, 8),
                                block=block, scale=scale)
    except ValueError as e:
        raise ConfigError(str(e)) from e

    phase = _get(train_s, "phase", str, "pretrain-2x")
    if phase not in PHASES:
        raise ConfigError(f"unknown phase {phase!r}; expected one of {PHASES}")
    try:
        plan = TrainPlan(
            phase=phase,
            iterations=_get(train_s, "iterations", int, 1000),
            lr_halve_period=_get(train_s, "lr_halve_period", int, 200_000),
            batch_size=_get(train_s, "batch_size", int, 16),
            patch_size=_get(train_s, "patch_size", int, 32),
            base_lr=_get(train_s, "base_lr", float, 1e-4),
        )
    except ValueError as e:
        raise ConfigError(str(e)) from e

    if any(k in train_s for k in ("w_l1", "w_feat", "w_adv")):
        try:
            weights = LossWeights(
                w_l1=_get(train_s, "w_l1", float, 0.0),
                w_feat=_get(train_s, "w_feat", float, 0.0),
                w_adv=_get(train_s, "w_adv", float, 0.0),
            )
        except ValueError as e:
            raise ConfigError(str(e)) from e
    else:
        weights = GAN_WEIGHTS if phase == "gan-finetune" else PRETRAIN_WEIGHTS

    return RunConfig(
        model=model,
        plan=plan,
        weights=weights,
        seed=_get(train_s, "seed", int, 0),
        manifest_path=data_s.get("manifest"),
        out_dir=data_s.get("out_dir", "runs/run"),
        feat_checkpoint=data_s.get("feat_checkpoint") or None,
    )


def with_overrides(cfg: RunConfig, seed: int | None = None,
                   out_dir: str | None = None) -> RunConfig:
    if seed is not None:
        cfg = replace(cfg, seed=seed)
    if out_dir is not None:
        cfg = replace(cfg, out_dir=out_dir)
    return cfg
