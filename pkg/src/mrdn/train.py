"""Adam, the learning-rate schedule, and the phase-based training loop."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .data import DatasetManifest, sample_batch
from .errors import ShapeMismatchError
from .losses import LossWeights, combined_loss, gan_losses
from .model import Discriminator, FeatureExtractor, Generator
from .tensor import Tensor, backward, no_grad

PHASES = ("pretrain-2x", "finetune-recurrent", "gan-finetune")


@dataclass
class TrainPlan:
    phase: str
    iterations: int
    lr_halve_period: int = 200_000  # full-scale default; scale down for desk runs
    batch_size: int = 16
    patch_size: int = 32
    base_lr: float = 1e-4

    def __post_init__(self):
        if self.phase not in PHASES:
            raise ValueError(f"unknown phase {self.phase!r}; expected one of {PHASES}")
        if self.iterations < 0 or self.batch_size < 1 or self.patch_size < 1:
            raise ValueError(f"invalid train plan {self}")
        if self.lr_halve_period <= 0:
            raise ValueError("lr_halve_period must be positive")
        if self.base_lr < 0:
            raise ValueError("base_lr must be non-negative")


def lr_at(iteration: int, base_lr: float, period: int) -> float:
    """Halve the base rate every `period` iterations."""
    if period <= 0:
        raise ValueError(f"lr period must be positive, got {period}")
    if iteration < 0:
        raise ValueError(f"iteration must be >= 0, got {iteration}")
    return base_lr * 0.5 ** (iteration // period)


class Adam:
    """Bias-corrected Adam over a named parameter dict; grads cleared per step."""

    def __init__(self, params: dict[str, Tensor], beta1: float = 0.9,
                 beta2: float = 0.999, eps: float = 1e-8):
        self.params = params
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.t = 0
        self.m = {k: np.zeros_like(p.data) for k, p in params.items()}
        self.v = {k: np.zeros_like(p.data) for k, p in params.items()}

    def step(self, lr: float) -> None:
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        bc1 = 1.0 - b1 ** self.t
        bc2 = 1.0 - b2 ** self.t
        for name, p in self.params.items():
            g = p.grad
            if g is None:
                raise ValueError(f"adam_step: missing gradient for {name!r}")
            m = self.m[name]
            v = self.v[name]
            m *= b1
            m += (1 - b1) * g
            v *= b2
            v += (1 - b2) * g * g
            p.data -= lr * (m / bc1) / (np.sqrt(v / bc2) + self.eps)
            p.grad = None

    def zero_grad(self) -> None:
        for p in self.params.values():
            p.grad = None


def adam_step(opt: Adam, lr: float) -> None:
    opt.step(lr)


def _trace_line(it: int, lr: float, total: float, parts: dict[str, float]) -> str:
    return (f"{it}\t{lr:.10g}\t{total:.10g}\t{parts['l1']:.10g}"
            f"\t{parts['feat']:.10g}\t{parts['adv']:.10g}")


def train_phase(gen: Generator, manifest: DatasetManifest, plan: TrainPlan,
                weights: LossWeights, seed: int, scale: int = 2,
                disc: Discriminator | None = None,
                fx: FeatureExtractor | None = None,
                trace_path: str | Path | None = None):
    """Run one training phase; returns (state_dict, history).

    history carries per-iteration floats: loss_total / loss_l1 / loss_feat /
    loss_adv, plus d_loss for the adversarial phase. The trace file, when
    requested, gets one tab-separated line per iteration:
    iter, lr, loss_total, loss_l1, loss_feat, loss_adv.
    """
    if len(manifest) == 0:
        raise ValueError("train_phase: dataset is empty")
    gan = plan.phase == "gan-finetune"
    if gan and disc is None:
        raise ValueError("gan-finetune needs a discriminator")
    if weights.w_feat > 0 and fx is None:
        raise ValueError("w_feat > 0 needs a feature extractor")
    rng = np.random.default_rng(seed)
    opt = Adam(gen.params())
    d_opt = Adam(disc.params()) if gan else None

    history: dict[str, list[float]] = {
        "loss_total": [], "loss_l1": [], "loss_feat": [], "loss_adv": []}
    if gan:
        history["d_loss"] = []

    trace_file = None
    if trace_path is not None:
        trace_file = open(trace_path, "w")
    try:
        for it in range(plan.iterations):
            lr = lr_at(it, plan.base_lr, plan.lr_halve_period)
            batch = sample_batch(manifest, scale, plan.patch_size,
                                 plan.batch_size, rng)
            if gan:
                # Discriminator sub-step on a detached candidate.
                with no_grad():
                    fake = gen.forward_recurrent(batch.lr, scale)
                fake = Tensor(fake.data.copy())
                d_loss, _ = gan_losses(disc(batch.hr, batch.lr),
                                       disc(fake, batch.lr))
                backward(d_loss)
                d_opt.step(lr)
                history["d_loss"].append(d_loss.item())

            pred = gen.forward_recurrent(batch.lr, scale)
            loss, parts = combined_loss(pred, batch.hr, batch.lr, weights,
                                        fx=fx, disc=disc)
            backward(loss)
            opt.step(lr)
            if gan:
                # The adversarial term backprops through disc as a side effect;
                # those grads must not leak into the next discriminator step.
                d_opt.zero_grad()

            total = loss.item()
            history["loss_total"].append(total)
            history["loss_l1"].append(parts["l1"])
            history["loss_feat"].append(parts["feat"])
            history["loss_adv"].append(parts["adv"])
            if trace_file is not None:
                trace_file.write(_trace_line(it, lr, total, parts) + "\n")
    finally:
        if trace_file is not None:
            trace_file.close()

    state = gen.state_dict()
    if gan:
        for name, p in disc.params().items():
            arr = p.data.astype("<f4")
            state[name] = arr.reshape(-1) if name.endswith(".bias") else arr
    return state, history
