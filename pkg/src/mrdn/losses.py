"""Training objectives: weighted L1 / frozen-feature / adversarial mixture."""

from __future__ import annotations

from dataclasses import dataclass

from .errors import ShapeMismatchError
from .model import Discriminator, FeatureExtractor
from .tensor import Tensor, absolute, add, bce_with_logits, mul, scale, sub, tmean


@dataclass(frozen=True)
class LossWeights:
    w_l1: float = 1.0
    w_feat: float = 0.0
    w_adv: float = 0.0

    def __post_init__(self):
        if min(self.w_l1, self.w_feat, self.w_adv) < 0:
            raise ValueError(f"loss weights must be non-negative, got {self}")
        if self.w_l1 == self.w_feat == self.w_adv == 0:
            raise ValueError("at least one loss weight must be positive")


# Paper-silent defaults (ledgered): content phases lean on L1, the adversarial
# phase keeps the GAN term two orders below the feature term.
PRETRAIN_WEIGHTS = LossWeights(1.0, 0.05, 0.0)
GAN_WEIGHTS = LossWeights(0.0, 1.0, 5e-3)


def l1_loss(pred: Tensor, target: Tensor) -> Tensor:
    """Mean absolute difference over all elements."""
    if pred.shape != target.shape:
        raise ShapeMismatchError(f"l1_loss: shapes {pred.shape} vs {target.shape}")
    return tmean(absolute(sub(pred, target)))


def feature_loss(pred: Tensor, target: Tensor, fx: FeatureExtractor) -> Tensor:
    """MSE between frozen feature maps; gradient reaches pred only."""
    if pred.shape != target.shape:
        raise ShapeMismatchError(f"feature_loss: shapes {pred.shape} vs {target.shape}")
    d = sub(fx(pred), fx(target.detach()))
    return tmean(mul(d, d))


def gan_losses(d_real_logit: Tensor, d_fake_logit: Tensor) -> tuple[Tensor, Tensor]:
    """(discriminator loss, non-saturating generator loss) from logits."""
    d_loss = add(bce_with_logits(d_real_logit, 1.0), bce_with_logits(d_fake_logit, 0.0))
    g_loss = bce_with_logits(d_fake_logit, 1.0)
    return d_loss, g_loss


def combined_loss(pred: Tensor, target: Tensor, lr_img: Tensor,
                  weights: LossWeights,
                  fx: FeatureExtractor | None = None,
                  disc: Discriminator | None = None) -> tuple[Tensor, dict[str, float]]:
    """Weighted sum of the enabled terms; zero-weight terms are never evaluated.

    Returns the scalar loss tensor and the raw (unweighted) term values for
    logging."""
    parts = {"l1": 0.0, "feat": 0.0, "adv": 0.0}
    terms = []
    if weights.w_l1 > 0:
        t = l1_loss(pred, target)
        parts["l1"] = t.item()
        terms.append(scale(t, weights.w_l1))
    if weights.w_feat > 0:
        if fx is None:
            raise ValueError("w_feat > 0 needs a feature extractor")
        t = feature_loss(pred, target, fx)
        parts["feat"] = t.item()
        terms.append(scale(t, weights.w_feat))
    if weights.w_adv > 0:
        if disc is None:
            raise ValueError("w_adv > 0 needs a discriminator")
        t = bce_with_logits(disc(pred, lr_img), 1.0)
        parts["adv"] = t.item()
        terms.append(scale(t, weights.w_adv))
    if not terms:
        raise ValueError("all loss weights are zero")
    loss = terms[0]
    for t in terms[1:]:
        loss = add(loss, t)
    return loss, parts
