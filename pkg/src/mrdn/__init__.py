"""Scale-recurrent residual-dense super-resolution toolkit.

A self-contained implementation: rank-4 autodiff tensors, dense-block
generator with shared weights across scale factors, adversarial/feature/L1
training objectives, bicubic degradation pipeline, and distortion/perceptual
evaluation with a test-time blend for quality control.
"""

from .blocks import BlockConfig, DenseBlock, block_param_count
from .losses import LossWeights, combined_loss, feature_loss, gan_losses, l1_loss
from .model import (Discriminator, FeatureExtractor, Generator, ModelConfig,
                    default_config, tiny_config)
from .tensor import Tensor, backward, no_grad, precision, set_precision
from .train import Adam, TrainPlan, lr_at, train_phase

__version__ = "0.1.0"

__all__ = [
    "Adam", "BlockConfig", "DenseBlock", "Discriminator", "FeatureExtractor",
    "Generator", "LossWeights", "ModelConfig", "Tensor", "TrainPlan",
    "backward", "block_param_count", "combined_loss", "default_config",
    "feature_loss", "gan_losses", "l1_loss", "lr_at", "no_grad", "precision",
    "set_precision", "tiny_config", "train_phase", "__version__",
]
