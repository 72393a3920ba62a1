"""Semantic-correspondence face swapping at desk scale on a from-scratch autodiff engine."""

from .extractors import FeaturePyramid, image_features, pyramid_extract, semantic_features
from .fftm import AttentionParams, correspondence, refine, transform_multiscale
from .fgm import discriminate, exchange_pair, generate
from .geometry import MICRO, Geometry
from .losses import (LossReport, LossWeights, adversarial_losses, contextual_loss, feature_loss,
                     perceptual_loss, total_loss)
from .tensor import Tensor

__version__ = "0.1.0"
