"""Feature extractors feeding the transformer and the generator.

* a frozen three-stage conv pyramid (no biases, He-uniform, fixed seed) that
  stands in for a pretrained VGG and doubles as the loss network;
* a learnable image extractor producing K (source) and Q (target);
* a learnable semantic extractor producing Q_S from a one-hot parsing map.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .geometry import Geometry
from .tensor import DimensionError, Tensor

PYRAMID_SEED = 19


class ValidationError(ValueError):
    """Input does not satisfy the extractor's data contract."""


@dataclass
class FeaturePyramid:
    """Three-scale features: v1 is C×H×W, v2 is C/2×2H×2W, v3 is C/4×4H×4W."""

    v1: Tensor
    v2: Tensor
    v3: Tensor

    def __post_init__(self):
        c, h, w = self.v1.shape
        if self.v2.shape != (c // 2, 2 * h, 2 * w) or self.v3.shape != (c // 4, 4 * h, 4 * w):
            raise DimensionError(
                f"pyramid ratios violated: {self.v1.shape}, {self.v2.shape}, {self.v3.shape}")

    def levels(self) -> tuple[Tensor, Tensor, Tensor]:
        return self.v1, self.v2, self.v3


def he_uniform(rng: np.random.Generator, shape: tuple[int, ...]) -> np.ndarray:
    fan_in = int(np.prod(shape[1:]))
    bound = np.sqrt(6.0 / fan_in)
    return rng.uniform(-bound, bound, size=shape)


def _three_stage(rng, c_in: int, widths: tuple[int, int, int], requires_grad: bool) -> dict[str, Tensor]:
    w1, w2, w3 = widths
    return {
        "conv1": Tensor(he_uniform(rng, (w1, c_in, 3, 3)), requires_grad),
        "conv2": Tensor(he_uniform(rng, (w2, w1, 4, 4)), requires_grad),
        "conv3": Tensor(he_uniform(rng, (w3, w2, 4, 4)), requires_grad),
    }


def _run_three_stage(x: Tensor, p: dict[str, Tensor]) -> tuple[Tensor, Tensor, Tensor]:
    f3 = T.relu(T.conv2d(x, p["conv1"], stride=1, pad=1))
    f2 = T.relu(T.conv2d(f3, p["conv2"], stride=2, pad=1))
    f1 = T.relu(T.conv2d(f2, p["conv3"], stride=2, pad=1))
    return f1, f2, f3


def init_pyramid(geom: Geometry, seed: int = PYRAMID_SEED) -> dict[str, Tensor]:
    c1, c2, c3 = geom.pyramid_channels
    return _three_stage(np.random.default_rng(seed), 3, (c3, c2, c1), requires_grad=False)


def init_image_extractor(geom: Geometry, rng: np.random.Generator) -> dict[str, Tensor]:
    d = geom.feat_dim
    return _three_stage(rng, 3, (d // 4, d // 2, d), requires_grad=True)


def init_semantic_extractor(geom: Geometry, rng: np.random.Generator) -> dict[str, Tensor]:
    d = geom.feat_dim
    return _three_stage(rng, geom.sem_classes, (d // 4, d // 2, d), requires_grad=True)


def weights_digest(params: dict[str, Tensor]) -> str:
    """SHA-256 over names and raw bytes; used to prove the pyramid stays frozen."""
    h = hashlib.sha256()
    for name in sorted(params):
        h.update(name.encode())
        h.update(T.tensor_to_bytes(params[name]))
    return h.hexdigest()


def _check_image(x: Tensor, channels: int) -> None:
    if x.ndim != 3 or x.shape[0] != channels:
        raise DimensionError(f"expected {channels}×4H×4W input, got {x.shape}")
    if x.shape[1] % 4 or x.shape[2] % 4:
        raise DimensionError(f"spatial extent {x.shape[1:]} not divisible by 4")


def pyramid_extract(face: Tensor, pyramid: dict[str, Tensor]) -> FeaturePyramid:
    """Frozen features of a 3×4H×4W image.

    The pyramid weights are plain (non-grad) tensors, so no gradient ever
    reaches them; gradients still flow back into ``face``.
    """
    _check_image(face, 3)
    v1, v2, v3 = _run_three_stage(face, pyramid)
    return FeaturePyramid(v1, v2, v3)


def image_features(face: Tensor, params: dict[str, Tensor]) -> Tensor:
    _check_image(face, 3)
    return _run_three_stage(face, params)[0]


def check_one_hot(sem: np.ndarray) -> None:
    vals_ok = np.all((sem == 0) | (sem == 1))
    if not vals_ok or not np.all(sem.sum(axis=0) == 1):
        raise ValidationError("semantic map must be one-hot at every pixel")


def semantic_features(sem: Tensor, params: dict[str, Tensor]) -> Tensor:
    c_in = params["conv1"].shape[1]
    _check_image(sem, c_in)
    check_one_hot(sem.data)
    return _run_three_stage(sem, params)[0]
