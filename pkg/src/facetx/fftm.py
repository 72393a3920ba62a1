"""Feature transformation: attention refinement, correspondence, multi-scale warp."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .extractors import FeaturePyramid
from .geometry import Geometry
from .tensor import DimensionError, Tensor

NORM_EPS = 1e-8
PATCH_SIZES = (1, 2, 4)


@dataclass
class AttentionParams:
    """Per-head projections (each d×d/h) plus the d×d output matrix."""

    wq: list[Tensor]
    wk: list[Tensor]
    wv: list[Tensor]
    w0: Tensor

    @property
    def heads(self) -> int:
        return len(self.wq)

    def named(self) -> dict[str, Tensor]:
        out = {"w0": self.w0}
        for i in range(self.heads):
            out[f"wq{i}"] = self.wq[i]
            out[f"wk{i}"] = self.wk[i]
            out[f"wv{i}"] = self.wv[i]
        return out

    @classmethod
    def from_named(cls, named: dict[str, Tensor]) -> "AttentionParams":
        h = sum(1 for k in named if k.startswith("wq"))
        return cls([named[f"wq{i}"] for i in range(h)], [named[f"wk{i}"] for i in range(h)],
                   [named[f"wv{i}"] for i in range(h)], named["w0"])

    @classmethod
    def init(cls, geom: Geometry, rng: np.random.Generator) -> "AttentionParams":
        d, h = geom.feat_dim, geom.heads
        dh = d // h

        def glorot(shape):
            bound = np.sqrt(6.0 / sum(shape))
            return Tensor(rng.uniform(-bound, bound, size=shape), requires_grad=True)

        return cls([glorot((d, dh)) for _ in range(h)], [glorot((d, dh)) for _ in range(h)],
                   [glorot((d, dh)) for _ in range(h)], glorot((d, d)))


def flatten_positions(fmap: Tensor) -> Tensor:
    """d×H×W map to an N×d matrix, raster order."""
    c, h, w = fmap.shape
    return T.transpose(T.reshape(fmap, (c, h * w)))


def normalize_rows(x: Tensor, eps: float = NORM_EPS) -> Tensor:
    # dividing by max(norm, eps) keeps the result exactly scale-free for non-tiny rows
    return T.div(x, T.clamp_min(T.l2_norm_rows(x), eps))


def cosine_logits(a: Tensor, b: Tensor) -> Tensor:
    """Pairwise cosine similarities between the rows of ``a`` and ``b``."""
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[1]:
        raise DimensionError(f"cosine of {a.shape} rows against {b.shape} rows")
    return T.matmul(normalize_rows(a), T.transpose(normalize_rows(b)))


def refine(features: Tensor, context: Tensor, params: AttentionParams,
           return_attention: bool = False):
    """Multi-head cosine attention of ``features`` (queries) over ``context``.

    Each head softmaxes cosine similarities of the projected rows and averages
    the value-projected context rows; heads are concatenated and mixed by W0.
    """
    if features.ndim != 2 or context.ndim != 2 or features.shape[1] != context.shape[1]:
        raise DimensionError(f"refine of {features.shape} against {context.shape}")
    d = features.shape[1]
    if params.w0.shape != (d, d) or d % params.heads:
        raise DimensionError(f"attention params do not match feature width {d}")
    heads, weights = [], []
    for wq, wk, wv in zip(params.wq, params.wk, params.wv):
        attn = T.softmax_rows(cosine_logits(T.matmul(features, wq), T.matmul(context, wk)))
        heads.append(T.matmul(attn, T.matmul(context, wv)))
        weights.append(attn)
    out = T.matmul(T.concat(heads, axis=1), params.w0)
    return (out, weights) if return_attention else out


def refine_pair(q: Tensor, k: Tensor, params: AttentionParams) -> tuple[Tensor, Tensor]:
    """Q_M attends from target to source features, K_M the other way round."""
    return refine(q, k, params), refine(k, q, params)


def correspondence(q_m: Tensor, k_m: Tensor) -> Tensor:
    """Row-stochastic N×N matrix: row i (target position) over source positions."""
    if q_m.shape != k_m.shape:
        raise DimensionError(f"correspondence of {q_m.shape} and {k_m.shape}")
    return T.softmax_rows(cosine_logits(q_m, k_m))


def warp_level(c: Tensor, v: Tensor, k: int) -> Tensor:
    _, h, w = v.shape
    if c.shape != ((h // k) * (w // k),) * 2:
        raise DimensionError(f"correspondence {c.shape} does not match level {v.shape} with k={k}")
    return T.fold(T.matmul(c, T.unfold(v, k)), k, k, h, w)


def transform_multiscale(c: Tensor, pyr: FeaturePyramid) -> tuple[Tensor, Tensor, Tensor]:
    """Carry every pyramid level through the correspondence with patch sizes 1, 2, 4."""
    return tuple(warp_level(c, v, k) for v, k in zip(pyr.levels(), PATCH_SIZES))
