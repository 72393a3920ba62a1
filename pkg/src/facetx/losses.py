"""Training objectives: feature, adversarial, perceptual, contextual and the weighted total."""

from __future__ import annotations

import math
from dataclasses import astuple, dataclass, fields
from typing import Sequence

import numpy as np

from . import tensor as T
from .extractors import ValidationError, pyramid_extract
from .fftm import normalize_rows
from .tensor import DimensionError, Tensor

CX_BANDWIDTH = 0.5
CX_EPS = 1e-5
# well above CX_EPS so merged-away neighbours would have had weight ~exp(-40)
CX_MERGE = 2e-4


class TrainingAbort(FloatingPointError):
    """A loss component went non-finite."""

    def __init__(self, component: str):
        super().__init__(f"loss component {component!r} is not finite")
        self.component = component


@dataclass(frozen=True)
class LossWeights:
    lambda1: float = 5.0      # feature
    lambda2: float = 10.0     # adversarial
    lambda3: float = 0.001    # perceptual
    lambda4: float = 1.0      # contextual

    def __post_init__(self):
        for f in fields(self):
            if getattr(self, f.name) < 0:
                raise ValueError(f"{f.name} must be nonnegative")


@dataclass
class LossReport:
    l_f: float
    l_adv_g: float
    l_adv_d: float
    l_perc: float
    l_context: float
    total: float

    def as_row(self, step: int) -> str:
        return "\t".join([str(step)] + [repr(float(v)) for v in astuple(self)])


def feature_loss(q: Tensor, q_s: Tensor) -> Tensor:
    """Mean absolute difference between target image features and semantic features."""
    if q.shape != q_s.shape:
        raise DimensionError(f"feature_loss of {q.shape} and {q_s.shape}")
    return T.mean(T.abs(T.sub(q, q_s)))


def _flat_logits(logits) -> Tensor:
    if isinstance(logits, Tensor):
        return T.reshape(logits, (-1,))
    return T.concat([T.reshape(x, (-1,)) for x in logits], axis=0)


def adversarial_losses(d_real, d_fake) -> tuple[Tensor, Tensor]:
    """(generator, discriminator) losses from raw logits.

    Discriminator: -E log sigmoid(real) - E log(1 - sigmoid(fake)).
    Generator (non-saturating): -E log sigmoid(fake). Both via softplus.
    Either argument may be a single logit grid or a batch (sequence) of them.
    """
    real = _flat_logits(d_real)
    fake = _flat_logits(d_fake)
    disc = T.add(T.mean(T.softplus(T.neg(real))), T.mean(T.softplus(fake)))
    gen = T.mean(T.softplus(T.neg(fake)))
    return gen, disc


def generator_adversarial_loss(d_fake) -> Tensor:
    return T.mean(T.softplus(T.neg(_flat_logits(d_fake))))


def perceptual_loss(f_swap: Tensor, f_tgt: Tensor, pyramid: dict[str, Tensor]) -> Tensor:
    """Mean L1 between coarsest frozen-pyramid activations of the two images."""
    if f_swap.shape != f_tgt.shape:
        raise DimensionError(f"perceptual_loss of {f_swap.shape} and {f_tgt.shape}")
    return T.mean(T.abs(T.sub(pyramid_extract(f_swap, pyramid).v1,
                              pyramid_extract(f_tgt, pyramid).v1)))


def distinct_rows(y: np.ndarray, tol: float = CX_MERGE) -> np.ndarray:
    """Sorted indices of rows of ``y`` kept after greedy near-duplicate removal."""
    norms = np.maximum(np.linalg.norm(y, axis=1, keepdims=True), 1e-8)
    yn = y / norms
    _, first = np.unique(y, axis=0, return_index=True)
    first.sort()
    if first.size < 2:
        return first
    close = (1.0 - yn[first] @ yn[first].T) < tol
    if not close[np.triu_indices(first.size, 1)].any():
        return first
    kept = np.zeros(first.size, dtype=bool)
    for j in range(first.size):
        kept[j] = not close[kept, j].any()
    return first[kept]


def contextual_similarity(x: Tensor, y: Tensor, bandwidth: float = CX_BANDWIDTH,
                          eps: float = CX_EPS) -> Tensor:
    """CX between feature sets given as rows of ``x`` (n×c) and ``y`` (m×c).

    ``y`` is treated as a set: rows closer than ``CX_MERGE`` in cosine distance
    to an earlier row are dropped first, otherwise flat image regions split
    each match between near-identical copies.
    """
    keep = distinct_rows(y.data)
    if keep.size < y.shape[0]:
        y = T.take_rows(y, keep)
    dist =T.sub(1.0, T.matmul(normalize_rows(x), T.transpose(normalize_rows(y))))
    rel = T.div(dist, T.add(T.min(dist, axis=1, keepdims=True), eps))
    # w_ij / sum_k w_ik with w = exp((1 - rel) / h) is a row softmax
    affinity = T.softmax_rows(T.scale(T.sub(1.0, rel), 1.0 / bandwidth))
    return T.mean(T.max(affinity, axis=0))


def resize_mask(mask: np.ndarray, h: int, w: int) -> np.ndarray:
    """Nearest-neighbour resize of an H×W (or 1×H×W) binary mask, sampling cell centres."""
    m = np.asarray(mask).reshape(mask.shape[-2:])
    fy, fx = m.shape[0] // h, m.shape[1] // w
    return m[fy // 2::fy, fx // 2::fx][:h, :w]


def _masked_rows(fmap: Tensor, mask: np.ndarray, select: bool) -> Tensor:
    c, h, w = fmap.shape
    rows = T.transpose(T.reshape(fmap, (c, h * w)))
    if not select:
        return rows
    keep = np.flatnonzero(resize_mask(mask, h, w).reshape(-1) > 0.5)
    if keep.size == 0:
        raise ValidationError(f"mask selects no positions at {h}×{w}")
    return T.take_rows(rows, keep)


def contextual_loss(f_swap: Tensor, f_src: Tensor, m_tgt, m_src, pyramid: dict[str, Tensor],
                    bandwidth: float = CX_BANDWIDTH, eps: float = CX_EPS,
                    select: bool = True, per_layer: bool = False):
    """Sum over pyramid levels of -log CX between masked swap and masked source features.

    With ``select`` on, feature vectors whose nearest-neighbour mask cell is
    background are dropped before CX is computed.
    """
    m_tgt = np.asarray(m_tgt.data if isinstance(m_tgt, Tensor) else m_tgt, dtype=np.float64)
    m_src = np.asarray(m_src.data if isinstance(m_src, Tensor) else m_src, dtype=np.float64)
    if not m_tgt.any() or not m_src.any():
        raise ValidationError("contextual_loss needs non-empty masks")
    a = pyramid_extract(T.mul(f_swap, m_tgt.reshape((1,) + m_tgt.shape[-2:])), pyramid)
    b = pyramid_extract(T.mul(f_src, m_src.reshape((1,) + m_src.shape[-2:])), pyramid)
    terms = []
    for fa, fb in zip((a.v3, a.v2, a.v1), (b.v3, b.v2, b.v1)):
        cx = contextual_similarity(_masked_rows(fa, m_tgt, select), _masked_rows(fb, m_src, select),
                                   bandwidth, eps)
        terms.append(T.neg(T.log(cx)))
    total = T.add(T.add(terms[0], terms[1]), terms[2])
    return (total, terms) if per_layer else total


def total_loss(components: Sequence, weights: LossWeights = LossWeights()):
    """λ-weighted sum of (feature, adversarial, perceptual, contextual) terms.

    Components may be tensors or floats; a non-finite value raises
    :class:`TrainingAbort` naming the component.
    """
    names = ("l_f", "l_adv_g", "l_perc", "l_context")
    if len(components) != 4:
        raise ValueError("total_loss takes exactly four components")
    for name, c in zip(names, components):
        v = c.item() if isinstance(c, Tensor) else float(c)
        if not math.isfinite(v):
            raise TrainingAbort(name)
    lams = (weights.lambda1, weights.lambda2, weights.lambda3, weights.lambda4)
    if not any(isinstance(c, Tensor) for c in components):
        return sum(lam * float(c) for lam, c in zip(lams, components))
    out = None
    for lam, c in zip(lams, components):
        term = T.scale(c, lam) if isinstance(c, Tensor) else Tensor(lam * float(c))
        out = term if out is None else T.add(out, term)
    return out
