"""Evaluation metrics: SSIM quality, mask shape distance, landmark expression distance, identity proxy."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import tensor as T
from .extractors import ValidationError, pyramid_extract
from .losses import resize_mask

SSIM_K1, SSIM_K2 = 0.01, 0.03
SSIM_WIN, SSIM_SIGMA = 11, 1.5


def gaussian_window(size: int = SSIM_WIN, sigma: float = SSIM_SIGMA) -> np.ndarray:
    x = np.arange(size) - (size - 1) / 2.0
    g = np.exp(-(x * x) / (2.0 * sigma * sigma))
    return g / g.sum()


def _filter_valid(x: np.ndarray, g: np.ndarray) -> np.ndarray:
    """Separable 'valid' correlation over the last two axes."""
    k = g.size
    rows = sum(g[i] * x[..., i:x.shape[-2] - k + 1 + i, :] for i in range(k))
    return sum(g[j] * rows[..., :, j:x.shape[-1] - k + 1 + j] for j in range(k))


def ssim(a, b) -> float:
    """Mean SSIM of two C×H×W images in [-1, 1] (remapped to [0, 1], 11×11 Gaussian, σ=1.5)."""
    a = np.asarray(getattr(a, "data", a), dtype=np.float64)
    b = np.asarray(getattr(b, "data", b), dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"ssim of {a.shape} and {b.shape}")
    if min(a.shape[-2:]) < SSIM_WIN:
        raise ValueError(f"images smaller than the {SSIM_WIN}×{SSIM_WIN} window")
    x, y = (a + 1.0) / 2.0, (b + 1.0) / 2.0
    g = gaussian_window()
    c1, c2 = SSIM_K1 ** 2, SSIM_K2 ** 2
    mx, my = _filter_valid(x, g), _filter_valid(y, g)
    sxx = _filter_valid(x * x, g) - mx * mx
    syy = _filter_valid(y * y, g) - my * my
    sxy = _filter_valid(x * y, g) - mx * my
    num = (2.0 * mx * my + c1) * (2.0 * sxy + c2)
    den = (mx * mx + my * my + c1) * (sxx + syy + c2)
    return float(np.mean(num / den))


def shape_distance(m1, m2) -> float:
    """‖m1 − m2‖₂ / sqrt(#pixels), which lies in [0, 1] for binary masks."""
    m1, m2 = np.asarray(m1, dtype=np.float64), np.asarray(m2, dtype=np.float64)
    if m1.shape != m2.shape:
        raise ValueError(f"shape_distance of {m1.shape} and {m2.shape}")
    return float(np.sqrt(np.sum((m1 - m2) ** 2)) / np.sqrt(m1.size))


def expression_distance(l1, l2) -> float:
    """Mean Euclidean distance between corresponding landmarks, in pixels."""
    l1, l2 = np.asarray(l1, dtype=np.float64), np.asarray(l2, dtype=np.float64)
    if l1.shape != l2.shape:
        raise ValueError(f"landmark sets differ: {l1.shape} vs {l2.shape}")
    return float(np.mean(np.linalg.norm(l1 - l2, axis=-1)))


def identity_embedding(image, mask, pyramid) -> np.ndarray:
    """Mask-pooled mean of coarsest frozen-pyramid features of the masked image."""
    image = np.asarray(getattr(image, "data", image), dtype=np.float64)
    mask = np.asarray(mask, dtype=np.float64).reshape(image.shape[-2:])
    if not mask.any():
        raise ValidationError("identity embedding needs a non-empty mask")
    with T.no_grad():
        v1 = pyramid_extract(T.Tensor(image * mask), pyramid).v1.data
    cell = resize_mask(mask, *v1.shape[1:]) > 0.5
    if not cell.any():
        raise ValidationError("mask vanishes at the feature resolution")
    return v1[:, cell].mean(axis=1)


def id_distance(a, b, mask_a, mask_b, pyramid) -> float:
    return float(np.linalg.norm(identity_embedding(a, mask_a, pyramid)
                                - identity_embedding(b, mask_b, pyramid)))


@dataclass
class EvalReport:
    id_dist: list[float] = field(default_factory=list)
    expr_dist: list[float] = field(default_factory=list)
    shape_dist: list[float] = field(default_factory=list)
    ssim: list[float] = field(default_factory=list)

    COLUMNS = ("id_dist", "expr_dist", "shape_dist", "ssim")

    def add(self, id_dist: float, expr_dist: float, shape_dist: float, ssim_value: float) -> None:
        self.id_dist.append(float(id_dist))
        self.expr_dist.append(float(expr_dist))
        self.shape_dist.append(float(shape_dist))
        self.ssim.append(float(ssim_value))

    def __len__(self) -> int:
        return len(self.ssim)

    def means(self) -> dict[str, float]:
        return {c: float(np.mean(getattr(self, c))) if len(self) else float("nan")
                for c in self.COLUMNS}

    def to_tsv(self) -> str:
        lines = ["index\t" + "\t".join(self.COLUMNS)]
        for i in range(len(self)):
            lines.append("\t".join([str(i)] + [repr(getattr(self, c)[i]) for c in self.COLUMNS]))
        m = self.means()
        lines.append("\t".join(["mean"] + [repr(m[c]) for c in self.COLUMNS]))
        return "\n".join(lines) + "\n"

    def write(self, directory) -> None:
        d = Path(directory)
        d.mkdir(parents=True, exist_ok=True)
        (d / "eval.tsv").write_text(self.to_tsv())
        summary = {"count": len(self), "mean": self.means()}
        (d / "eval_summary.json").write_text(json.dumps(summary, indent=1, sort_keys=True))
