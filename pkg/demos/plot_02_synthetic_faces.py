"""
Synthetic faces with exact labels
=================================

Training data comes from a procedural renderer. Each sample has an image, a
one-hot parsing map, an inner-face mask and five landmarks, all derived from
an identity latent (colours, part shapes) and an attribute latent (pose,
expression, placement, background).
"""

import sys
from pathlib import Path

import numpy as np

from facetx.synthdata import CLASSES, make_pairs, save_png

out = Path(sys.argv[1] if len(sys.argv) > 1 else "demo_faces")
out.mkdir(parents=True, exist_ok=True)

pair = make_pairs(1, seed=7)[0]
for role in ("source", "target", "gt_swap"):
    s = getattr(pair, role)
    save_png(out / f"{role}.png", s.image)
    print(f"{role:8s} mask pixels {int(s.mask.sum()):5d}  landmarks {np.round(s.landmarks, 1).tolist()}")

# the ground-truth swap carries the source identity and the target attributes
print("gt_swap identity == source identity:", pair.gt_swap.identity == pair.source.identity)
print("gt_swap attribute == target attribute:", pair.gt_swap.attribute == pair.target.attribute)

# class histogram of the target parsing map
labels = pair.target.labels
for i, name in enumerate(CLASSES):
    print(f"  {name:10s} {np.count_nonzero(labels == i):5d}")

# a strip of 8 sources for a quick look
strip = np.concatenate([p.source.image for p in make_pairs(8, seed=1)], axis=2)
save_png(out / "strip.png", strip)
print("wrote", sorted(p.name for p in out.iterdir()))
