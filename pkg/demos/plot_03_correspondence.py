"""
Correspondence between two faces
================================

Features of the target face (queries) and the source face (keys) are refined
by cosine cross attention in both directions. Their cosine similarity,
softmaxed over source positions, gives the correspondence matrix C. C then
moves source features patch by patch at three scales.
"""

import numpy as np

from facetx import tensor as T
from facetx.extractors import init_image_extractor, init_pyramid, image_features, pyramid_extract
from facetx.fftm import AttentionParams, correspondence, flatten_positions, refine_pair, transform_multiscale
from facetx.geometry import Geometry
from facetx.synthdata import make_pairs

geom = Geometry()
rng = np.random.default_rng(0)
pair = make_pairs(1, seed=3)[0]

extractor = init_image_extractor(geom, rng)
attention = AttentionParams.init(geom, rng)
pyramid = init_pyramid(geom)

with T.no_grad():
    q = flatten_positions(image_features(T.Tensor(pair.target.inner_face()), extractor))
    k = flatten_positions(image_features(T.Tensor(pair.source.inner_face()), extractor))
    q_m, k_m = refine_pair(q, k, attention)
    c = correspondence(q_m, k_m)

print("C:", c.shape, " row sums within", np.abs(c.data.sum(axis=1) - 1).max())
print("mean of row maxima:", c.data.max(axis=1).mean(), " uniform would be", 1 / geom.n)

# C applied to the source pyramid: scale s moves k_s×k_s patches
with T.no_grad():
    v = pyramid_extract(T.Tensor(pair.source.inner_face()), pyramid)
    moved = transform_multiscale(c, v)
for level, t in zip(v.levels(), moved):
    print(f"level {tuple(level.shape)} -> transformed {tuple(t.shape)}")

# a permutation matrix moves patches exactly
perm = rng.permutation(geom.n)
p = np.zeros((geom.n, geom.n))
p[np.arange(geom.n), perm] = 1.0
with T.no_grad():
    exact = transform_multiscale(T.Tensor(p), v)
block = exact[2].data[:, :4, :4]
src_r, src_c = (int(v) for v in divmod(perm[0], geom.w))
print("first fine patch copied from block", (src_r, src_c), ":",
      np.array_equal(block, v.v3.data[:, 4 * src_r:4 * src_r + 4, 4 * src_c:4 * src_c + 4]))
