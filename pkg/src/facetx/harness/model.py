"""The full swapping network and its per-batch objectives."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .. import fftm, fgm
from .. import tensor as T
from ..extractors import (FeaturePyramid, image_features, init_image_extractor, init_pyramid,
                          init_semantic_extractor, pyramid_extract, semantic_features)
from ..fftm import AttentionParams
from ..geometry import Geometry
from ..losses import (LossReport, LossWeights, adversarial_losses, contextual_loss, feature_loss,
                      generator_adversarial_loss, perceptual_loss, total_loss)
from ..synthdata import SynthSample
from ..tensor import Tensor

GROUPS = ("extractors", "attention", "generator", "discriminator")


@dataclass
class Forward:
    q: Tensor
    q_s: Tensor
    k: Tensor
    q_m: Tensor
    k_m: Tensor
    corr: Tensor
    v: FeaturePyramid
    b: FeaturePyramid
    t: tuple[Tensor, Tensor, Tensor]
    s: Tensor
    swap: Tensor


class FaceSwapModel:
    """Parameter groups plus the forward pass from (source, target) to the swapped face."""

    def __init__(self, geom: Geometry, seed: int = 0):
        self.geom = geom
        rng = np.random.default_rng(seed)
        self.pyramid = init_pyramid(geom)
        self.image_ext = init_image_extractor(geom, rng)
        self.semantic_ext = init_semantic_extractor(geom, rng)
        self.attention = AttentionParams.init(geom, rng)
        self.generator = fgm.init_generator(geom, rng)
        self.discriminator = fgm.init_discriminator(geom, rng)

    def groups(self) -> dict[str, dict[str, Tensor]]:
        """Learnable parameters by group, each name -> tensor (shared objects, not copies)."""
        ext = {f"image.{k}": v for k, v in self.image_ext.items()}
        ext.update({f"semantic.{k}": v for k, v in self.semantic_ext.items()})
        return {
            "extractors": ext,
            "attention": self.attention.named(),
            "generator": self.generator,
            "discriminator": self.discriminator,
        }

    def generator_side(self) -> dict[str, Tensor]:
        g = self.groups()
        return {f"{grp}/{k}": v for grp in GROUPS[:3] for k, v in g[grp].items()}

    def forward(self, source: SynthSample, target: SynthSample) -> Forward:
        src_inner = Tensor(source.inner_face())
        tgt_inner = Tensor(target.inner_face())
        tgt_bg = Tensor(target.background())
        sem = Tensor(target.semantic)

        k = image_features(src_inner, self.image_ext)
        q = image_features(tgt_inner, self.image_ext)
        q_s = semantic_features(sem, self.semantic_ext)
        q_m, k_m = fftm.refine_pair(fftm.flatten_positions(q), fftm.flatten_positions(k),
                                    self.attention)
        corr = fftm.correspondence(q_m, k_m)
        v = pyramid_extract(src_inner, self.pyramid)
        b = pyramid_extract(tgt_bg, self.pyramid)
        t = fftm.transform_multiscale(corr, v)
        s = semantic_features(sem, fgm.generator_semantic_params(self.generator))
        swap = fgm.generate(s, t, b.levels(), self.generator)
        return Forward(q, q_s, k, q_m, k_m, corr, v, b, t, s, swap)

    def swap(self, source: SynthSample, target: SynthSample) -> np.ndarray:
        with T.no_grad():
            return self.forward(source, target).swap.data.copy()

    def generator_terms(self, pairs, forwards, cx_select: bool = True):
        """Batch means of (feature, adversarial, perceptual, contextual) generator terms."""
        n = len(pairs)
        l_f = l_perc = l_ctx = None
        fakes = []
        for (source, target), fw in zip(pairs, forwards):
            f = feature_loss(fw.q, fw.q_s)
            p = perceptual_loss(fw.swap, Tensor(target.image), self.pyramid)
            c = contextual_loss(fw.swap, Tensor(source.image), target.mask, source.mask,
                                self.pyramid, select=cx_select)
            l_f = f if l_f is None else T.add(l_f, f)
            l_perc = p if l_perc is None else T.add(l_perc, p)
            l_ctx = c if l_ctx is None else T.add(l_ctx, c)
            fakes.append(fgm.discriminate(fw.swap, self.discriminator))
        adv = generator_adversarial_loss(fakes)
        return T.scale(l_f, 1.0 / n), adv, T.scale(l_perc, 1.0 / n), T.scale(l_ctx, 1.0 / n)

    def discriminator_loss(self, pairs, forwards) -> Tensor:
        real = [fgm.discriminate(Tensor(target.image), self.discriminator) for _, target in pairs]
        fake = [fgm.discriminate(T.detach(fw.swap), self.discriminator) for fw in forwards]
        return adversarial_losses(real, fake)[1]

    def objective(self, pairs, weights: LossWeights, cx_select: bool = True) -> Tensor:
        """Generator objective (weighted total) for a list of (source, target) pairs."""
        forwards = [self.forward(s, t) for s, t in pairs]
        return total_loss(self.generator_terms(pairs, forwards, cx_select), weights)


def report(terms, l_adv_d: float, weights: LossWeights) -> LossReport:
    vals = [t.item() for t in terms]
    return LossReport(vals[0], vals[1], float(l_adv_d), vals[2], vals[3], total_loss(vals, weights))
