"""Cross-scale generator and patch discriminator."""

from __future__ import annotations

import numpy as np

from . import tensor as T
from .extractors import he_uniform, init_semantic_extractor
from .geometry import Geometry
from .tensor import DimensionError, Tensor

EXCHANGE_ROUNDS = 2
STREAMS = ("coarse", "mid", "fine")
PAIRS = (("mid", "coarse"), ("fine", "mid"))  # (hi, lo)


def stream_widths(geom: Geometry) -> dict[str, int]:
    c1, c2, c3 = geom.pyramid_channels
    return {"coarse": c1, "mid": c2, "fine": c3}


def init_generator(geom: Geometry, rng: np.random.Generator) -> dict[str, Tensor]:
    """All generator weights keyed by name; the ``sem.`` entries form its own semantic extractor."""
    widths = stream_widths(geom)
    c1, c2, c3 = geom.pyramid_channels
    in_ch = {"coarse": 2 * c1 + geom.feat_dim, "mid": 2 * c2, "fine": 2 * c3}

    def conv(c_out, c_in, k):
        return Tensor(he_uniform(rng, (c_out, c_in, k, k)), requires_grad=True)

    p: dict[str, Tensor] = {}
    for name, w in init_semantic_extractor(geom, rng).items():
        p[f"sem.{name}"] = w
    for s in STREAMS:
        p[f"in.{s}"] = conv(widths[s], in_ch[s], 1)
        p[f"res.{s}.a"] = conv(widths[s], widths[s], 3)
        # small second conv keeps the residual branch near identity at init
        p[f"res.{s}.b"] = Tensor(0.1 * he_uniform(rng, (widths[s], widths[s], 3, 3)), True)
    for r in range(EXCHANGE_ROUNDS):
        for hi, lo in PAIRS:
            p[f"ex{r}.{hi}-{lo}.up"] = conv(widths[hi], widths[lo], 3)
            p[f"ex{r}.{hi}-{lo}.down"] = conv(widths[lo], widths[hi], 4)
    p["out"] = conv(3, widths["fine"], 3)
    return p


def generator_semantic_params(params: dict[str, Tensor]) -> dict[str, Tensor]:
    return {k[4:]: v for k, v in params.items() if k.startswith("sem.")}


def exchange_pair(hi: Tensor, lo: Tensor, up_w: Tensor, down_w: Tensor) -> tuple[Tensor, Tensor]:
    """Swap information between a 2s×2s stream and an s×s stream.

    The high-resolution stream receives relu(conv(upsample(lo))); the low one
    receives relu(strided conv(hi)). Both are residual additions.
    """
    if hi.ndim != 3 or lo.ndim != 3 or hi.shape[1:] != (2 * lo.shape[1], 2 * lo.shape[2]):
        raise DimensionError(f"exchange_pair needs a 2x spatial ratio, got {hi.shape} and {lo.shape}")
    up = T.relu(T.conv2d(T.upsample(lo, 2), up_w, stride=1, pad=1))
    down = T.relu(T.conv2d(hi, down_w, stride=2, pad=1))
    return T.add(hi, up), T.add(lo, down)


def residual_block(x: Tensor, wa: Tensor, wb: Tensor) -> Tensor:
    return T.add(x, T.conv2d(T.relu(T.conv2d(x, wa, 1, 1)), wb, 1, 1))


def generate(s: Tensor, t: tuple[Tensor, Tensor, Tensor], b: tuple[Tensor, Tensor, Tensor],
             params: dict[str, Tensor]) -> Tensor:
    """Fuse transformed features ``t``, background features ``b`` and semantic features ``s``.

    Returns a 3×4H×4W image in [-1, 1].
    """
    for ti, bi in zip(t, b):
        if ti.shape[1:] != bi.shape[1:]:
            raise DimensionError(f"transformed {ti.shape} and background {bi.shape} disagree")
    if s.shape[1:] != t[0].shape[1:]:
        raise DimensionError(f"semantic features {s.shape} not at coarse scale {t[0].shape}")
    inputs = {
        "coarse": T.concat_channels([t[0], b[0], s]),
        "mid": T.concat_channels([t[1], b[1]]),
        "fine": T.concat_channels([t[2], b[2]]),
    }
    x = {}
    for name in STREAMS:
        h = T.relu(T.conv2d(inputs[name], params[f"in.{name}"]))
        x[name] = residual_block(h, params[f"res.{name}.a"], params[f"res.{name}.b"])
    for r in range(EXCHANGE_ROUNDS):
        for hi, lo in PAIRS:
            x[hi], x[lo] = exchange_pair(x[hi], x[lo], params[f"ex{r}.{hi}-{lo}.up"],
                                         params[f"ex{r}.{hi}-{lo}.down"])
    return T.tanh(T.conv2d(x["fine"], params["out"], stride=1, pad=1))


def disc_depth(image_size: int) -> int:
    return min(4, int(np.log2(image_size)))


def init_discriminator(geom: Geometry, rng: np.random.Generator) -> dict[str, Tensor]:
    c1, c2, c3 = geom.pyramid_channels
    widths = [3, c3, c2, c2, 1]
    depth = disc_depth(geom.image_size)
    widths = widths[:depth] + [1]
    return {f"conv{i}": Tensor(he_uniform(rng, (widths[i + 1], widths[i], 4, 4)), requires_grad=True)
            for i in range(depth)}


def discriminate(img: Tensor, params: dict[str, Tensor]) -> Tensor:
    """Raw patch logits (1×p×p) from a stack of stride-2 4×4 convs."""
    x = img
    depth = len(params)
    for i in range(depth):
        x = T.conv2d(x, params[f"conv{i}"], stride=2, pad=1)
        if i < depth - 1:
            x = T.relu(x)
    return x
