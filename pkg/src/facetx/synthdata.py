"""Procedural face-like images with exact parsing maps, masks and landmarks.

A face is rendered from two independent descriptors: the identity latent
(colours and part shapes) and the attribute latent (face geometry, pose,
expression, placement, background). Swapping descriptors between two faces
therefore gives a ground-truth face swap.
"""

from __future__ import annotations

import json
import os
from dataclasses import asdict, dataclass, fields
from pathlib import Path

import numpy as np

from . import tensor as T

FORMAT_VERSION = 1
CLASSES = ("background", "skin", "eye-L", "eye-R", "nose", "mouth", "brow", "hair")
BACKGROUND, SKIN, EYE_L, EYE_R, NOSE, MOUTH, BROW, HAIR = range(8)
LANDMARK_NAMES = ("eye-L", "eye-R", "nose", "mouth-L", "mouth-R")

EYE_U, EYE_V = 0.38, -0.22
BROW_V = -0.44
MOUTH_V = 0.52
NOSE_TOP, NOSE_TIP = -0.12, 0.22
HAIR_COLOR = (-0.55, -0.65, -0.72)
EYE_COLOR = (-0.85, -0.82, -0.7)


class LatentError(ValueError):
    """A latent field lies outside its documented range."""


def _ranged(lo, hi):
    return {"range": (lo, hi)}


@dataclass(frozen=True)
class IdentityLatent:
    """Identity descriptor. Colours are in [-1, 1] image units."""

    skin_r: float = 0.6
    skin_g: float = 0.2
    skin_b: float = 0.0
    eye_shape: float = 0.7         # eye height / width
    nose_width: float = 0.13       # half-width at the tip, face-relative
    mouth_width: float = 0.3       # half-width, face-relative
    brow_thickness: float = 0.06   # face-relative

    RANGES = {
        "skin_r": (-0.5, 0.95), "skin_g": (-0.6, 0.8), "skin_b": (-0.7, 0.7),
        "eye_shape": (0.4, 1.0), "nose_width": (0.08, 0.2),
        "mouth_width": (0.2, 0.38), "brow_thickness": (0.04, 0.1),
    }


@dataclass(frozen=True)
class AttributeLatent:
    """Geometry/pose/expression descriptor. Lengths are fractions of the image side."""

    axis_a: float = 0.3        # face-ellipse half-width
    axis_b: float = 0.36       # face-ellipse half-height
    angle: float = 0.0         # radians, clockwise in image coordinates
    mouth_open: float = 0.3
    mouth_curve: float = 0.0   # >0 lifts the mouth corners
    tx: float = 0.0
    ty: float = 0.0
    bg_r: float = -0.2
    bg_g: float = 0.1
    bg_b: float = 0.4

    RANGES = {
        "axis_a": (0.25, 0.34), "axis_b": (0.31, 0.4), "angle": (-0.3, 0.3),
        "mouth_open": (0.0, 1.0), "mouth_curve": (-1.0, 1.0),
        "tx": (-0.06, 0.06), "ty": (-0.06, 0.06),
        "bg_r": (-1.0, 1.0), "bg_g": (-1.0, 1.0), "bg_b": (-1.0, 1.0),
    }


def _validate(latent) -> None:
    for f in fields(latent):
        lo, hi = latent.RANGES[f.name]
        v = getattr(latent, f.name)
        if not (lo <= v <= hi):
            raise LatentError(f"{type(latent).__name__}.{f.name}={v} outside [{lo}, {hi}]")


def _draw(cls, rng: np.random.Generator):
    return cls(**{f.name: float(rng.uniform(*cls.RANGES[f.name])) for f in fields(cls)})


def random_identity(rng: np.random.Generator) -> IdentityLatent:
    return _draw(IdentityLatent, rng)


def random_attribute(rng: np.random.Generator) -> AttributeLatent:
    return _draw(AttributeLatent, rng)


@dataclass
class SynthSample:
    image: np.ndarray          # 3×S×S in [-1, 1]
    semantic: np.ndarray       # 8×S×S one-hot
    mask: np.ndarray           # 1×S×S inner face
    landmarks: np.ndarray      # 5×2 (x, y) pixel coordinates
    identity: IdentityLatent
    attribute: AttributeLatent

    @property
    def labels(self) -> np.ndarray:
        return self.semantic.argmax(axis=0)

    def inner_face(self) -> np.ndarray:
        return self.image * self.mask

    def background(self) -> np.ndarray:
        return self.image * (1.0 - self.mask)


@dataclass
class SwapPair:
    source: SynthSample
    target: SynthSample
    gt_swap: SynthSample


def _palette(identity: IdentityLatent, attribute: AttributeLatent) -> np.ndarray:
    skin = np.array([identity.skin_r, identity.skin_g, identity.skin_b])
    pal = np.zeros((8, 3))
    pal[BACKGROUND] = (attribute.bg_r, attribute.bg_g, attribute.bg_b)
    pal[SKIN] = skin
    pal[EYE_L] = pal[EYE_R] = EYE_COLOR
    pal[NOSE] = skin * 0.85 - 0.08
    pal[MOUTH] = 0.5 * skin + 0.5 * np.array([0.7, -0.5, -0.4])
    pal[BROW] = 0.3 * skin - 0.55
    pal[HAIR] = HAIR_COLOR
    return np.clip(pal, -1.0, 1.0)


def _mouth_center_v(u, mw, curve):
    return MOUTH_V - 0.1 * curve * (u / mw) ** 2


def _frame(attribute: AttributeLatent, size: int):
    c = (size - 1) / 2.0
    return (c + attribute.tx * size, c + attribute.ty * size,
            attribute.axis_a * size, attribute.axis_b * size,
            np.cos(attribute.angle), np.sin(attribute.angle))


def _to_pixels(u, v, attribute: AttributeLatent, size: int) -> np.ndarray:
    cx, cy, a, b, cos, sin = _frame(attribute, size)
    ur, vr = np.asarray(u) * a, np.asarray(v) * b
    return np.stack([cx + cos * ur - sin * vr, cy + sin * ur + cos * vr], axis=-1)


def face_coords(attribute: AttributeLatent, size: int) -> tuple[np.ndarray, np.ndarray]:
    """Face-relative (u, v) of every pixel centre; the face ellipse is u² + v² <= 1."""
    cx, cy, a, b, cos, sin = _frame(attribute, size)
    yy, xx = np.mgrid[0:size, 0:size].astype(np.float64)
    dx, dy = xx - cx, yy - cy
    return (cos * dx + sin * dy) / a, (-sin * dx + cos * dy) / b


def render(identity: IdentityLatent, attribute: AttributeLatent, size: int = 64) -> SynthSample:
    """Rasterise one face. Deterministic in its arguments."""
    _validate(identity)
    _validate(attribute)
    u, v = face_coords(attribute, size)
    lab = np.full((size, size), BACKGROUND, dtype=np.int64)

    r2 = u * u + v * v
    lab[(r2 <= 1.15 ** 2) & (v < -0.25)] = HAIR
    lab[r2 <= 1.0] = SKIN
    for side, eye_cls in ((-1.0, EYE_L), (1.0, EYE_R)):
        lab[(np.abs(u - side * EYE_U) <= 0.18) & (np.abs(v - BROW_V) <= identity.brow_thickness / 2)] = BROW
        eye = ((u - side * EYE_U) / 0.15) ** 2 + ((v - EYE_V) / (0.15 * identity.eye_shape)) ** 2
        lab[eye <= 1.0] = eye_cls
    span = (v - NOSE_TOP) / (NOSE_TIP - NOSE_TOP)
    lab[(span >= 0) & (span <= 1) & (np.abs(u) <= identity.nose_width * np.maximum(span, 0.25))] = NOSE
    mw = identity.mouth_width
    inside = np.clip(1.0 - (u / mw) ** 2, 0.0, None)
    half_h = (0.025 + 0.08 * attribute.mouth_open) * np.sqrt(inside) + 0.015
    lab[(np.abs(u) <= mw) & (np.abs(v - _mouth_center_v(u, mw, attribute.mouth_curve)) <= half_h)] = MOUTH

    semantic = np.zeros((len(CLASSES), size, size))
    np.put_along_axis(semantic, lab[None], 1.0, axis=0)
    mask = ((lab != BACKGROUND) & (lab != HAIR)).astype(np.float64)[None]
    image = _palette(identity, attribute)[lab].transpose(2, 0, 1).copy()

    mu = 0.85 * mw
    uv = np.array([[-EYE_U, EYE_V], [EYE_U, EYE_V], [0.0, 0.1],
                   [-mu, _mouth_center_v(mu, mw, attribute.mouth_curve)],
                   [mu, _mouth_center_v(mu, mw, attribute.mouth_curve)]])
    landmarks = _to_pixels(uv[:, 0], uv[:, 1], attribute, size)
    return SynthSample(image, semantic, mask, landmarks, identity, attribute)


def sample_pair(rng_seed: int, size: int = 64) -> SwapPair:
    """Independent source/target draws plus the ground-truth swap (source identity, target attributes)."""
    rng = np.random.default_rng(rng_seed)
    src_id, src_attr = random_identity(rng), random_attribute(rng)
    tgt_id, tgt_attr = random_identity(rng), random_attribute(rng)
    return SwapPair(render(src_id, src_attr, size), render(tgt_id, tgt_attr, size),
                    render(src_id, tgt_attr, size))


def make_pairs(n: int, seed: int, size: int = 64) -> list[SwapPair]:
    """``n`` pairs whose per-pair seeds derive from ``seed``."""
    seeds = np.random.SeedSequence(seed).generate_state(n) if n else []
    return [sample_pair(int(s), size) for s in seeds]


# ---------------------------------------------------------------- persistence

_ROLES = ("source", "target", "gt_swap")


def _write_sample(d: Path, role: str, s: SynthSample, png: bool) -> None:
    T.save_tensor(d / f"{role}.image.bin", s.image)
    T.save_tensor(d / f"{role}.semantic.bin", s.semantic)
    T.save_tensor(d / f"{role}.mask.bin", s.mask)
    meta = {"landmarks": s.landmarks.tolist(), "identity": asdict(s.identity),
            "attribute": asdict(s.attribute)}
    (d / f"{role}.json").write_text(json.dumps(meta, indent=1, sort_keys=True))
    if png:
        save_png(d / f"{role}.png", s.image)


def _read_sample(d: Path, role: str) -> SynthSample:
    meta = json.loads((d / f"{role}.json").read_text())
    return SynthSample(
        T.load_tensor(d / f"{role}.image.bin"),
        T.load_tensor(d / f"{role}.semantic.bin"),
        T.load_tensor(d / f"{role}.mask.bin"),
        np.array(meta["landmarks"], dtype=np.float64).reshape(-1, 2),
        IdentityLatent(**meta["identity"]),
        AttributeLatent(**meta["attribute"]),
    )


def write_dataset(directory, n: int, seed: int, size: int = 64, png: bool = False) -> Path:
    """Render ``n`` swap pairs into ``directory``: a manifest plus one folder per pair."""
    root = Path(directory)
    root.mkdir(parents=True, exist_ok=True)
    for i, pair in enumerate(make_pairs(n, seed, size)):
        d = root / f"pair_{i:05d}"
        d.mkdir(exist_ok=True)
        for role in _ROLES:
            _write_sample(d, role, getattr(pair, role), png)
    manifest = {"count": n, "seed": seed, "image_size": size, "format_version": FORMAT_VERSION}
    tmp = root / "manifest.json.tmp"
    tmp.write_text(json.dumps(manifest, indent=1, sort_keys=True))
    os.replace(tmp, root / "manifest.json")
    return root


def read_manifest(directory) -> dict:
    path = Path(directory) / "manifest.json"
    manifest = json.loads(path.read_text())
    if manifest.get("format_version") != FORMAT_VERSION:
        raise ValueError(f"unsupported dataset format {manifest.get('format_version')!r}")
    return manifest


def read_dataset(directory) -> list[SwapPair]:
    root = Path(directory)
    manifest = read_manifest(root)
    pairs = []
    for i in range(manifest["count"]):
        d = root / f"pair_{i:05d}"
        pairs.append(SwapPair(*(_read_sample(d, role) for role in _ROLES)))
    return pairs


def to_uint8(image: np.ndarray) -> np.ndarray:
    return np.round((np.clip(image, -1, 1) + 1.0) * 127.5).astype(np.uint8).transpose(1, 2, 0)


def save_png(path, image: np.ndarray) -> None:
    """Lossy 8-bit view of a 3×S×S image in [-1, 1]."""
    from PIL import Image

    Image.fromarray(to_uint8(image)).save(path)
