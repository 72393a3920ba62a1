import dataclasses
import json

import numpy as np
import pytest

from facetx.synthdata import (CLASSES, AttributeLatent, IdentityLatent, LatentError, make_pairs,
                              random_attribute, random_identity, read_dataset, read_manifest,
                              render, sample_pair, write_dataset)

HAIR, BG = CLASSES.index("hair"), CLASSES.index("background")


def assert_samples_equal(a, b):
    for name in ("image", "semantic", "mask", "landmarks"):
        x, y = getattr(a, name), getattr(b, name)
        assert x.dtype == y.dtype and x.shape == y.shape and x.tobytes() == y.tobytes(), name
    assert a.identity == b.identity and a.attribute == b.attribute


def test_render_deterministic():
    rng = np.random.default_rng(0)
    ident, attr = random_identity(rng), random_attribute(rng)
    assert_samples_equal(render(ident, attr), render(ident, attr))


@pytest.mark.parametrize("seed", range(10))
def test_sample_invariants(seed):
    for s in (sample_pair(seed).source, sample_pair(seed).target):
        assert s.image.shape == (3, 64, 64) and s.semantic.shape == (8, 64, 64)
        assert np.all(np.abs(s.image) <= 1.0)
        assert np.array_equal(s.semantic.sum(axis=0), np.ones((64, 64)))
        assert set(np.unique(s.semantic)) <= {0.0, 1.0}
        labels = s.labels
        expected = ((labels != BG) & (labels != HAIR)).astype(np.float64)
        assert np.array_equal(s.mask[0], expected)
        assert s.mask.sum() == np.count_nonzero(expected)
        for x, y in s.landmarks:
            assert s.mask[0, int(round(y)), int(round(x))] == 1.0


def test_centred_face_landmarks_symmetric():
    s = render(IdentityLatent(), AttributeLatent(angle=0.0, tx=0.0, ty=0.0))
    lm = s.landmarks
    centre = 31.5
    assert abs((lm[0, 0] + lm[1, 0]) / 2 - centre) <= 1.0 and abs(lm[0, 1] - lm[1, 1]) <= 1.0
    assert abs((lm[3, 0] + lm[4, 0]) / 2 - centre) <= 1.0 and abs(lm[3, 1] - lm[4, 1]) <= 1.0
    assert abs(lm[2, 0] - centre) <= 1.0


def test_gt_swap_crosses_latents():
    for seed in range(5):
        pair = sample_pair(seed)
        assert pair.gt_swap.identity == pair.source.identity
        assert pair.gt_swap.attribute == pair.target.attribute


def test_hundred_seeds_give_distinct_pairs():
    keys = set()
    for seed in range(100):
        p = sample_pair(seed)
        keys.add(dataclasses.astuple(p.source.identity) + dataclasses.astuple(p.source.attribute)
                 + dataclasses.astuple(p.target.identity) + dataclasses.astuple(p.target.attribute))
    assert len(keys) == 100


def test_out_of_range_latent_rejected():
    with pytest.raises(LatentError):
        render(IdentityLatent(eye_shape=2.0), AttributeLatent())
    with pytest.raises(LatentError):
        render(IdentityLatent(), AttributeLatent(angle=1.0))


def test_attribute_change_keeps_skin_colour():
    ident = random_identity(np.random.default_rng(1))
    a = render(ident, random_attribute(np.random.default_rng(2)))
    b = render(ident, random_attribute(np.random.default_rng(3)))
    skin = CLASSES.index("skin")
    colours_a = np.unique(a.image[:, a.labels == skin], axis=1)
    colours_b = np.unique(b.image[:, b.labels == skin], axis=1)
    assert colours_a.shape == (3, 1)
    assert np.array_equal(colours_a, colours_b)
    np.testing.assert_allclose(a.image[:, a.labels == skin].mean(axis=1), colours_a[:, 0], atol=1e-15)


def test_identity_colour_change_keeps_face_outline():
    attr = random_attribute(np.random.default_rng(4))
    a = render(IdentityLatent(skin_r=0.1, skin_g=0.0, skin_b=-0.3), attr)
    b = render(IdentityLatent(skin_r=0.8, skin_g=0.5, skin_b=0.4), attr)
    face_a = (a.labels != BG)
    face_b = (b.labels != BG)
    assert np.array_equal(face_a, face_b)
    assert np.array_equal(a.semantic, b.semantic)


def test_dataset_round_trip(tmp_path):
    write_dataset(tmp_path / "ds", 3, seed=5, png=True)
    manifest = read_manifest(tmp_path / "ds")
    assert manifest["count"] == 3 and manifest["seed"] == 5
    pairs = read_dataset(tmp_path / "ds")
    for got, want in zip(pairs, make_pairs(3, 5)):
        for role in ("source", "target", "gt_swap"):
            assert_samples_equal(getattr(got, role), getattr(want, role))
    assert (tmp_path / "ds" / "pair_00000" / "source.png").exists()


def test_empty_dataset(tmp_path):
    write_dataset(tmp_path, 0, seed=1)
    assert read_manifest(tmp_path)["count"] == 0
    assert read_dataset(tmp_path) == []


def test_corrupt_dataset_rejected(tmp_path):
    write_dataset(tmp_path, 1, seed=1)
    (tmp_path / "pair_00000" / "source.image.bin").write_bytes(b"\x07\x00")
    with pytest.raises(ValueError):
        read_dataset(tmp_path)
    manifest = json.loads((tmp_path / "manifest.json").read_text())
    manifest["format_version"] = 99
    (tmp_path / "manifest.json").write_text(json.dumps(manifest))
    with pytest.raises(ValueError):
        read_manifest(tmp_path)


def test_small_render_sizes():
    s = sample_pair(0, size=16).source
    assert s.image.shape == (3, 16, 16) and s.mask.shape == (1, 16, 16)
