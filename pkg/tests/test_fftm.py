import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from facetx import tensor as T
from facetx.extractors import FeaturePyramid
from facetx.fftm import AttentionParams, correspondence, refine, refine_pair, transform_multiscale
from facetx.geometry import Geometry
from facetx.tensor import DimensionError, Tensor


def small_params(d=8, h=2, seed=0):
    return AttentionParams.init(Geometry(image_size=8, channels=8, feat_dim=d, heads=h),
                                np.random.default_rng(seed))


def scripted_refine(f, x, wq, wk, wv, w0):
    """Single-head refine with plain Python loops."""
    n = len(f)
    dh = len(wq[0])

    def mm(a, b):
        return [[sum(a[i][k] * b[k][j] for k in range(len(b))) for j in range(len(b[0]))]
                for i in range(len(a))]

    q, k, v = mm(f, wq), mm(x, wk), mm(x, wv)
    out_head = []
    for i in range(n):
        logits = []
        for j in range(n):
            dot = sum(q[i][c] * k[j][c] for c in range(dh))
            nq = math.sqrt(sum(t * t for t in q[i]))
            nk = math.sqrt(sum(t * t for t in k[j]))
            logits.append(dot / (nq * nk))
        m = max(logits)
        e = [math.exp(z - m) for z in logits]
        a = [t / sum(e) for t in e]
        out_head.append([sum(a[j] * v[j][c] for j in range(n)) for c in range(dh)])
    return mm(out_head, w0)


def test_refine_matches_scripted_oracle():
    f = [[1.0, -0.5], [0.3, 2.0]]
    x = [[0.7, 0.1], [-1.2, 0.4]]
    wq = [[0.5, -0.2], [0.1, 0.9]]
    wk = [[-0.3, 0.8], [0.6, 0.2]]
    wv = [[1.1, 0.0], [-0.4, 0.7]]
    w0 = [[0.9, 0.3], [-0.2, 1.4]]
    params = AttentionParams([Tensor(wq)], [Tensor(wk)], [Tensor(wv)], Tensor(w0))
    out = refine(Tensor(f), Tensor(x), params).data
    np.testing.assert_allclose(out, scripted_refine(f, x, wq, wk, wv, w0), rtol=0, atol=1e-12)


def test_refine_attention_rows_stochastic_and_scale_free():
    rng = np.random.default_rng(1)
    params = small_params()
    f, x = rng.standard_normal((16, 8)), rng.standard_normal((16, 8))
    _, attn = refine(Tensor(f), Tensor(x), params, return_attention=True)
    _, attn3 = refine(Tensor(f), Tensor(3 * x), params, return_attention=True)
    for a, a3 in zip(attn, attn3):
        np.testing.assert_allclose(a.data.sum(axis=1), 1.0, atol=1e-12)
        np.testing.assert_allclose(a.data, a3.data, atol=1e-12)


def test_refine_dimension_errors():
    params = small_params()
    with pytest.raises(DimensionError):
        refine(Tensor(np.ones((4, 8))), Tensor(np.ones((4, 6))), params)
    with pytest.raises(DimensionError):
        refine(Tensor(np.ones((4, 6))), Tensor(np.ones((4, 6))), params)


def test_refine_pair_is_cross_attention_both_ways():
    rng = np.random.default_rng(2)
    params = small_params()
    q, k = Tensor(rng.standard_normal((4, 8))), Tensor(rng.standard_normal((4, 8)))
    q_m, k_m = refine_pair(q, k, params)
    np.testing.assert_array_equal(q_m.data, refine(q, k, params).data)
    np.testing.assert_array_equal(k_m.data, refine(k, q, params).data)


def test_correspondence_self_and_permutation_argmax():
    rng = np.random.default_rng(3)
    k_m = rng.standard_normal((32, 16))
    k_m /= np.linalg.norm(k_m, axis=1, keepdims=True)
    c = correspondence(Tensor(k_m), Tensor(k_m)).data
    assert np.array_equal(c.argmax(axis=1), np.arange(32))
    perm = rng.permutation(32)
    c = correspondence(Tensor(k_m[perm]), Tensor(k_m)).data
    assert np.array_equal(c.argmax(axis=1), perm)


def test_correspondence_two_orthogonal_rows():
    k_m = np.array([[1.0, 0.0], [0.0, 2.0]])
    q_m = np.array([[1.0, 0.0], [1.0, 0.0]])
    c = correspondence(Tensor(q_m), Tensor(k_m)).data
    oracle = [math.exp(1) / (math.exp(1) + 1), 1 / (math.exp(1) + 1)]
    np.testing.assert_allclose(c[0], oracle, atol=1e-12)
    np.testing.assert_allclose(c[0], [0.7311, 0.2689], atol=5e-5)


def test_correspondence_zero_row_is_stabilised():
    q_m = np.zeros((3, 4))
    k_m = np.random.default_rng(4).standard_normal((3, 4))
    c = correspondence(Tensor(q_m), Tensor(k_m)).data
    np.testing.assert_allclose(c, 1.0 / 3.0, atol=1e-15)


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**32 - 1), st.sampled_from([1e-3, 1.0, 1e3]),
       st.sampled_from([0.1, 1.0, 10.0]), st.sampled_from([0.1, 1.0, 10.0]))
def test_correspondence_invariants(seed, magnitude, alpha, beta):
    rng = np.random.default_rng(seed)
    q_m = rng.standard_normal((16, 8)) * magnitude
    k_m = rng.standard_normal((16, 8)) * magnitude
    c = correspondence(Tensor(q_m), Tensor(k_m)).data
    assert np.all(c >= 0)
    np.testing.assert_allclose(c.sum(axis=1), 1.0, atol=1e-9)
    scaled = correspondence(Tensor(alpha * q_m), Tensor(beta * k_m)).data
    np.testing.assert_allclose(scaled, c, atol=1e-9)


def random_pyramid(rng, h=4, c=8):
    return FeaturePyramid(Tensor(rng.standard_normal((c, h, h))),
                          Tensor(rng.standard_normal((c // 2, 2 * h, 2 * h))),
                          Tensor(rng.standard_normal((c // 4, 4 * h, 4 * h))))


def patch(v, idx, k, blocks_w):
    r, c = divmod(idx, blocks_w)
    return v[:, r * k:(r + 1) * k, c * k:(c + 1) * k]


def test_transform_identity_is_exact():
    pyr = random_pyramid(np.random.default_rng(5))
    out = transform_multiscale(Tensor(np.eye(16)), pyr)
    for t, v in zip(out, pyr.levels()):
        assert t.shape == v.shape and np.array_equal(t.data, v.data)


def test_transform_permutation_moves_patches():
    rng = np.random.default_rng(6)
    pyr = random_pyramid(rng)
    perm = rng.permutation(16)
    c = np.zeros((16, 16))
    c[np.arange(16), perm] = 1.0
    out = transform_multiscale(Tensor(c), pyr)
    for t, v, k in zip(out, pyr.levels(), (1, 2, 4)):
        for i in range(16):
            assert np.array_equal(patch(t.data, i, k, 4), patch(v.data, perm[i], k, 4))


def test_transform_uniform_rows_average_patches():
    pyr = random_pyramid(np.random.default_rng(7))
    out = transform_multiscale(Tensor(np.full((16, 16), 1.0 / 16)), pyr)
    for t, v, k in zip(out, pyr.levels(), (1, 2, 4)):
        mean_patch = np.mean([patch(v.data, i, k, 4) for i in range(16)], axis=0)
        for i in range(16):
            np.testing.assert_allclose(patch(t.data, i, k, 4), mean_patch, atol=1e-12)


def test_transform_rejects_wrong_size():
    pyr = random_pyramid(np.random.default_rng(8))
    with pytest.raises(DimensionError):
        transform_multiscale(Tensor(np.eye(9)), pyr)
    with pytest.raises(DimensionError):
        FeaturePyramid(pyr.v1, pyr.v1, pyr.v3)


def test_attention_gradients_through_transform():
    rng = np.random.default_rng(9)
    params = small_params(d=8, h=2, seed=9)
    q, k = Tensor(rng.standard_normal((4, 8))), Tensor(rng.standard_normal((4, 8)))
    pyr = random_pyramid(rng, h=2, c=8)
    w = [rng.standard_normal(v.shape) for v in pyr.levels()]

    def f():
        q_m, k_m = refine_pair(q, k, params)
        out = transform_multiscale(correspondence(q_m, k_m), pyr)
        return T.add(T.add(T.sum(T.mul(out[0], w[0])), T.sum(T.mul(out[1], w[1]))),
                     T.sum(T.mul(out[2], w[2])))

    assert T.finite_diff_check(f, params.named()).passed
