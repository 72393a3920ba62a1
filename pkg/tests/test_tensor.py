import io
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from facetx import tensor as T
from facetx.tensor import DimensionError, DomainError, Tensor
from op_cases import OP_CASES, rand


def naive_conv(x, w, stride, pad):
    cin, h, wd = x.shape
    cout, _, k, _ = w.shape
    xp = np.zeros((cin, h + 2 * pad, wd + 2 * pad))
    xp[:, pad:pad + h, pad:pad + wd] = x
    ho = (h + 2 * pad - k) // stride + 1
    wo = (wd + 2 * pad - k) // stride + 1
    out = np.zeros((cout, ho, wo))
    for o in range(cout):
        for i in range(ho):
            for j in range(wo):
                acc = 0.0
                for c in range(cin):
                    for a in range(k):
                        for b in range(k):
                            acc += w[o, c, a, b] * xp[c, i * stride + a, j * stride + b]
                out[o, i, j] = acc
    return out


def naive_bilinear(x, f):
    c, h, w = x.shape
    out = np.zeros((c, f * h, f * w))
    for i in range(f * h):
        for j in range(f * w):
            sy = i * (h - 1) / (f * h - 1) if h > 1 else 0.0
            sx = j * (w - 1) / (f * w - 1) if w > 1 else 0.0
            y0, x0 = min(int(math.floor(sy)), max(h - 2, 0)), min(int(math.floor(sx)), max(w - 2, 0))
            y1, x1 = min(y0 + 1, h - 1), min(x0 + 1, w - 1)
            ty, tx = sy - y0, sx - x0
            out[:, i, j] = ((1 - ty) * (1 - tx) * x[:, y0, x0] + (1 - ty) * tx * x[:, y0, x1]
                            + ty * (1 - tx) * x[:, y1, x0] + ty * tx * x[:, y1, x1])
    return out


# ---------------------------------------------------------------- matmul / softmax

def test_matmul_identity_and_manual():
    a = Tensor([[1.0, 2.0], [3.0, 4.0]])
    np.testing.assert_array_equal(T.matmul(Tensor(np.eye(2)), a).data, a.data)
    np.testing.assert_array_equal(T.matmul(a, Tensor([[5.0], [6.0]])).data, [[17.0], [39.0]])


def test_matmul_shape_error():
    with pytest.raises(DimensionError):
        T.matmul(Tensor(np.ones((2, 3))), Tensor(np.ones((2, 3))))


def test_matmul_grad_is_ones_times_bt():
    rng = np.random.default_rng(0)
    a, b = rand(rng, 3, 4), rand(rng, 4, 2)
    T.backward(T.sum(T.matmul(a, b)))
    np.testing.assert_allclose(a.grad, np.ones((3, 2)) @ b.data.T, rtol=1e-12)
    rep = T.finite_diff_check(lambda: T.sum(T.matmul(a, b)), {"a": a, "b": b})
    assert rep.passed


def test_softmax_examples():
    out = T.softmax_rows(Tensor([[0.0, 0.0], [1000.0, 1000.0]])).data
    np.testing.assert_array_equal(out, [[0.5, 0.5], [0.5, 0.5]])
    row = T.softmax_rows(Tensor([[1.0, 2.0, 3.0]])).data[0]
    e = [math.exp(1), math.exp(2), math.exp(3)]
    direct = [v / sum(e) for v in e]
    np.testing.assert_allclose(row, direct, rtol=0, atol=1e-12)
    np.testing.assert_allclose(row, [0.0900, 0.2447, 0.6652], atol=5e-5)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(1e-3, 1e3))
def test_softmax_rows_stochastic(seed, scale):
    m = np.random.default_rng(seed).standard_normal((5, 7)) * scale
    s = T.softmax_rows(Tensor(m)).data
    assert np.all(s >= 0) and np.all(s <= 1)
    np.testing.assert_allclose(s.sum(axis=1), 1.0, atol=1e-12)


# ---------------------------------------------------------------- conv2d

def test_conv_identity_and_counting():
    rng = np.random.default_rng(1)
    x = rng.standard_normal((1, 5, 5))
    np.testing.assert_array_equal(T.conv2d(Tensor(x), Tensor(np.ones((1, 1, 1, 1)))).data, x)
    out = T.conv2d(Tensor(np.ones((1, 3, 3))), Tensor(np.ones((1, 1, 3, 3)))).data
    np.testing.assert_array_equal(out, [[[9.0]]])


@pytest.mark.parametrize("stride,pad,k,size", [(1, 0, 3, 4), (1, 1, 3, 4), (2, 1, 4, 6), (2, 0, 2, 4)])
def test_conv_matches_naive_loops(stride, pad, k, size):
    rng = np.random.default_rng(2)
    x = rng.standard_normal((2, size, size))
    w = rng.standard_normal((3, 2, k, k))
    np.testing.assert_allclose(T.conv2d(Tensor(x), Tensor(w), stride, pad).data,
                               naive_conv(x, w, stride, pad), rtol=0, atol=1e-12)


def test_conv_non_integral_extent():
    with pytest.raises(DimensionError):
        T.conv2d(Tensor(np.ones((1, 4, 4))), Tensor(np.ones((1, 1, 3, 3))), stride=2, pad=0)


# ---------------------------------------------------------------- unfold / fold

def test_unfold_unit_patches_raster_order():
    rng = np.random.default_rng(3)
    x = rng.standard_normal((3, 2, 4))
    u = T.unfold(Tensor(x), 1).data
    assert u.shape == (8, 3)
    for p in range(8):
        np.testing.assert_array_equal(u[p], x[:, p // 4, p % 4])


def test_unfold_layout():
    u = T.unfold(Tensor([[[1.0, 2.0], [3.0, 4.0]]]), 2).data
    np.testing.assert_array_equal(u, [[1.0, 2.0, 3.0, 4.0]])
    # two channels: channel-major inside the patch
    x = np.arange(8.0).reshape(2, 2, 2)
    np.testing.assert_array_equal(T.unfold(Tensor(x), 2).data, [np.arange(8.0)])


@pytest.mark.parametrize("k", [1, 2, 4])
def test_fold_unfold_round_trip(k):
    rng = np.random.default_rng(k)
    x = rng.standard_normal((4, 8, 8))
    assert np.array_equal(T.fold(T.unfold(Tensor(x), k), k, k, 8, 8).data, x)
    p = rng.standard_normal(((8 // k) ** 2, 4 * k * k))
    assert np.array_equal(T.unfold(T.fold(Tensor(p), k, k, 8, 8), k).data, p)
    assert not T.fold(Tensor(np.zeros_like(p)), k, k, 8, 8).data.any()


def test_unfold_fold_errors():
    with pytest.raises(DimensionError):
        T.unfold(Tensor(np.ones((1, 6, 6))), 4)
    with pytest.raises(DimensionError):
        T.fold(Tensor(np.ones((3, 4))), 2, 2, 4, 4)
    with pytest.raises(DimensionError):
        T.unfold(Tensor(np.ones((1, 4, 4))), 2, stride=1)


# ---------------------------------------------------------------- upsample

def test_upsample_constant_and_convexity():
    out = T.upsample(Tensor(np.full((2, 3, 3), 0.7)), 2).data
    np.testing.assert_allclose(out, 0.7, atol=1e-15)
    a, b = -1.3, 2.1
    row = T.upsample(Tensor([[[a, b]]]), 2).data[0, 0]
    assert row[0] == a and row[-1] == b
    assert np.all((row[1:-1] > a) & (row[1:-1] < b))


@pytest.mark.parametrize("f", [2, 4])
def test_upsample_matches_naive(f):
    rng = np.random.default_rng(f)
    x = rng.standard_normal((2, 3, 5))
    np.testing.assert_allclose(T.upsample(Tensor(x), f).data, naive_bilinear(x, f), rtol=0, atol=1e-12)


# ---------------------------------------------------------------- elementwise suite

def test_elementwise_examples():
    np.testing.assert_array_equal(T.relu(Tensor([-1.0, 2.0])).data, [0.0, 2.0])
    x = Tensor(np.random.default_rng(0).standard_normal(6))
    assert T.l1_norm(T.sub(x, x)).item() == 0.0
    with pytest.raises(DomainError):
        T.log(Tensor([1.0, 0.0]))
    with pytest.raises(DomainError):
        T.log(Tensor([-2.0]))


@pytest.mark.parametrize("op", sorted(OP_CASES))
@pytest.mark.parametrize("seed", range(20))
def test_op_gradients_match_central_differences(op, seed):
    fn, params = OP_CASES[op](np.random.default_rng(seed))
    rep = T.finite_diff_check(lambda: fn(*params), params, step=1e-5, tol=1e-4)
    assert rep.passed, str(rep)


# ---------------------------------------------------------------- backward

def test_backward_basic_rules():
    rng = np.random.default_rng(4)
    x = rand(rng, 3, 2)
    T.backward(T.sum(x))
    np.testing.assert_array_equal(x.grad, np.ones((3, 2)))
    x.zero_grad()
    T.backward(T.sum(T.mul(x, x)))
    np.testing.assert_allclose(x.grad, 2 * x.data, rtol=1e-15)


def test_backward_requires_scalar():
    with pytest.raises(ValueError):
        T.backward(T.mul(rand(np.random.default_rng(0), 2), 2.0))


def test_backward_accumulates_until_zeroed():
    x = Tensor([1.0, 2.0], requires_grad=True)
    T.backward(T.sum(x))
    T.backward(T.sum(x))
    np.testing.assert_array_equal(x.grad, [2.0, 2.0])
    x.zero_grad()
    assert x.grad is None


def test_unreached_leaf_gets_zero_grad():
    x = Tensor([1.0, 2.0], requires_grad=True)
    y = Tensor([3.0], requires_grad=True)
    T.backward(T.sum(x), inputs=[x, y])
    np.testing.assert_array_equal(y.grad, [0.0])


@pytest.mark.parametrize("seed", range(20))
def test_fan_out_sums_branches(seed):
    rng = np.random.default_rng(seed)
    x = rand(rng, 3, 3)

    def f():
        return T.add(T.sum(T.tanh(x)), T.sum(T.mul(T.exp(x), x)))

    rep = T.finite_diff_check(f, [x])
    assert rep.passed
    x.zero_grad()
    T.backward(T.sum(T.tanh(x)))
    g1 = x.grad.copy()
    x.zero_grad()
    T.backward(T.sum(T.mul(T.exp(x), x)))
    g2 = x.grad.copy()
    x.zero_grad()
    T.backward(f())
    np.testing.assert_allclose(x.grad, g1 + g2, rtol=1e-12)


def test_topological_order_and_single_visit():
    x = Tensor([1.0], requires_grad=True)
    a = T.mul(x, 2.0)
    b = T.add(a, a)
    c = T.mul(b, a)
    order = T.topological_order(c)
    pos = {id(n): i for i, n in enumerate(order)}
    assert len(order) == len(pos)
    for node in order:
        for p in node._parents:
            if p.requires_grad:
                assert pos[id(p)] < pos[id(node)]


def test_non_finite_is_an_error():
    with pytest.raises(T.NonFiniteError):
        T.exp(Tensor([1000.0]))
    with pytest.raises(T.NonFiniteError):
        Tensor([np.nan])


def test_no_grad_records_nothing():
    x = Tensor([1.0], requires_grad=True)
    with T.no_grad():
        y = T.mul(x, 3.0)
    assert not y.requires_grad and y.is_leaf


# ---------------------------------------------------------------- finite_diff_check

def test_fd_check_square():
    x = Tensor([3.0], requires_grad=True)
    rep = T.finite_diff_check(lambda: T.sum(T.mul(x, x)), {"x": x})
    assert rep.passed and rep.params[0].max_rel_err < 1e-8
    x.zero_grad()
    T.backward(T.sum(T.mul(x, x)))
    assert x.grad[0] == 6.0


def test_fd_check_matmul_softmax_composite():
    rng = np.random.default_rng(7)
    a, b, c = rand(rng, 4, 3), rand(rng, 3, 5), rand(rng, 4, 5)
    rep = T.finite_diff_check(lambda: T.sum(T.mul(T.softmax_rows(T.matmul(a, b)), c)), [a, b, c])
    assert rep.passed


@pytest.mark.parametrize("op", ["softmax_rows", "matmul", "conv2d", "relu"])
def test_fd_check_catches_corrupted_rule(op):
    rng = np.random.default_rng(8)
    x, w = rand(rng, 2, 5, 5), rand(rng, 3, 2, 3, 3)
    m = Tensor(0.1 * rng.standard_normal((3, 25)), requires_grad=True)

    def f():
        y = T.relu(T.conv2d(x, w, 1, 1))
        s = T.softmax_rows(T.matmul(T.reshape(y, (3, 25)), T.transpose(m)))
        return T.sum(T.mul(s, s))

    with T.corrupt_backward(op, 1.5):
        rep = T.finite_diff_check(f, {"x": x, "w": w, "m": m})
    assert rep.max_rel_err > 1e-2
    assert T.finite_diff_check(f, {"x": x, "w": w, "m": m}).passed


# ---------------------------------------------------------------- serialization

def test_serialization_layout_and_round_trip(tmp_path):
    x = np.arange(6.0).reshape(2, 3)
    buf = T.tensor_to_bytes(x)
    assert buf[:8] == (2).to_bytes(8, "little")
    assert buf[8:24] == (2).to_bytes(8, "little") + (3).to_bytes(8, "little")
    assert np.frombuffer(buf[24:], "<f8").tolist() == list(range(6))
    rng = np.random.default_rng(0)
    for shape in [(), (5,), (2, 3, 4)]:
        a = rng.standard_normal(shape)
        T.save_tensor(tmp_path / "a.bin", a)
        b = T.load_tensor(tmp_path / "a.bin")
        assert b.shape == a.shape and b.tobytes() == a.tobytes()


def test_serialization_corrupt_header():
    with pytest.raises(T.SerializationError):
        T.tensor_from_bytes(b"\x02\x00")
    with pytest.raises(T.SerializationError):
        T.tensor_from_bytes(T.tensor_to_bytes(np.ones(3))[:-4])
    with pytest.raises(T.SerializationError):
        T.read_tensor(io.BytesIO((99).to_bytes(8, "little")))
