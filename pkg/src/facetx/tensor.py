"""Dense float64 tensors with reverse-mode differentiation.

Only the operations the face-swapping model needs are provided: linear algebra,
row softmax, 2-D convolution, non-overlapping unfold/fold, bilinear upsampling
and a small elementwise/reduction suite. Every forward result is checked for
finiteness; a NaN or Inf raises :class:`NonFiniteError` at the op that made it.
"""

from __future__ import annotations

import builtins
import contextlib
import io
import struct
from dataclasses import dataclass, field
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np
from numpy.lib.stride_tricks import as_strided

__all__ = [
    "Tensor", "DimensionError", "DomainError", "NonFiniteError", "SerializationError",
    "tensor", "zeros", "no_grad", "corrupt_backward", "backward", "topological_order",
    "add", "sub", "mul", "div", "neg", "scale", "matmul", "transpose", "reshape",
    "sum", "mean", "abs", "relu", "tanh", "exp", "log", "sqrt", "softplus",
    "softmax_rows", "max", "min", "take_rows", "concat", "concat_channels",
    "l1_norm", "l2_norm_rows", "conv2d", "unfold", "fold", "upsample",
    "interp_matrix", "detach", "clamp_min", "relative_error",
    "tensor_to_bytes", "tensor_from_bytes", "write_tensor", "read_tensor",
    "save_tensor", "load_tensor", "finite_diff_check", "GradCheckReport", "ParamCheck",
]


class DimensionError(ValueError):
    """Operand shapes are incompatible with the requested op."""


class DomainError(ValueError):
    """An op was evaluated outside its mathematical domain."""


class NonFiniteError(FloatingPointError):
    """A forward op produced NaN or Inf."""


class SerializationError(ValueError):
    """A serialized tensor could not be decoded."""


_GRAD_ENABLED = True
# op name -> multiplier applied to every input gradient; only touched by corrupt_backward
_MUTATIONS: dict[str, float] = {}


@contextlib.contextmanager
def no_grad():
    """Disable graph recording inside the block."""
    global _GRAD_ENABLED
    prev = _GRAD_ENABLED
    _GRAD_ENABLED = False
    try:
        yield
    finally:
        _GRAD_ENABLED = prev


@contextlib.contextmanager
def corrupt_backward(op: str, factor: float = 1.5):
    """Scale the backward rule of ``op`` by ``factor``. Mutation-testing hook."""
    _MUTATIONS[op] = factor
    try:
        yield
    finally:
        _MUTATIONS.pop(op, None)


class Tensor:
    """N-dimensional float64 array that can record the ops applied to it.

    Leaves created with ``requires_grad=True`` receive summed gradients in
    ``.grad`` after :func:`backward`. Intermediate results keep a reference to
    their parents and a closure mapping the output gradient to input gradients.
    """

    __slots__ = ("data", "requires_grad", "grad", "_parents", "_backward", "op", "__weakref__")
    __array_priority__ = 100

    def __init__(self, data, requires_grad: bool = False):
        arr = np.array(data, dtype=np.float64, copy=True)
        if not np.isfinite(arr).all():
            raise NonFiniteError("tensor initialised with non-finite values")
        self.data = arr
        self.requires_grad = bool(requires_grad)
        self.grad: np.ndarray | None = None
        self._parents: tuple[Tensor, ...] = ()
        self._backward = None
        self.op = "leaf"

    @classmethod
    def _result(cls, data: np.ndarray, parents: Sequence["Tensor"], grad_fn, op: str) -> "Tensor":
        if not np.isfinite(data).all():
            raise NonFiniteError(f"{op} produced non-finite values")
        out = cls.__new__(cls)
        out.data = data
        out.grad = None
        out.op = op
        if _GRAD_ENABLED and any(p.requires_grad for p in parents):
            out.requires_grad = True
            out._parents = tuple(parents)
            out._backward = grad_fn
        else:
            out.requires_grad = False
            out._parents = ()
            out._backward = None
        return out

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def is_leaf(self) -> bool:
        return not self._parents

    def item(self) -> float:
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else float(self.data.item())

    def numpy(self) -> np.ndarray:
        return self.data

    def zero_grad(self) -> None:
        self.grad = None

    def backward(self) -> None:
        backward(self)

    def __repr__(self) -> str:
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}{flag}, op={self.op})"

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(other, self)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    @property
    def T(self) -> "Tensor":
        return transpose(self)

    def reshape(self, *shape) -> "Tensor":
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def sum(self, axis=None, keepdims=False) -> "Tensor":
        return sum(self, axis, keepdims)

    def mean(self, axis=None, keepdims=False) -> "Tensor":
        return mean(self, axis, keepdims)


def tensor(data, requires_grad: bool = False) -> Tensor:
    return Tensor(data, requires_grad)


def zeros(shape, requires_grad: bool = False) -> Tensor:
    return Tensor(np.zeros(shape), requires_grad)


def _as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


def topological_order(root: Tensor) -> list[Tensor]:
    """Nodes reachable from ``root`` with every input before its consumers."""
    order: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if p.requires_grad and id(p) not in seen:
                stack.append((p, False))
    return order


def backward(loss: Tensor, inputs: Iterable[Tensor] | None = None) -> None:
    """Accumulate d(loss)/d(leaf) into ``.grad`` of every reachable leaf.

    Leaves listed in ``inputs`` that the loss does not depend on get a zero
    gradient instead of staying ``None``.
    """
    if loss.data.size != 1:
        raise ValueError(f"backward needs a scalar loss, got shape {loss.shape}")
    if inputs is not None:
        for leaf in inputs:
            if leaf.grad is None:
                leaf.grad = np.zeros_like(leaf.data)
    if not loss.requires_grad:
        return
    grads: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
    for node in reversed(topological_order(loss)):
        g = grads.pop(id(node), None)
        if g is None:
            continue
        if node._backward is None:
            if node.grad is None:
                node.grad = g.copy()
            else:
                node.grad = node.grad + g
            continue
        in_grads = node._backward(g)
        factor = _MUTATIONS.get(node.op)
        for parent, pg in zip(node._parents, in_grads):
            if pg is None or not parent.requires_grad:
                continue
            if factor is not None:
                pg = pg * factor
            prev = grads.get(id(parent))
            grads[id(parent)] = pg if prev is None else prev + pg


# ---------------------------------------------------------------- elementwise

def add(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    return Tensor._result(
        a.data + b.data, (a, b),
        lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)), "add")


def sub(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    return Tensor._result(
        a.data - b.data, (a, b),
        lambda g: (_unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)), "sub")


def mul(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    return Tensor._result(
        a.data * b.data, (a, b),
        lambda g: (_unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)), "mul")


def div(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    if np.any(b.data == 0):
        raise DomainError("division by zero")
    out = a.data / b.data

    def grad_fn(g):
        return (_unbroadcast(g / b.data, a.shape), _unbroadcast(-g * out / b.data, b.shape))

    return Tensor._result(out, (a, b), grad_fn, "div")


def neg(a) -> Tensor:
    a = _as_tensor(a)
    return Tensor._result(-a.data, (a,), lambda g: (-g,), "neg")


def scale(a, c: float) -> Tensor:
    a = _as_tensor(a)
    c = float(c)
    return Tensor._result(a.data * c, (a,), lambda g: (g * c,), "scale")


def abs(a) -> Tensor:  # noqa: A001
    a = _as_tensor(a)
    sign = np.sign(a.data)
    return Tensor._result(np.abs(a.data), (a,), lambda g: (g * sign,), "abs")


def relu(a) -> Tensor:
    a = _as_tensor(a)
    mask = a.data > 0
    return Tensor._result(np.where(mask, a.data, 0.0), (a,), lambda g: (g * mask,), "relu")


def tanh(a) -> Tensor:
    a = _as_tensor(a)
    out = np.tanh(a.data)
    return Tensor._result(out, (a,), lambda g: (g * (1.0 - out * out),), "tanh")


def exp(a) -> Tensor:
    a = _as_tensor(a)
    with np.errstate(over="ignore"):
        out = np.exp(a.data)
    return Tensor._result(out, (a,), lambda g: (g * out,), "exp")


def log(a) -> Tensor:
    a = _as_tensor(a)
    if np.any(a.data <= 0):
        raise DomainError("log of non-positive value")
    return Tensor._result(np.log(a.data), (a,), lambda g: (g / a.data,), "log")


def sqrt(a) -> Tensor:
    a = _as_tensor(a)
    if np.any(a.data < 0):
        raise DomainError("sqrt of negative value")
    out = np.sqrt(a.data)

    def grad_fn(g):
        with np.errstate(divide="ignore", invalid="ignore"):
            return (np.where(out > 0, g / (2.0 * out), 0.0),)

    return Tensor._result(out, (a,), grad_fn, "sqrt")


def softplus(a) -> Tensor:
    """log(1 + exp(x)) without overflow."""
    a = _as_tensor(a)
    x = a.data
    out = np.maximum(x, 0.0) + np.log1p(np.exp(-np.abs(x)))
    sig = 0.5 * (1.0 + np.tanh(0.5 * x))
    return Tensor._result(out, (a,), lambda g: (g * sig,), "softplus")


def clamp_min(a, lo: float) -> Tensor:
    a = _as_tensor(a)
    keep = a.data > lo
    return Tensor._result(np.where(keep, a.data, lo), (a,), lambda g: (g * keep,), "clamp_min")


def detach(a) -> Tensor:
    a = _as_tensor(a)
    return Tensor(a.data)


# ---------------------------------------------------------------- shape / linear algebra

def matmul(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise DimensionError(f"matmul of {a.shape} and {b.shape}")
    return Tensor._result(
        a.data @ b.data, (a, b), lambda g: (g @ b.data.T, a.data.T @ g), "matmul")


def transpose(a) -> Tensor:
    a = _as_tensor(a)
    if a.ndim != 2:
        raise DimensionError("transpose expects a matrix")
    return Tensor._result(a.data.T.copy(), (a,), lambda g: (g.T,), "transpose")


def reshape(a, shape) -> Tensor:
    a = _as_tensor(a)
    shape = tuple(int(s) for s in shape)
    try:
        out = a.data.reshape(shape)
    except ValueError as exc:
        raise DimensionError(str(exc)) from None
    src = a.shape
    return Tensor._result(out, (a,), lambda g: (g.reshape(src),), "reshape")


def sum(a, axis=None, keepdims: bool = False) -> Tensor:  # noqa: A001
    a = _as_tensor(a)
    out = np.sum(a.data, axis=axis, keepdims=keepdims)

    def grad_fn(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, a.shape).copy(),)

    return Tensor._result(np.asarray(out, dtype=np.float64), (a,), grad_fn, "sum")


def mean(a, axis=None, keepdims: bool = False) -> Tensor:
    a = _as_tensor(a)
    count = a.size if axis is None else np.prod([a.shape[i] for i in np.atleast_1d(axis)])
    out = np.mean(a.data, axis=axis, keepdims=keepdims)

    def grad_fn(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g / count, a.shape).copy(),)

    return Tensor._result(np.asarray(out, dtype=np.float64), (a,), grad_fn, "mean")


def _extreme(a, axis: int, keepdims: bool, pick, name: str) -> Tensor:
    a = _as_tensor(a)
    idx = pick(a.data, axis=axis)
    idx_k = np.expand_dims(idx, axis)
    out = np.take_along_axis(a.data, idx_k, axis=axis)
    if not keepdims:
        out = np.squeeze(out, axis=axis)

    def grad_fn(g):
        if not keepdims:
            g = np.expand_dims(g, axis)
        full = np.zeros_like(a.data)
        np.put_along_axis(full, idx_k, g, axis=axis)
        return (full,)

    return Tensor._result(out, (a,), grad_fn, name)


def max(a, axis: int, keepdims: bool = False) -> Tensor:  # noqa: A001
    """Maximum along ``axis``; the gradient goes to the first argmax."""
    return _extreme(a, axis, keepdims, np.argmax, "max")


def min(a, axis: int, keepdims: bool = False) -> Tensor:  # noqa: A001
    """Minimum along ``axis``; the gradient goes to the first argmin."""
    return _extreme(a, axis, keepdims, np.argmin, "min")


def take_rows(a, index) -> Tensor:
    """Select rows of a matrix by integer index."""
    a = _as_tensor(a)
    index = np.asarray(index, dtype=np.intp)

    def grad_fn(g):
        full = np.zeros_like(a.data)
        np.add.at(full, index, g)
        return (full,)

    return Tensor._result(a.data[index], (a,), grad_fn, "take_rows")


def concat(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    tensors = [_as_tensor(t) for t in tensors]
    try:
        out = np.concatenate([t.data for t in tensors], axis=axis)
    except ValueError as exc:
        raise DimensionError(str(exc)) from None
    bounds = np.cumsum([0] + [t.shape[axis] for t in tensors])

    def grad_fn(g):
        return tuple(np.take(g, np.arange(bounds[i], bounds[i + 1]), axis=axis)
                     for i in range(len(tensors)))

    return Tensor._result(out, tensors, grad_fn, "concat")


def concat_channels(tensors: Sequence[Tensor]) -> Tensor:
    """Stack C×H×W maps along the channel axis."""
    for t in tensors:
        if t.ndim != 3 or t.shape[1:] != tensors[0].shape[1:]:
            raise DimensionError("concat_channels needs C×H×W maps with equal H, W")
    return concat(tensors, axis=0)


def l1_norm(a) -> Tensor:
    """Sum of absolute values."""
    return sum(abs(a))


def l2_norm_rows(a, eps: float = 0.0) -> Tensor:
    """Per-row Euclidean norm of a matrix as an R×1 column (plus ``eps``)."""
    a = _as_tensor(a)
    if a.ndim != 2:
        raise DimensionError("l2_norm_rows expects a matrix")
    n = np.sqrt(np.sum(a.data * a.data, axis=1, keepdims=True))

    def grad_fn(g):
        with np.errstate(divide="ignore", invalid="ignore"):
            unit = np.where(n > 0, a.data / n, 0.0)
        return (g * unit,)

    return Tensor._result(n + eps, (a,), grad_fn, "l2_norm_rows")


def softmax_rows(m) -> Tensor:
    """Row-wise softmax with per-row max subtraction."""
    m = _as_tensor(m)
    if m.ndim != 2:
        raise DimensionError("softmax_rows expects a matrix")
    z = m.data - m.data.max(axis=1, keepdims=True)
    e = np.exp(z)
    s = e / e.sum(axis=1, keepdims=True)

    def grad_fn(g):
        return (s * (g - np.sum(g * s, axis=1, keepdims=True)),)

    return Tensor._result(s, (m,), grad_fn, "softmax_rows")


# ---------------------------------------------------------------- spatial ops

def _out_extent(n: int, k: int, stride: int, pad: int) -> int:
    span = n + 2 * pad - k
    if span < 0 or span % stride:
        raise DimensionError(
            f"conv extent ({n}+2*{pad}-{k})/{stride}+1 is not a positive integer")
    return span // stride + 1


def conv2d(x, w, stride: int = 1, pad: int = 0) -> Tensor:
    """Cross-correlation of a C_in×H×W map with a C_out×C_in×k×k kernel (zero padding)."""
    x, w = _as_tensor(x), _as_tensor(w)
    if x.ndim != 3 or w.ndim != 4 or w.shape[1] != x.shape[0] or w.shape[2] != w.shape[3]:
        raise DimensionError(f"conv2d of input {x.shape} with kernel {w.shape}")
    cin, h, wd = x.shape
    cout, _, k, _ = w.shape
    ho = _out_extent(h, k, stride, pad)
    wo = _out_extent(wd, k, stride, pad)
    xp = np.pad(x.data, ((0, 0), (pad, pad), (pad, pad))) if pad else x.data
    xp = np.ascontiguousarray(xp)
    s0, s1, s2 = xp.strides
    cols = as_strided(xp, shape=(cin, k, k, ho, wo),
                      strides=(s0, s1, s2, s1 * stride, s2 * stride)).reshape(cin * k * k, ho * wo)
    w2 = w.data.reshape(cout, -1)
    out = (w2 @ cols).reshape(cout, ho, wo)

    def grad_fn(g):
        g2 = g.reshape(cout, -1)
        gw = (g2 @ cols.T).reshape(w.shape) if w.requires_grad else None
        gx = None
        if x.requires_grad:
            dcols = (w2.T @ g2).reshape(cin, k, k, ho, wo)
            dxp = np.zeros(xp.shape)
            for i in range(k):
                for j in range(k):
                    dxp[:, i:i + stride * ho:stride, j:j + stride * wo:stride] += dcols[:, i, j]
            gx = dxp[:, pad:pad + h, pad:pad + wd] if pad else dxp
        return gx, gw

    return Tensor._result(out, (x, w), grad_fn, "conv2d")


def _unfold_array(x: np.ndarray, k: int) -> np.ndarray:
    c, h, w = x.shape
    return (x.reshape(c, h // k, k, w // k, k)
            .transpose(1, 3, 0, 2, 4)
            .reshape((h // k) * (w // k), c * k * k))


def _fold_array(p: np.ndarray, k: int, h: int, w: int) -> np.ndarray:
    c = p.shape[1] // (k * k)
    return (p.reshape(h // k, w // k, c, k, k)
            .transpose(2, 0, 3, 1, 4)
            .reshape(c, h, w))


def unfold(x, k: int, stride: int | None = None) -> Tensor:
    """Non-overlapping k×k patches of a C×H×W map as an N×(C·k·k) matrix.

    Patches are in raster order; inside a row the layout is channel-major, then
    row-major within the patch (column index ``c*k*k + i*k + j``).
    """
    x = _as_tensor(x)
    stride = k if stride is None else stride
    if stride != k:
        raise DimensionError("only non-overlapping unfold (stride == k) is supported")
    if x.ndim != 3 or x.shape[1] % k or x.shape[2] % k:
        raise DimensionError(f"unfold: k={k} does not tile input of shape {x.shape}")
    _, h, w = x.shape
    return Tensor._result(_unfold_array(x.data, k), (x,),
                          lambda g: (_fold_array(g, k, h, w),), "unfold")


def fold(p, k: int, stride: int | None, h: int, w: int) -> Tensor:
    """Inverse of :func:`unfold` for non-overlapping patches."""
    p = _as_tensor(p)
    stride = k if stride is None else stride
    if stride != k:
        raise DimensionError("only non-overlapping fold (stride == k) is supported")
    if (p.ndim != 2 or h % k or w % k or p.shape[0] != (h // k) * (w // k)
            or p.shape[1] % (k * k)):
        raise DimensionError(f"fold: patch matrix {p.shape} inconsistent with {h}×{w}, k={k}")
    return Tensor._result(_fold_array(p.data, k, h, w), (p,),
                          lambda g: (_unfold_array(g, k),), "fold")


def interp_matrix(n: int, factor: int) -> np.ndarray:
    """(factor·n)×n bilinear weights, corner-aligned: output i samples i·(n−1)/(factor·n−1)."""
    m = factor * n
    a = np.zeros((m, n))
    if n == 1:
        a[:, 0] = 1.0
        return a
    pos = np.arange(m) * (n - 1) / (m - 1)
    i0 = np.minimum(np.floor(pos).astype(int), n - 2)
    t = pos - i0
    a[np.arange(m), i0] += 1.0 - t
    a[np.arange(m), i0 + 1] += t
    return a


def upsample(x, factor: int) -> Tensor:
    """Bilinear upsampling of a C×H×W map by ``factor`` (2 or 4), corner-aligned."""
    x = _as_tensor(x)
    if factor not in (2, 4):
        raise DimensionError("upsample factor must be 2 or 4")
    if x.ndim != 3:
        raise DimensionError("upsample expects C×H×W")
    ah = interp_matrix(x.shape[1], factor)
    aw = interp_matrix(x.shape[2], factor)
    out = np.matmul(np.matmul(ah, x.data), aw.T)
    return Tensor._result(out, (x,), lambda g: (np.matmul(np.matmul(ah.T, g), aw),), "upsample")


# ---------------------------------------------------------------- serialization

_U64 = struct.Struct("<Q")


def tensor_to_bytes(t) -> bytes:
    """Rank and extents as little-endian u64, then the values as little-endian f64."""
    arr = t.data if isinstance(t, Tensor) else np.asarray(t, dtype=np.float64)
    head = _U64.pack(arr.ndim) + b"".join(_U64.pack(n) for n in arr.shape)
    return head + np.ascontiguousarray(arr, dtype="<f8").tobytes()


def write_tensor(f, t) -> None:
    f.write(tensor_to_bytes(t))


def _read_exact(f, n: int) -> bytes:
    buf = f.read(n)
    if len(buf) != n:
        raise SerializationError("truncated tensor record")
    return buf


def read_tensor(f) -> np.ndarray:
    (rank,) = _U64.unpack(_read_exact(f, 8))
    if rank > 32:
        raise SerializationError(f"implausible tensor rank {rank}")
    shape = tuple(_U64.unpack(_read_exact(f, 8))[0] for _ in range(rank))
    count = int(np.prod(shape, dtype=np.int64)) if shape else 1
    if count > 1 << 34:
        raise SerializationError(f"implausible tensor shape {shape}")
    data = np.frombuffer(_read_exact(f, 8 * count), dtype="<f8").astype(np.float64)
    return data.reshape(shape)


def tensor_from_bytes(buf: bytes) -> np.ndarray:
    f = io.BytesIO(buf)
    arr = read_tensor(f)
    if f.read(1):
        raise SerializationError("trailing bytes after tensor record")
    return arr


def save_tensor(path, t) -> None:
    with open(path, "wb") as f:
        write_tensor(f, t)


def load_tensor(path) -> np.ndarray:
    with open(path, "rb") as f:
        return tensor_from_bytes(f.read())


# ---------------------------------------------------------------- gradient checking

@dataclass
class ParamCheck:
    name: str
    max_rel_err: float
    worst_index: tuple[int, ...] | None
    n_checked: int
    tol: float

    @property
    def passed(self) -> bool:
        return self.max_rel_err < self.tol


@dataclass
class GradCheckReport:
    params: list[ParamCheck] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(p.passed for p in self.params)

    @property
    def max_rel_err(self) -> float:
        return builtins.max((p.max_rel_err for p in self.params), default=0.0)

    def __str__(self) -> str:
        lines = [f"{'PASS' if p.passed else 'FAIL'}  {p.name:<32s} max_rel_err={p.max_rel_err:.3e}"
                 f" (tol {p.tol:g}, {p.n_checked} entries)" for p in self.params]
        return "\n".join(lines)


def relative_error(a, b, floor: float = 1e-8):
    a, b = np.asarray(a), np.asarray(b)
    return np.abs(a - b) / np.maximum(np.maximum(np.abs(a), np.abs(b)), floor)


def finite_diff_check(
    f: Callable[[], Tensor],
    params: Mapping[str, Tensor] | Sequence[Tensor],
    step: float = 1e-5,
    tol: float = 1e-4,
    max_entries: int | None = None,
    seed: int = 0,
) -> GradCheckReport:
    """Compare autodiff gradients of ``f()`` with central differences.

    ``f`` must rebuild the loss from the current values of ``params`` on every
    call. With ``max_entries`` set, only that many randomly chosen entries per
    parameter are perturbed.
    """
    if not isinstance(params, Mapping):
        params = {f"param{i}": p for i, p in enumerate(params)}
    for p in params.values():
        p.grad = None
    backward(f(), inputs=params.values())
    analytic = {name: p.grad.copy() for name, p in params.items()}
    rng = np.random.default_rng(seed)
    report = GradCheckReport()
    with no_grad():
        for name, p in params.items():
            flat = p.data.reshape(-1)
            idx = np.arange(flat.size)
            if max_entries is not None and flat.size > max_entries:
                idx = np.sort(rng.choice(flat.size, size=max_entries, replace=False))
            worst, worst_i = 0.0, None
            for i in idx:
                orig = flat[i]
                flat[i] = orig + step
                fp = f().item()
                flat[i] = orig - step
                fm = f().item()
                flat[i] = orig
                num = (fp - fm) / (2.0 * step)
                err = float(relative_error(analytic[name].reshape(-1)[i], num))
                if err > worst or worst_i is None:
                    worst, worst_i = err, np.unravel_index(i, p.shape)
            report.params.append(ParamCheck(name, worst, worst_i, len(idx), tol))
            p.grad = None
    return report
