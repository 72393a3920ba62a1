"""
Reverse-mode gradients on numpy arrays
======================================

Every model in the package is built from a small set of differentiable
operations. This script builds a tiny graph by hand, runs the backward pass,
and checks the result against central finite differences.
"""

import numpy as np

from facetx import tensor as T
from facetx.tensor import Tensor

rng = np.random.default_rng(0)

# a leaf tensor only collects gradients when asked to
x = Tensor(rng.standard_normal((2, 6, 6)), requires_grad=True)
w = Tensor(rng.standard_normal((3, 2, 4, 4)), requires_grad=True)

# a strided convolution, a nonlinearity and a scalar reduction
y = T.conv2d(x, w, stride=2, pad=1)
loss = T.mean(T.tanh(y))
print("output shape:", y.shape, " loss:", round(loss.item(), 6))

T.backward(loss)
print("grad norm of w:", np.linalg.norm(w.grad))

# gradients accumulate; clear them before the numeric check re-runs the graph
x.grad = w.grad = None
report = T.finite_diff_check(lambda: T.mean(T.tanh(T.conv2d(x, w, 2, 1))), {"x": x, "w": w})
print(report)

# a deliberately broken backward rule is caught by the same check
with T.corrupt_backward("conv2d"):
    broken = T.finite_diff_check(lambda: T.mean(T.tanh(T.conv2d(x, w, 2, 1))), {"w": w})
print("corrupted conv2d passes?", broken.passed)

# tensors serialise to a small little-endian format
blob = T.tensor_to_bytes(y.data)
print("serialised bytes:", len(blob), " round trip exact:",
      np.array_equal(T.tensor_from_bytes(blob), y.data))
