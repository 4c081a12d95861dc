"""Dense float64 tensors with reverse-mode differentiation.

Design notes:
  * float64 everywhere; desk-scale shapes make precision cheap and keep
    finite-difference checks tight.
  * No implicit broadcasting except scalar ops and the explicit
    `add_bias` row broadcast. Shapes are checked at every op boundary
    (DimensionError).
  * Values must be finite. Construction and every op output are checked
    (NumericsError). The one sanctioned exception is `softmax_rows`,
    whose input/additive mask may contain -inf for masked entries; use
    `constant(..., allow_nonfinite=True)` to build such inputs.
  * Gradients accumulate into `.grad` only for tensors with
    requires_grad; everything else is treated as a constant and never
    materializes a grad buffer.
"""

import numpy as np

from . import _kernels
from .errors import DimensionError, GraphError, NumericsError

_GELU_C = 0.7978845608028654  # sqrt(2/pi), tanh-approximation constant
_GELU_A = 0.044715


def _check_finite(a, where):
    if not np.all(np.isfinite(a)):
        raise NumericsError(f"non-finite values in {where}")


class Tensor:
    """N-d float64 array node in the autodiff graph."""

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad=False):
        arr = np.asarray(data, dtype=np.float64)
        _check_finite(arr, "tensor construction")
        self.data = arr
        self.grad = None
        self.requires_grad = bool(requires_grad)
        self._parents = ()
        self._backward = None

    @property
    def shape(self):
        return self.data.shape

    @property
    def size(self):
        return self.data.size

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"

    def zero_grad(self):
        self.grad = None

    def backward(self):
        backward(self)

    def sum(self):
        return sum_all(self)

    def mean(self):
        return mean_all(self)

    @property
    def T(self):
        return transpose2d(self)

    def __add__(self, other):
        if isinstance(other, Tensor):
            return add(self, other)
        return shift(self, float(other))

    __radd__ = __add__

    def __sub__(self, other):
        if isinstance(other, Tensor):
            return add(self, scale(other, -1.0))
        return shift(self, -float(other))

    def __rsub__(self, other):
        return shift(scale(self, -1.0), float(other))

    def __mul__(self, other):
        if isinstance(other, Tensor):
            return mul(self, other)
        return scale(self, float(other))

    __rmul__ = __mul__

    def __neg__(self):
        return scale(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)


def constant(data, allow_nonfinite=False):
    """Non-differentiable tensor; -inf entries allowed for mask constants."""
    t = Tensor.__new__(Tensor)
    arr = np.asarray(data, dtype=np.float64)
    if not allow_nonfinite:
        _check_finite(arr, "tensor construction")
    elif np.any(np.isnan(arr)):
        raise NumericsError("NaN in constant")
    t.data = arr
    t.grad = None
    t.requires_grad = False
    t._parents = ()
    t._backward = None
    return t


def _result(data, parents, backward_fn, check=True):
    """Wrap an op output; records the graph edge only when grads can flow."""
    if check:
        _check_finite(data, "op output")
    out = Tensor.__new__(Tensor)
    out.data = data
    out.grad = None
    out._parents = ()
    out._backward = None
    out.requires_grad = any(p.requires_grad for p in parents)
    if out.requires_grad:
        out._parents = tuple(parents)
        out._backward = backward_fn
    return out


def _accum(t, g):
    if t.requires_grad:
        if t.grad is None:
            t.grad = np.array(g, dtype=np.float64)
        else:
            t.grad += g


def _accum_owned(t, g):
    """Accumulate a gradient buffer the caller will not reuse (no defensive
    copy). Safe only for arrays freshly allocated in the calling closure or
    views of the just-consumed child gradient."""
    if t.requires_grad:
        if t.grad is None:
            t.grad = g
        else:
            t.grad += g


def backward(loss):
    """Reverse-mode accumulation from a scalar loss over the recorded graph."""
    if loss.data.size != 1:
        raise GraphError(f"backward requires a scalar loss, got shape {loss.data.shape}")
    if not loss.requires_grad:
        raise GraphError("loss is not connected to any differentiable tensor")
    order = []
    seen = set()
    stack = [(loss, False)]
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
    loss.grad = np.ones_like(loss.data)
    for node in reversed(order):
        if node._backward is not None:
            node._backward(node.grad)


# ---------------------------------------------------------------------------
# elementwise / shape ops


def _same_shape(a, b, op):
    if a.data.shape != b.data.shape:
        raise DimensionError(f"{op}: shape {a.data.shape} vs {b.data.shape}")


def add(a, b):
    _same_shape(a, b, "add")

    def back(g):
        _accum_owned(a, g)
        _accum(b, g)

    return _result(a.data + b.data, (a, b), back)


def mul(a, b):
    _same_shape(a, b, "mul")

    def back(g):
        _accum_owned(a, g * b.data)
        _accum_owned(b, g * a.data)

    return _result(a.data * b.data, (a, b), back)


def div(a, b):
    _same_shape(a, b, "div")
    out_data = a.data / b.data

    def back(g):
        _accum_owned(a, g / b.data)
        _accum_owned(b, -g * out_data / b.data)

    return _result(out_data, (a, b), back)


def scale(x, s):
    def back(g):
        _accum_owned(x, g * s)

    return _result(x.data * s, (x,), back)


def shift(x, s):
    def back(g):
        _accum_owned(x, g)

    return _result(x.data + s, (x,), back)


def add_bias(x, b):
    """Row-broadcast add: x (m, n) + b (n,)."""
    if x.data.ndim != 2 or b.data.shape != (x.data.shape[1],):
        raise DimensionError(f"add_bias: {x.data.shape} + {b.data.shape}")

    def back(g):
        _accum_owned(x, g)
        _accum_owned(b, g.sum(axis=0))

    return _result(x.data + b.data, (x, b), back)


def powc(x, p):
    """Elementwise x**p for a constant float exponent."""
    out_data = x.data ** p

    def back(g):
        _accum_owned(x, g * p * x.data ** (p - 1.0) if p != 0.0 else np.zeros_like(x.data))

    return _result(out_data, (x,), back)


def log(x):
    def back(g):
        _accum_owned(x, g / x.data)

    return _result(np.log(x.data), (x,), back)


def clamp(x, lo, hi):
    """Clip to [lo, hi]; gradient passes only strictly inside the interval."""
    inside = (x.data > lo) & (x.data < hi)

    def back(g):
        _accum_owned(x, g * inside)

    return _result(np.clip(x.data, lo, hi), (x,), back)


def gelu_array(z):
    """GeLU (tanh approximation) on a plain ndarray."""
    return 0.5 * z * (1.0 + np.tanh(_GELU_C * (z + _GELU_A * z ** 3)))


def gelu(x):
    """GeLU, tanh approximation: 0.5*x*(1 + tanh(c*(x + a*x^3)))."""
    u = _GELU_C * (x.data + _GELU_A * x.data ** 3)
    t = np.tanh(u)

    def back(g):
        du = _GELU_C * (1.0 + 3.0 * _GELU_A * x.data ** 2)
        _accum_owned(x, g * (0.5 * (1.0 + t) + 0.5 * x.data * (1.0 - t * t) * du))

    return _result(0.5 * x.data * (1.0 + t), (x,), back)


def sigmoid(x):
    out_data = expit(x.data)

    def back(g):
        _accum_owned(x, g * out_data * (1.0 - out_data))

    return _result(out_data, (x,), back)


def expit(z):
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    e = np.exp(z[~pos])
    out[~pos] = e / (1.0 + e)
    return out


def reshape(x, shape):
    if int(np.prod(shape)) != x.data.size:
        raise DimensionError(f"reshape: {x.data.shape} -> {shape}")
    old = x.data.shape

    def back(g):
        _accum_owned(x, g.reshape(old))

    return _result(x.data.reshape(shape), (x,), back)


def transpose2d(x):
    if x.data.ndim != 2:
        raise DimensionError(f"transpose2d on ndim {x.data.ndim}")

    def back(g):
        _accum_owned(x, g.T)

    return _result(np.ascontiguousarray(x.data.T), (x,), back)


def concat_rows(parts):
    if any(p.data.ndim != 2 for p in parts):
        raise DimensionError("concat_rows expects 2-d tensors")
    if len({p.data.shape[1] for p in parts}) != 1:
        raise DimensionError("concat_rows: column counts differ")
    sizes = [p.data.shape[0] for p in parts]

    def back(g):
        at = 0
        for p, n in zip(parts, sizes):
            _accum_owned(p, g[at:at + n])
            at += n

    return _result(np.concatenate([p.data for p in parts], axis=0), tuple(parts), back)


def concat_cols(parts):
    if any(p.data.ndim != 2 for p in parts):
        raise DimensionError("concat_cols expects 2-d tensors")
    if len({p.data.shape[0] for p in parts}) != 1:
        raise DimensionError("concat_cols: row counts differ")
    sizes = [p.data.shape[1] for p in parts]

    def back(g):
        at = 0
        for p, n in zip(parts, sizes):
            _accum_owned(p, g[:, at:at + n])
            at += n

    return _result(np.concatenate([p.data for p in parts], axis=1), tuple(parts), back)


def slice_rows(x, lo, hi):
    def back(g):
        gx = np.zeros_like(x.data)
        gx[lo:hi] = g
        _accum_owned(x, gx)

    return _result(x.data[lo:hi].copy(), (x,), back)


def slice_cols(x, lo, hi):
    def back(g):
        gx = np.zeros_like(x.data)
        gx[:, lo:hi] = g
        _accum_owned(x, gx)

    return _result(x.data[:, lo:hi].copy(), (x,), back)


def sum_all(x):
    def back(g):
        _accum_owned(x, np.broadcast_to(g, x.data.shape).copy())

    return _result(np.asarray(x.data.sum()), (x,), back)


def mean_all(x):
    n = x.data.size

    def back(g):
        _accum_owned(x, np.broadcast_to(g / n, x.data.shape).copy())

    return _result(np.asarray(x.data.mean()), (x,), back)


# ---------------------------------------------------------------------------
# matrix / attention primitives


def matmul(a, b):
    if a.data.ndim != 2 or b.data.ndim != 2:
        raise DimensionError("matmul expects 2-d tensors")
    if a.data.shape[1] != b.data.shape[0]:
        raise DimensionError(f"matmul: {a.data.shape} @ {b.data.shape}")

    def back(g):
        _accum_owned(a, g @ b.data.T)
        _accum_owned(b, a.data.T @ g)

    return _result(a.data @ b.data, (a, b), back)


def softmax_rows(x, additive_mask=None):
    """Row-wise softmax, stabilized by row-max subtraction.

    `additive_mask` is a constant ndarray added to the logits; entries of
    -inf force exact zeros in the output (masked attention). A row that is
    entirely -inf has no valid distribution and raises.
    """
    if x.data.ndim != 2:
        raise DimensionError("softmax_rows expects a 2-d tensor")
    z = x.data
    if additive_mask is not None:
        if additive_mask.shape != z.shape:
            raise DimensionError(
                f"softmax mask shape {additive_mask.shape} vs {z.shape}")
        z = z + additive_mask
    rowmax = z.max(axis=1, keepdims=True)
    if not np.all(np.isfinite(rowmax)):
        raise NumericsError("softmax_rows: a row is entirely masked")
    e = np.exp(z - rowmax)
    out_data = e / e.sum(axis=1, keepdims=True)

    def back(g):
        dot = (g * out_data).sum(axis=1, keepdims=True)
        _accum_owned(x, out_data * (g - dot))

    return _result(out_data, (x,), back)


def layer_norm(x, gain, bias, eps=1e-5):
    """Per-row normalization to mean 0 / var 1 (eps inside the sqrt), then affine."""
    if x.data.ndim != 2:
        raise DimensionError("layer_norm expects a 2-d tensor")
    n = x.data.shape[1]
    if n < 2:
        raise DimensionError("layer_norm needs at least 2 columns")
    if gain.data.shape != (n,) or bias.data.shape != (n,):
        raise DimensionError("layer_norm: gain/bias must match column count")
    mu = x.data.mean(axis=1, keepdims=True)
    var = x.data.var(axis=1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = (x.data - mu) * inv

    def back(g):
        _accum_owned(bias, g.sum(axis=0))
        _accum_owned(gain, (g * xhat).sum(axis=0))
        gh = g * gain.data
        _accum_owned(x, inv * (gh - gh.mean(axis=1, keepdims=True)
                         - xhat * (gh * xhat).mean(axis=1, keepdims=True)))

    return _result(xhat * gain.data + bias.data, (x, gain, bias), back)


def conv3x3(x, k, b):
    """3x3 conv, stride 1, zero padding 1; x (h,w,cin), k (3,3,cin,cout), b (cout,)."""
    if x.data.ndim != 3:
        raise DimensionError("conv3x3 expects (h, w, cin) input")
    ci = x.data.shape[2]
    if k.data.shape[:3] != (3, 3, ci):
        raise DimensionError(f"conv3x3 kernel {k.data.shape} vs input channels {ci}")
    co = k.data.shape[3]
    if b.data.shape != (co,):
        raise DimensionError("conv3x3 bias does not match output channels")
    xd, kd = np.ascontiguousarray(x.data), np.ascontiguousarray(k.data)

    def back(g):
        gx, gk, gb = _kernels.conv3x3_backward(xd, kd, np.ascontiguousarray(g))
        _accum_owned(x, np.asarray(gx))
        _accum_owned(k, np.asarray(gk))
        _accum_owned(b, np.asarray(gb))

    out_data = np.asarray(_kernels.conv3x3_forward(xd, kd, np.ascontiguousarray(b.data)))
    return _result(out_data, (x, k, b), back)


def transposed_conv2x(x, k, b):
    """2x2 transposed conv, stride 2: (h,w,cin) -> (2h,2w,cout), disjoint blocks."""
    if x.data.ndim != 3:
        raise DimensionError("transposed_conv2x expects (h, w, cin) input")
    ci = x.data.shape[2]
    if k.data.shape[:3] != (2, 2, ci):
        raise DimensionError(f"tconv kernel {k.data.shape} vs input channels {ci}")
    co = k.data.shape[3]
    if b.data.shape != (co,):
        raise DimensionError("tconv bias does not match output channels")
    xd, kd = np.ascontiguousarray(x.data), np.ascontiguousarray(k.data)

    def back(g):
        gx, gk, gb = _kernels.tconv2x_backward(xd, kd, np.ascontiguousarray(g))
        _accum_owned(x, np.asarray(gx))
        _accum_owned(k, np.asarray(gk))
        _accum_owned(b, np.asarray(gb))

    out_data = np.asarray(_kernels.tconv2x_forward(xd, kd, np.ascontiguousarray(b.data)))
    return _result(out_data, (x, k, b), back)


def batch_norm(x, gain, bias, running_mean, running_var, training,
               momentum=0.1, eps=1e-5):
    """Per-channel normalization over spatial positions of one (h, w, c) map.

    Batch-of-one semantics: training mode normalizes with this map's own
    spatial statistics and updates the running buffers in place (EMA with
    `momentum` on the biased variance); eval mode normalizes with the
    running buffers.
    """
    if x.data.ndim != 3:
        raise DimensionError("batch_norm expects (h, w, c) input")
    c = x.data.shape[2]
    for nm, arr in (("gain", gain.data), ("bias", bias.data),
                    ("running_mean", running_mean), ("running_var", running_var)):
        if arr.shape != (c,):
            raise DimensionError(f"batch_norm: {nm} must have shape ({c},)")
    n = x.data.shape[0] * x.data.shape[1]
    flat = x.data.reshape(n, c)
    if training:
        mu = flat.mean(axis=0)
        var = flat.var(axis=0)
        running_mean *= 1.0 - momentum
        running_mean += momentum * mu
        running_var *= 1.0 - momentum
        running_var += momentum * var
    else:
        mu = running_mean
        var = running_var
    inv = 1.0 / np.sqrt(var + eps)
    xhat = (flat - mu) * inv

    def back(g):
        gf = g.reshape(n, c)
        _accum_owned(bias, gf.sum(axis=0))
        _accum_owned(gain, (gf * xhat).sum(axis=0))
        gh = gf * gain.data
        if training:
            gx = inv * (gh - gh.mean(axis=0)
                        - xhat * (gh * xhat).mean(axis=0))
        else:
            gx = gh * inv
        _accum_owned(x, gx.reshape(x.data.shape))

    out_data = (xhat * gain.data + bias.data).reshape(x.data.shape)
    return _result(out_data, (x, gain, bias), back)
