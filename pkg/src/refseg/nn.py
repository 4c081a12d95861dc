"""Parameter registry and the small set of layers the model needs."""

import numpy as np

from . import tensor as T
from .errors import ConfigError, DimensionError


class Parameter:
    """A named, possibly frozen weight.

    Frozen parameters never require grad, are skipped by the optimizer,
    and keep their grad buffer absent for the lifetime of the model.
    """

    __slots__ = ("tensor", "frozen")

    def __init__(self, data, frozen=False):
        self.tensor = T.Tensor(np.asarray(data, dtype=np.float64), requires_grad=not frozen)
        self.frozen = frozen

    @property
    def data(self):
        return self.tensor.data

    @property
    def grad(self):
        return self.tensor.grad

    def zero_grad(self):
        self.tensor.grad = None


class Module:
    """Minimal container with named parameter/buffer traversal."""

    def __init__(self):
        object.__setattr__(self, "_params", {})
        object.__setattr__(self, "_buffers", {})
        object.__setattr__(self, "_children", {})
        object.__setattr__(self, "training", True)

    def __setattr__(self, name, value):
        if isinstance(value, Parameter):
            self._params[name] = value
        elif isinstance(value, Module):
            self._children[name] = value
        else:
            object.__setattr__(self, name, value)

    def __getattr__(self, name):
        for table in ("_params", "_children"):
            d = object.__getattribute__(self, table)
            if name in d:
                return d[name]
        raise AttributeError(name)

    def register_buffer(self, name, array):
        self._buffers[name] = np.asarray(array, dtype=np.float64)

    def buffer(self, name):
        return self._buffers[name]

    def named_parameters(self, prefix=""):
        for name, p in self._params.items():
            yield (prefix + name, p)
        for name, child in self._children.items():
            yield from child.named_parameters(prefix + name + ".")

    def named_buffers(self, prefix=""):
        for name, b in self._buffers.items():
            yield (prefix + name, b)
        for name, child in self._children.items():
            yield from child.named_buffers(prefix + name + ".")

    def parameters(self):
        for _, p in self.named_parameters():
            yield p

    def trainable_parameters(self):
        for name, p in self.named_parameters():
            if not p.frozen:
                yield name, p

    def zero_grad(self):
        for p in self.parameters():
            p.zero_grad()

    def train(self, mode=True):
        object.__setattr__(self, "training", mode)
        for child in self._children.values():
            child.train(mode)
        return self

    def eval(self):
        return self.train(False)


class ModuleList(Module):
    def __init__(self, modules=()):
        super().__init__()
        self._list = []
        for m in modules:
            self.append(m)

    def append(self, module):
        setattr(self, str(len(self._list)), module)
        self._list.append(module)

    def __iter__(self):
        return iter(self._list)

    def __len__(self):
        return len(self._list)

    def __getitem__(self, i):
        return self._list[i]


def init_linear(rng, fan_in, fan_out):
    return rng.normal(0.0, 1.0 / np.sqrt(fan_in), size=(fan_in, fan_out))


class Linear(Module):
    def __init__(self, rng, d_in, d_out, frozen=False):
        super().__init__()
        self.w = Parameter(init_linear(rng, d_in, d_out), frozen=frozen)
        self.b = Parameter(np.zeros(d_out), frozen=frozen)

    def forward(self, x):
        return T.add_bias(T.matmul(x, self.w.tensor), self.b.tensor)


class MLP(Module):
    """Affine layers with GeLU between them (none after the last)."""

    def __init__(self, rng, dims):
        super().__init__()
        if len(dims) < 2:
            raise ConfigError("MLP needs at least one affine layer")
        self.layers = ModuleList(
            Linear(rng, dims[i], dims[i + 1]) for i in range(len(dims) - 1))

    def forward(self, x):
        n = len(self.layers)
        for i, layer in enumerate(self.layers):
            x = layer.forward(x)
            if i < n - 1:
                x = T.gelu(x)
        return x


class LayerNorm(Module):
    def __init__(self, dim, eps=1e-5):
        super().__init__()
        self.gain = Parameter(np.ones(dim))
        self.bias = Parameter(np.zeros(dim))
        self.eps = eps

    def forward(self, x):
        return T.layer_norm(x, self.gain.tensor, self.bias.tensor, eps=self.eps)


class BatchNorm(Module):
    """Per-channel batchnorm over spatial positions, batch-of-one semantics."""

    def __init__(self, channels, momentum=0.1, eps=1e-5):
        super().__init__()
        self.gain = Parameter(np.ones(channels))
        self.bias = Parameter(np.zeros(channels))
        self.register_buffer("running_mean", np.zeros(channels))
        self.register_buffer("running_var", np.ones(channels))
        self.momentum = momentum
        self.eps = eps

    def forward(self, x):
        return T.batch_norm(x, self.gain.tensor, self.bias.tensor,
                            self.buffer("running_mean"), self.buffer("running_var"),
                            self.training, momentum=self.momentum, eps=self.eps)


class ConvBnGelu(Module):
    """conv3x3 stack -> batchnorm -> GeLU (the fusion building block)."""

    def __init__(self, rng, c_in, c_out, depth=1):
        super().__init__()
        if depth < 1:
            raise ConfigError("ConvBnGelu depth must be >= 1")
        convs = []
        for i in range(depth):
            ci = c_in if i == 0 else c_out
            convs.append(_Conv3x3(rng, ci, c_out))
        self.convs = ModuleList(convs)
        self.bn = BatchNorm(c_out)

    def forward(self, x):
        for conv in self.convs:
            x = conv.forward(x)
        return T.gelu(self.bn.forward(x))


class _Conv3x3(Module):
    def __init__(self, rng, c_in, c_out):
        super().__init__()
        self.k = Parameter(rng.normal(0.0, 1.0 / np.sqrt(9 * c_in), size=(3, 3, c_in, c_out)))
        self.b = Parameter(np.zeros(c_out))

    def forward(self, x):
        return T.conv3x3(x, self.k.tensor, self.b.tensor)


class UpsampleBlock(Module):
    """transposed_conv2x -> batchnorm; doubles h and w."""

    def __init__(self, rng, c_in, c_out):
        super().__init__()
        self.k = Parameter(rng.normal(0.0, 1.0 / np.sqrt(c_in), size=(2, 2, c_in, c_out)))
        self.b = Parameter(np.zeros(c_out))
        self.bn = BatchNorm(c_out)

    def forward(self, x):
        return self.bn.forward(T.transposed_conv2x(x, self.k.tensor, self.b.tensor))


def _key_mask_to_additive(key_mask, n_q):
    if key_mask is None or not key_mask.any():
        return None
    row = np.where(key_mask, -np.inf, 0.0)
    return np.broadcast_to(row, (n_q, key_mask.shape[0])).copy()


class MultiHeadAttention(Module):
    """Scaled dot-product attention: Softmax(Q K^T / sqrt(d_k)) V per head,
    heads concatenated, then an output projection.

    Self-attention is `forward(x, x)`; cross-attention passes distinct
    query and key/value sources. `key_mask` marks key rows (True = pad)
    that no query may attend to.
    """

    def __init__(self, rng, dim, heads):
        super().__init__()
        if dim % heads != 0:
            raise ConfigError(f"attention dim {dim} not divisible by {heads} heads")
        self.dim = dim
        self.heads = heads
        self.d_head = dim // heads
        self.wq = Linear(rng, dim, dim)
        self.wk = Linear(rng, dim, dim)
        self.wv = Linear(rng, dim, dim)
        self.wo = Linear(rng, dim, dim)

    def forward(self, q_in, kv_in, key_mask=None):
        if q_in.data.shape[1] != self.dim or kv_in.data.shape[1] != self.dim:
            raise DimensionError("attention input width does not match layer dim")
        q = self.wq.forward(q_in)
        k = self.wk.forward(kv_in)
        v = self.wv.forward(kv_in)
        mask = _key_mask_to_additive(key_mask, q.data.shape[0])
        outs = []
        inv = 1.0 / np.sqrt(self.d_head)
        for h in range(self.heads):
            lo, hi = h * self.d_head, (h + 1) * self.d_head
            qh = T.slice_cols(q, lo, hi)
            kh = T.slice_cols(k, lo, hi)
            vh = T.slice_cols(v, lo, hi)
            attn = T.softmax_rows(T.scale(T.matmul(qh, T.transpose2d(kh)), inv),
                                  additive_mask=mask)
            outs.append(T.matmul(attn, vh))
        return self.wo.forward(T.concat_cols(outs))
