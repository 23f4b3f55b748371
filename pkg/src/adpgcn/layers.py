"""Building blocks for the temporal encoder-decoder."""

import math

import numpy as np

from .errors import ShapeMismatch
from .tensor import (
    Tensor,
    add,
    layer_norm,
    matmul,
    relu,
    reshape,
    scale,
    softmax_lastaxis,
    transpose,
)

_MASK_FILL = -1e9


def glorot(rng, shape):
    bound = math.sqrt(6.0 / (shape[0] + shape[1]))
    return rng.uniform(-bound, bound, shape)


class Linear:
    def __init__(self, d_in, d_out, rng, bias=True):
        self.w = Tensor(glorot(rng, (d_in, d_out)), requires_grad=True)
        self.b = Tensor(np.zeros(d_out), requires_grad=True) if bias else None

    def __call__(self, x):
        out = matmul(x, self.w)
        if self.b is not None:
            out = add(out, self.b)
        return out

    def parameters(self):
        params = {"w": self.w}
        if self.b is not None:
            params["b"] = self.b
        return params


class LayerNorm:
    def __init__(self, d, eps=1e-5):
        self.gain = Tensor(np.ones(d), requires_grad=True)
        self.bias = Tensor(np.zeros(d), requires_grad=True)
        self.eps = eps

    def __call__(self, x):
        return layer_norm(x, self.gain, self.bias, self.eps)

    def parameters(self):
        return {"gain": self.gain, "bias": self.bias}


def sinusoidal_positions(max_len, d_model):
    """Fixed sin/cos positional table, (max_len, d_model)."""
    position = np.arange(max_len)[:, None]
    half = np.arange(0, d_model, 2)
    angle = position / np.power(10000.0, half / d_model)
    table = np.zeros((max_len, d_model))
    table[:, 0::2] = np.sin(angle)
    table[:, 1::2] = np.cos(angle[:, : d_model // 2])
    return table


def causal_mask(l_q, l_k):
    """(l_q, l_k) additive mask: large negative above the diagonal."""
    return np.triu(np.full((l_q, l_k), _MASK_FILL), k=1)


class MultiHeadAttention:
    """Canonical scaled dot-product attention, heads concatenated and projected."""

    def __init__(self, d_model, n_heads, rng):
        if d_model % n_heads != 0:
            raise ShapeMismatch(f"d_model {d_model} not divisible by {n_heads} heads")
        self.d_model = d_model
        self.n_heads = n_heads
        self.d_head = d_model // n_heads
        self.wq = Linear(d_model, d_model, rng)
        self.wk = Linear(d_model, d_model, rng)
        self.wv = Linear(d_model, d_model, rng)
        self.wo = Linear(d_model, d_model, rng)

    def _split(self, x, batch, length):
        # (B, L, d_model) -> (B, heads, L, d_head)
        return transpose(
            reshape(x, (batch, length, self.n_heads, self.d_head)), (0, 2, 1, 3)
        )

    def __call__(self, query, key, value, causal=False):
        batch, l_q, _ = query.shape
        l_k = key.shape[1]
        q = self._split(self.wq(query), batch, l_q)
        k = self._split(self.wk(key), batch, l_k)
        v = self._split(self.wv(value), batch, l_k)
        scores = scale(matmul(q, transpose(k, (0, 1, 3, 2))), 1.0 / math.sqrt(self.d_head))
        if causal:
            scores = add(scores, Tensor(causal_mask(l_q, l_k)))
        weights = softmax_lastaxis(scores)
        mixed = transpose(matmul(weights, v), (0, 2, 1, 3))
        return self.wo(reshape(mixed, (batch, l_q, self.d_model)))

    def parameters(self):
        out = {}
        for name, lin in (("q", self.wq), ("k", self.wk), ("v", self.wv), ("o", self.wo)):
            for pname, p in lin.parameters().items():
                out[f"w{name}.{pname}"] = p
        return out


class FeedForward:
    def __init__(self, d_model, d_ff, rng):
        self.lin1 = Linear(d_model, d_ff, rng)
        self.lin2 = Linear(d_ff, d_model, rng)

    def __call__(self, x):
        return self.lin2(relu(self.lin1(x)))

    def parameters(self):
        out = {}
        for name, lin in (("lin1", self.lin1), ("lin2", self.lin2)):
            for pname, p in lin.parameters().items():
                out[f"{name}.{pname}"] = p
        return out


def collect_parameters(components):
    """Flatten {prefix: component} into one ordered name -> Tensor dict."""
    flat = {}
    for prefix, component in components.items():
        for name, p in component.parameters().items():
            flat[f"{prefix}.{name}"] = p
    return flat
