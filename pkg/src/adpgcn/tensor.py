"""Dense float64 tensors with reverse-mode automatic differentiation.

A dynamic tape: every operation whose inputs require grad records its parents
and a backward rule on the output tensor. backward() on a scalar loss walks
the recorded graph once in reverse topological order and accumulates
gradients into the participating leaves. The graph is rebuilt on every
forward pass; a second backward() through the same loss raises GraphConsumed.

All stored values are finite by construction: any operation producing NaN/Inf
raises NonFiniteValue at the point of creation instead of letting it
propagate silently.
"""

import math

import numpy as np

from . import kernels
from .errors import (
    GraphConsumed,
    NonFiniteValue,
    NotScalarLoss,
    ShapeMismatch,
)

_grad_enabled = True


class no_grad:
    """Context manager that disables graph recording (evaluation fast path)."""

    def __enter__(self):
        global _grad_enabled
        self._prev = _grad_enabled
        _grad_enabled = False
        return self

    def __exit__(self, *exc):
        global _grad_enabled
        _grad_enabled = self._prev
        return False


def _check_finite(arr, op):
    # a single reduction: NaN/Inf anywhere propagates into the sum. Values
    # large enough to overflow the sum while individually finite (~1e300)
    # are outside this library's operating range anyway.
    if not math.isfinite(float(arr.sum())):
        raise NonFiniteValue(f"{op} produced NaN/Inf")


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "_consumed")

    def __init__(self, data, requires_grad=False):
        arr = np.ascontiguousarray(data, dtype=np.float64)
        _check_finite(arr, "tensor")
        self.data = arr
        self.grad = None
        self.requires_grad = bool(requires_grad)
        self._parents = ()
        self._backward = None
        self._consumed = False

    # --- construction of op results ------------------------------------------

    @staticmethod
    def _result(data, parents, backward, op):
        out = np.ascontiguousarray(data, dtype=np.float64)
        _check_finite(out, op)
        t = Tensor.__new__(Tensor)
        t.data = out
        t.grad = None
        t._consumed = False
        if _grad_enabled and any(p.requires_grad for p in parents):
            t.requires_grad = True
            t._parents = tuple(parents)
            t._backward = backward
        else:
            t.requires_grad = False
            t._parents = ()
            t._backward = None
        return t

    # --- basic properties ------------------------------------------------------

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def size(self):
        return self.data.size

    def item(self):
        if self.data.size != 1:
            raise ShapeMismatch(f"item() on tensor of shape {self.shape}")
        return float(self.data.reshape(()))

    def numpy(self):
        return self.data

    def __repr__(self):
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"

    # --- operator sugar ---------------------------------------------------------

    def __add__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __mul__(self, other):
        return mul(self, other)

    def __neg__(self):
        return scale(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def relu(self):
        return relu(self)

    def reshape(self, shape):
        return reshape(self, shape)

    def transpose(self, axes=None):
        return transpose(self, axes)

    def mean(self):
        return mean(self)

    def sum_axis(self, axis, keepdims=False):
        return sum_axis(self, axis, keepdims)

    # --- backward pass -----------------------------------------------------------

    def backward(self):
        """Populate .grad of every requires_grad leaf reachable from this scalar."""
        if self.data.size != 1:
            raise NotScalarLoss(f"loss has shape {self.shape}, expected a scalar")
        if self._consumed:
            raise GraphConsumed("backward() already ran through this loss")
        if not self.requires_grad:
            self._consumed = True
            return

        topo = []
        visited = set()
        stack = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                topo.append(node)
                continue
            if id(node) in visited:
                continue
            visited.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if id(p) not in visited and p.requires_grad:
                    stack.append((p, False))

        grads = {id(self): np.ones(self.shape)}
        for node in reversed(topo):
            g = grads.pop(id(node), None)
            if g is None:
                continue
            if node._backward is None:
                # leaf: accumulate (never alias the propagated array)
                if node.grad is None:
                    node.grad = np.array(g)
                else:
                    node.grad += g
                continue
            for parent, pg in zip(node._parents, node._backward(g)):
                if pg is None or not parent.requires_grad:
                    continue
                cur = grads.get(id(parent))
                grads[id(parent)] = pg if cur is None else cur + pg
        self._consumed = True


def _unbroadcast(grad, shape):
    """Reduce a broadcast gradient back to the original operand shape."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, extent in enumerate(shape):
        if extent == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def _broadcast_shapes(a, b, op):
    try:
        return np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeMismatch(f"{op}: cannot broadcast {a.shape} with {b.shape}") from None


# --- elementwise suite -------------------------------------------------------------


def add(a, b):
    _broadcast_shapes(a, b, "add")
    return Tensor._result(
        a.data + b.data,
        (a, b),
        lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)),
        "add",
    )


def sub(a, b):
    _broadcast_shapes(a, b, "sub")
    return Tensor._result(
        a.data - b.data,
        (a, b),
        lambda g: (_unbroadcast(g, a.shape), -_unbroadcast(g, b.shape)),
        "sub",
    )


def mul(a, b):
    _broadcast_shapes(a, b, "mul")
    return Tensor._result(
        a.data * b.data,
        (a, b),
        lambda g: (
            _unbroadcast(g * b.data, a.shape),
            _unbroadcast(g * a.data, b.shape),
        ),
        "mul",
    )


def scale(a, s):
    s = float(s)
    return Tensor._result(a.data * s, (a,), lambda g: (g * s,), "scale")


def relu(a):
    x = a.data
    return Tensor._result(
        kernels.relu_fwd(x), (a,), lambda g: (kernels.relu_bwd(x, g),), "relu"
    )


def matmul(a, b):
    """Matrix product; stacked (batched) operands broadcast over leading axes.

    Two shapes common in this model are routed to a single large GEMM instead
    of numpy's loop over thousands of tiny stacked products: (..., k) @ (k, n)
    (linear layers, per-node channel projections) and (n, n) @ (..., n, c)
    (adjacency aggregation over the node axis).
    """
    if a.ndim < 2 or b.ndim < 2:
        raise ShapeMismatch(f"matmul needs >=2-D operands, got {a.shape} @ {b.shape}")
    if a.shape[-1] != b.shape[-2]:
        raise ShapeMismatch(f"matmul inner extents differ: {a.shape} @ {b.shape}")

    if b.ndim == 2:
        k, n = b.data.shape
        flat = a.data.reshape(-1, k)
        out = (flat @ b.data).reshape(a.shape[:-1] + (n,))

        def backward(g):
            gflat = g.reshape(-1, n)
            ga = (gflat @ b.data.T).reshape(a.shape)
            gb = flat.T @ gflat
            return ga, gb

        return Tensor._result(out, (a, b), backward, "matmul")

    if a.ndim == 2 and b.ndim > 2:
        # out[..., u, c] = sum_v a[u, v] b[..., v, c]
        out = np.einsum("uv,...vc->...uc", a.data, b.data, optimize=True)

        def backward(g):
            ga = np.einsum("...uc,...vc->uv", g, b.data, optimize=True)
            gb = np.einsum("uv,...uc->...vc", a.data, g, optimize=True)
            return ga, gb

        return Tensor._result(out, (a, b), backward, "matmul")

    try:
        out = np.matmul(a.data, b.data)
    except ValueError:
        raise ShapeMismatch(f"matmul batch shapes differ: {a.shape} @ {b.shape}") from None

    def backward(g):
        ga = _unbroadcast(np.matmul(g, np.swapaxes(b.data, -1, -2)), a.shape)
        gb = _unbroadcast(np.matmul(np.swapaxes(a.data, -1, -2), g), b.shape)
        return ga, gb

    return Tensor._result(out, (a, b), backward, "matmul")


# --- softmax ------------------------------------------------------------------------


def softmax_lastaxis(a):
    """Softmax along the last axis of an arbitrary-rank tensor."""
    cols = a.shape[-1]
    flat = a.data.reshape(-1, cols)
    y = kernels.softmax_rows_fwd(flat)

    def backward(g):
        dx = kernels.softmax_rows_bwd(y, np.ascontiguousarray(g.reshape(-1, cols)))
        return (dx.reshape(a.shape),)

    return Tensor._result(y.reshape(a.shape), (a,), backward, "softmax")


def softmax_rows(a):
    if a.ndim != 2:
        raise ShapeMismatch(f"softmax_rows expects a 2-D tensor, got {a.shape}")
    return softmax_lastaxis(a)


# --- shape manipulation ---------------------------------------------------------------


def transpose(a, axes=None):
    out = np.transpose(a.data, axes)
    if axes is None:
        inverse = None
    else:
        inverse = np.argsort(axes)
    return Tensor._result(
        out, (a,), lambda g: (np.transpose(g, inverse),), "transpose"
    )


def reshape(a, shape):
    shape = tuple(int(s) for s in shape)
    if int(np.prod(shape, dtype=np.int64)) != a.size:
        raise ShapeMismatch(f"cannot reshape {a.shape} to {shape}")
    return Tensor._result(
        a.data.reshape(shape), (a,), lambda g: (g.reshape(a.shape),), "reshape"
    )


def concat_axis(tensors, axis):
    tensors = list(tensors)
    base = list(tensors[0].shape)
    for t in tensors[1:]:
        other = list(t.shape)
        base[axis] = other[axis] = 0
        if len(other) != len(base) or other != base:
            raise ShapeMismatch("concat_axis operands differ off the concat axis")
    out = np.concatenate([t.data for t in tensors], axis=axis)
    offsets = np.cumsum([t.shape[axis] for t in tensors])[:-1]

    def backward(g):
        return tuple(np.ascontiguousarray(p) for p in np.split(g, offsets, axis=axis))

    return Tensor._result(out, tuple(tensors), backward, "concat")


def slice_axis(a, axis, start, stop):
    idx = [slice(None)] * a.ndim
    idx[axis] = slice(start, stop)
    idx = tuple(idx)

    def backward(g):
        full = np.zeros(a.shape)
        full[idx] = g
        return (full,)

    return Tensor._result(a.data[idx], (a,), backward, "slice")


# --- reductions ------------------------------------------------------------------------


def sum_axis(a, axis, keepdims=False):
    out = a.data.sum(axis=axis, keepdims=keepdims)

    def backward(g):
        if not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, a.shape).copy(),)

    return Tensor._result(out, (a,), backward, "sum_axis")


def mean(a):
    """Mean over all elements; the scalar reduction used for losses."""
    n = a.size
    out = a.data.mean()
    return Tensor._result(
        out, (a,), lambda g: (np.full(a.shape, g.reshape(()) / n),), "mean"
    )


# --- fused layers -----------------------------------------------------------------------


def layer_norm(a, gain, bias, eps=1e-5):
    """Normalize the last axis to zero mean/unit variance, then apply affine."""
    cols = a.shape[-1]
    if gain.shape != (cols,) or bias.shape != (cols,):
        raise ShapeMismatch(
            f"layer_norm affine shapes {gain.shape}/{bias.shape} vs last axis {cols}"
        )
    flat = a.data.reshape(-1, cols)
    y, xhat, inv_std = kernels.layer_norm_fwd(flat, gain.data, bias.data, eps)

    def backward(g):
        dx, dgain, dbias = kernels.layer_norm_bwd(
            np.ascontiguousarray(g.reshape(-1, cols)), xhat, inv_std, gain.data
        )
        return dx.reshape(a.shape), dgain, dbias

    return Tensor._result(y.reshape(a.shape), (a, gain, bias), backward, "layer_norm")


def max_pool_len(a, axis=1):
    """Max pooling with kernel 2 / stride 2 along one axis (length halving)."""
    extent = a.shape[axis]
    if extent % 2 != 0:
        raise ShapeMismatch(f"max_pool_len needs an even extent, got {extent}")
    moved = np.moveaxis(a.data, axis, -1)
    lead = moved.shape[:-1]
    pairs = moved.reshape(lead + (extent // 2, 2))
    argmax = pairs.argmax(axis=-1)
    pooled = np.take_along_axis(pairs, argmax[..., None], axis=-1)[..., 0]
    out = np.moveaxis(pooled, -1, axis)

    def backward(g):
        gm = np.moveaxis(g, axis, -1)
        dpairs = np.zeros(lead + (extent // 2, 2))
        np.put_along_axis(dpairs, argmax[..., None], gm[..., None], axis=-1)
        dmoved = dpairs.reshape(lead + (extent,))
        return (np.ascontiguousarray(np.moveaxis(dmoved, -1, axis)),)

    return Tensor._result(out, (a,), backward, "max_pool_len")


def dropout(a, rate, rng, training):
    """Inverted dropout; identity when not training or rate == 0."""
    if not training or rate == 0.0:
        return a
    keep = (rng.random(a.shape) >= rate) / (1.0 - rate)
    return Tensor._result(a.data * keep, (a,), lambda g: (g * keep,), "dropout")
