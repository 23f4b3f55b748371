"""Adaptive adjacency and graph convolutions over the dimension graph.

Each variable of the multivariate series is a graph node. The dependency
matrix is not given: it is learned end-to-end as
softmax_rows(relu(E1 @ E2^T)), which is row-stochastic by construction. Graph
convolutions aggregate powers of that matrix:

    Z = sum_{k=0..K} A^k X W_k,   A^0 = I.

gcn_block wraps two (or `depth`) such convolutions with ReLU in between and a
residual connection, applied independently at every time step of a
(batch, length, nodes) sequence.
"""

import math

import numpy as np

from .errors import NodeCountMismatch, ShapeMismatch
from .tensor import Tensor, matmul, relu, reshape, softmax_rows


class AdaptiveAdjacency:
    """Learnable node-embedding pair producing a row-stochastic N x N matrix."""

    def __init__(self, n_nodes, embed_dim=10, rng=None):
        if rng is None:
            rng = np.random.default_rng(0)
        scale = 1.0 / math.sqrt(embed_dim)
        self.n_nodes = n_nodes
        self.embed_dim = embed_dim
        self.e1 = Tensor(
            rng.uniform(-0.5, 0.5, (n_nodes, embed_dim)) * scale, requires_grad=True
        )
        self.e2 = Tensor(
            rng.uniform(-0.5, 0.5, (n_nodes, embed_dim)) * scale, requires_grad=True
        )

    def materialize(self):
        return materialize_adjacency(self)

    def parameters(self):
        return {"e1": self.e1, "e2": self.e2}


def materialize_adjacency(adj):
    """softmax_rows(relu(E1 @ E2^T)), differentiable w.r.t. both embeddings."""
    if adj.e1.shape != adj.e2.shape:
        raise ShapeMismatch(
            f"embedding shapes differ: {adj.e1.shape} vs {adj.e2.shape}"
        )
    return softmax_rows(relu(matmul(adj.e1, adj.e2.transpose())))


def gcn_layer(a_tilde, x, w):
    """Single self-loop graph convolution: A_tilde @ X @ W."""
    return matmul(matmul(a_tilde, x), w)


class GraphConvParams:
    """K+1 weight matrices for a diffusion convolution of depth K."""

    def __init__(self, weights):
        weights = list(weights)
        if not weights:
            raise ShapeMismatch("diffusion convolution needs at least W_0")
        shape = weights[0].shape
        for w in weights[1:]:
            if w.shape != shape:
                raise ShapeMismatch("all W_k must share one shape")
        self.weights = weights

    @property
    def depth(self):
        return len(self.weights) - 1

    @classmethod
    def init(cls, in_channels, out_channels, diffusion_steps, rng):
        bound = math.sqrt(6.0 / (in_channels + out_channels))
        return cls(
            [
                Tensor(
                    rng.uniform(-bound, bound, (in_channels, out_channels)),
                    requires_grad=True,
                )
                for _ in range(diffusion_steps + 1)
            ]
        )


def diffusion_conv(p, x, params):
    """Z = sum_k P^k X W_k with P^0 = I, powers built by iterated products.

    x may carry leading batch axes; P then broadcasts over them.
    """
    if p.ndim != 2 or p.shape[0] != p.shape[1]:
        raise ShapeMismatch(f"transition matrix must be square, got {p.shape}")
    if x.shape[-2] != p.shape[0]:
        raise ShapeMismatch(
            f"signal has {x.shape[-2]} nodes, transition matrix {p.shape[0]}"
        )
    z = matmul(x, params.weights[0])
    propagated = x
    for w in params.weights[1:]:
        propagated = matmul(p, propagated)
        z = z + matmul(propagated, w)
    return z


def adaptive_graph_conv(adj, x, params):
    """diffusion_conv over the materialized adaptive matrix.

    K=0 degenerates to a per-node linear map: the adjacency is never
    materialized, so E1/E2 receive exactly zero gradient.
    """
    if x.shape[-2] != adj.n_nodes:
        raise ShapeMismatch(f"signal has {x.shape[-2]} nodes, adjacency {adj.n_nodes}")
    if params.depth == 0:
        return matmul(x, params.weights[0])
    return diffusion_conv(materialize_adjacency(adj), x, params)


def self_loop_transition(adjacency):
    """Default transition matrix: row-normalized (A + I) for a binary A."""
    a = np.asarray(adjacency, dtype=np.float64)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ShapeMismatch(f"adjacency must be square, got {a.shape}")
    with_loops = a + np.eye(a.shape[0])
    return with_loops / with_loops.sum(axis=1, keepdims=True)


class GcnBlock:
    """Stacked adaptive graph convolutions with a residual connection.

    Channel plan 1 -> hidden -> ... -> 1 over `depth` layers, ReLU between
    layers; output = input + stack(input), so the block composes with any
    downstream temporal model without changing shapes.
    """

    def __init__(self, adjacency, hidden=16, diffusion_steps=2, depth=2, rng=None,
                 init_scale=1.0):
        if depth < 1:
            raise ShapeMismatch("gcn block needs depth >= 1")
        if rng is None:
            rng = np.random.default_rng(0)
        self.adjacency = adjacency
        widths = [1] + [hidden] * (depth - 1) + [1]
        self.layers = [
            GraphConvParams.init(widths[i], widths[i + 1], diffusion_steps, rng)
            for i in range(depth)
        ]
        if init_scale != 1.0:
            # damp the residual branch at init; the block starts near identity
            for layer in self.layers:
                for w in layer.weights:
                    w.data = w.data * init_scale

    def __call__(self, x_seq):
        """x_seq: (..., N) treated as N nodes with one channel per position."""
        if x_seq.shape[-1] != self.adjacency.n_nodes:
            raise NodeCountMismatch(
                f"input has {x_seq.shape[-1]} dimensions, "
                f"adjacency expects {self.adjacency.n_nodes}"
            )
        h = reshape(x_seq, x_seq.shape + (1,))
        for i, layer in enumerate(self.layers):
            h = adaptive_graph_conv(self.adjacency, h, layer)
            if i + 1 < len(self.layers):
                h = relu(h)
        return x_seq + reshape(h, x_seq.shape)

    def parameters(self):
        out = {}
        for i, layer in enumerate(self.layers):
            for k, w in enumerate(layer.weights):
                out[f"layer{i}.w{k}"] = w
        return out
