"""Dense and message-passing layers built on :mod:`gkae.autodiff`."""

from __future__ import annotations

import enum

import numpy as np
import scipy.sparse as sp

from . import autodiff as ad
from .exceptions import ShapeMismatch
from .graphcore import GraphSnapshot

__all__ = [
    "Activation",
    "GraphBatch",
    "DenseLayer",
    "GraphConvLayer",
    "GcnLayer",
    "SageLayer",
    "Stack",
    "glorot_uniform",
]

LEAKY_SLOPE = 0.01


class Activation(str, enum.Enum):
    TANH = "tanh"
    LEAKY_RELU = "leaky_relu"
    IDENTITY = "identity"

    def __call__(self, x):
        if self is Activation.TANH:
            return ad.tanh(x)
        if self is Activation.LEAKY_RELU:
            return ad.leaky_relu(x, LEAKY_SLOPE)
        return x


def glorot_uniform(rng, n_out, n_in) -> np.ndarray:
    limit = np.sqrt(6.0 / (n_in + n_out))
    return rng.uniform(-limit, limit, size=(n_out, n_in))


class GraphBatch:
    """Several same-size graphs stacked block-diagonally.

    Node features for the batch are a ``(n_graphs * n_nodes) x features``
    matrix, graph-major.
    """

    def __init__(self, weights):
        weights = np.asarray(weights, dtype=float)
        if weights.ndim == 2:
            weights = weights[None]
        self.n_graphs, self.n_nodes, _ = weights.shape
        self.weights = weights
        self.adjacency = sp.block_diag(list(weights), format="csr")
        binary = (weights > 0).astype(float)
        deg = binary.sum(axis=2, keepdims=True)
        mean_adj = np.divide(binary, deg, out=np.zeros_like(binary), where=deg > 0)
        self.mean_adjacency = sp.block_diag(list(mean_adj), format="csr")
        rows = np.repeat(np.arange(self.n_graphs), self.n_nodes)
        cols = np.arange(self.n_graphs * self.n_nodes)
        self.pool = sp.csr_matrix(
            (np.full(cols.size, 1.0 / self.n_nodes), (rows, cols)),
            shape=(self.n_graphs, self.n_graphs * self.n_nodes),
        )
        self._normalized = None

    @property
    def normalized_adjacency(self):
        """``D^-1/2 (W + I) D^-1/2`` per graph, built on first use."""
        if self._normalized is None:
            blocks = []
            eye = np.eye(self.n_nodes)
            for w in self.weights:
                a = w + eye
                d = 1.0 / np.sqrt(a.sum(axis=1))
                blocks.append(a * d[:, None] * d[None, :])
            self._normalized = sp.block_diag(blocks, format="csr")
        return self._normalized

    @classmethod
    def from_snapshots(cls, snapshots) -> "GraphBatch":
        if isinstance(snapshots, GraphSnapshot):
            snapshots = [snapshots]
        return cls(np.stack([s.weights for s in snapshots]))

    @staticmethod
    def features(signals) -> np.ndarray:
        """Graph-major node features from an ``N x T`` signal matrix."""
        signals = np.asarray(signals, dtype=float)
        if signals.ndim == 1:
            signals = signals[:, None]
        return signals.T.reshape(-1, 1)

    def mean_pool(self, H):
        return ad.spmm(self.pool, H)


def _as_batch(g) -> GraphBatch:
    if isinstance(g, GraphBatch):
        return g
    return GraphBatch.from_snapshots(g)


class _Layer:
    def parameters(self):
        return [getattr(self, name) for name in self.param_names]

    def n_parameters(self) -> int:
        return sum(p.value.size for p in self.parameters())


class DenseLayer(_Layer):
    """``activation(x W^T + b)`` over a batch of row vectors."""

    param_names = ("W", "b")

    def __init__(self, n_in, n_out, activation=Activation.IDENTITY, rng=None):
        rng = np.random.default_rng() if rng is None else rng
        self.W = ad.Tensor(glorot_uniform(rng, n_out, n_in), requires_grad=True)
        self.b = ad.Tensor(np.zeros((1, n_out)), requires_grad=True)
        self.activation = Activation(activation)

    @property
    def n_in(self):
        return self.W.cols

    @property
    def n_out(self):
        return self.W.rows

    def __call__(self, x):
        x = x if isinstance(x, ad.Tensor) else ad.Tensor(np.atleast_2d(x))
        if x.cols != self.n_in:
            raise ShapeMismatch(f"dense layer expects {self.n_in} inputs, got {x.cols}")
        return self.activation(ad.linear(x, self.W, self.b))


class _MessagePassing(_Layer):
    param_names = ("W_self", "W_neigh", "b")

    def __init__(self, n_in, n_out, activation=Activation.IDENTITY, rng=None):
        rng = np.random.default_rng() if rng is None else rng
        self.W_self = ad.Tensor(glorot_uniform(rng, n_out, n_in), requires_grad=True)
        self.W_neigh = ad.Tensor(glorot_uniform(rng, n_out, n_in), requires_grad=True)
        self.b = ad.Tensor(np.zeros((1, n_out)), requires_grad=True)
        self.activation = Activation(activation)

    @property
    def n_in(self):
        return self.W_self.cols

    @property
    def n_out(self):
        return self.W_self.rows

    def _aggregation(self, batch: GraphBatch):
        raise NotImplementedError

    def __call__(self, H, g):
        batch = _as_batch(g)
        H = H if isinstance(H, ad.Tensor) else ad.Tensor(H)
        if H.rows != batch.n_graphs * batch.n_nodes or H.cols != self.n_in:
            raise ShapeMismatch(
                f"features {H.shape} for {batch.n_graphs} graph(s) of "
                f"{batch.n_nodes} nodes with {self.n_in} inputs"
            )
        messages = ad.spmm(self._aggregation(batch), H)
        out = ad.add(ad.linear(H, self.W_self, self.b), ad.linear(messages, self.W_neigh))
        return self.activation(out)


class GraphConvLayer(_MessagePassing):
    """Row i: ``W_self h_i + W_neigh sum_j w_ij h_j + b``."""

    def _aggregation(self, batch):
        return batch.adjacency


class SageLayer(_MessagePassing):
    """Row i: ``W_self h_i + W_neigh mean_{j in N(i)} h_j + b``.

    Aggregates over the full neighborhood; isolated nodes get no neighbor term.
    """

    def _aggregation(self, batch):
        return batch.mean_adjacency


class GcnLayer(_Layer):
    """Row i: ``W sum_j a_ij h_j + b`` with the symmetric-normalized adjacency."""

    param_names = ("W", "b")

    def __init__(self, n_in, n_out, activation=Activation.IDENTITY, rng=None):
        rng = np.random.default_rng() if rng is None else rng
        self.W = ad.Tensor(glorot_uniform(rng, n_out, n_in), requires_grad=True)
        self.b = ad.Tensor(np.zeros((1, n_out)), requires_grad=True)
        self.activation = Activation(activation)

    def __call__(self, H, g):
        batch = _as_batch(g)
        H = H if isinstance(H, ad.Tensor) else ad.Tensor(H)
        if H.rows != batch.n_graphs * batch.n_nodes or H.cols != self.W.cols:
            raise ShapeMismatch(f"features {H.shape} do not match the batch and layer")
        return self.activation(ad.linear(ad.spmm(batch.normalized_adjacency, H), self.W, self.b))


class Stack(_Layer):
    """Sequential dense layers."""

    def __init__(self, layers):
        self.layers = list(layers)

    def __call__(self, x):
        for layer in self.layers:
            x = layer(x)
        return x

    def parameters(self):
        return [p for layer in self.layers for p in layer.parameters()]


def dense_stack(widths, activation, rng, last_activation=None) -> Stack:
    """Dense layers between consecutive ``widths``."""
    last_activation = activation if last_activation is None else last_activation
    layers = []
    for i, (a, b) in enumerate(zip(widths[:-1], widths[1:])):
        act = last_activation if i == len(widths) - 2 else activation
        layers.append(DenseLayer(a, b, act, rng))
    return Stack(layers)
