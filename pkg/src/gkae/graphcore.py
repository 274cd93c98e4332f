"""Graph snapshots, Laplacians, spectra and graph construction rules."""

from __future__ import annotations

import enum
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .exceptions import DimensionMismatch, KTooLarge, NotSymmetric

__all__ = [
    "GraphKind",
    "GraphSnapshot",
    "GraphSequence",
    "Spectrum",
    "laplacian",
    "eigendecompose",
    "jacobi_eigh",
    "gft",
    "igft",
    "smoothness_s2",
    "temporal_smoothness",
    "build_knn_graph",
    "build_radius_graph",
    "is_connected",
]


class GraphKind(str, enum.Enum):
    TYPE1 = "type1"  # signals vary
    TYPE2 = "type2"  # signals and weights vary
    TYPE3 = "type3"  # signals, weights and edge set vary


def _edges_from_weights(weights: np.ndarray) -> frozenset:
    rows, cols = np.nonzero(np.triu(weights, k=1) > 0)
    return frozenset(zip(rows.tolist(), cols.tolist()))


@dataclass(frozen=True, eq=False)
class GraphSnapshot:
    """One time step of a weighted undirected graph with a scalar signal per node.

    ``edges`` holds pairs ``(l, m)`` with ``l < m`` and is derived from
    ``weights`` when omitted.
    """

    signals: np.ndarray
    weights: np.ndarray
    edges: frozenset = field(default=None)

    def __post_init__(self):
        signals = np.asarray(self.signals, dtype=float).reshape(-1)
        weights = np.asarray(self.weights, dtype=float)
        n = signals.shape[0]
        if weights.shape != (n, n):
            raise DimensionMismatch(
                f"weights shape {weights.shape} does not match {n} signals"
            )
        if np.any(weights < 0):
            raise ValueError("edge weights must be nonnegative")
        if not np.array_equal(weights, weights.T):
            raise NotSymmetric("weight matrix must be symmetric")
        if np.any(np.diag(weights) != 0):
            raise ValueError("weight matrix diagonal must be zero")
        derived = _edges_from_weights(weights)
        if self.edges is not None:
            given = frozenset(tuple(sorted(e)) for e in self.edges)
            if given != derived:
                raise ValueError("edge set disagrees with nonzero weights")
        signals.flags.writeable = False
        weights.flags.writeable = False
        object.__setattr__(self, "signals", signals)
        object.__setattr__(self, "weights", weights)
        object.__setattr__(self, "edges", derived)

    @property
    def n_nodes(self) -> int:
        return self.signals.shape[0]

    def with_signals(self, signals) -> "GraphSnapshot":
        return GraphSnapshot(signals, self.weights)

    def neighbors(self, node: int) -> np.ndarray:
        return np.flatnonzero(self.weights[node] > 0)


@dataclass(eq=False)
class GraphSequence:
    """Ordered snapshots over a fixed node set."""

    snapshots: list
    kind: GraphKind = GraphKind.TYPE3
    dt: float = 1.0

    def __post_init__(self):
        self.kind = GraphKind(self.kind)
        if not self.snapshots:
            raise ValueError("a graph sequence needs at least one snapshot")
        n = self.snapshots[0].n_nodes
        for snap in self.snapshots:
            if snap.n_nodes != n:
                raise DimensionMismatch("all snapshots must share the node count")
        first = self.snapshots[0]
        if self.kind is GraphKind.TYPE1:
            for snap in self.snapshots[1:]:
                if not np.array_equal(snap.weights, first.weights):
                    raise ValueError("Type-1 sequences need identical weights")
        elif self.kind is GraphKind.TYPE2:
            for snap in self.snapshots[1:]:
                if snap.edges != first.edges:
                    raise ValueError("Type-2 sequences need identical edge sets")

    def __len__(self):
        return len(self.snapshots)

    def __getitem__(self, item):
        if isinstance(item, slice):
            return GraphSequence(self.snapshots[item], self.kind, self.dt)
        return self.snapshots[item]

    @property
    def n_nodes(self) -> int:
        return self.snapshots[0].n_nodes

    @property
    def signals(self) -> np.ndarray:
        """Signals as an N x T matrix."""
        return np.stack([s.signals for s in self.snapshots], axis=1)

    @property
    def weights(self) -> np.ndarray:
        """Weights as a T x N x N array."""
        return np.stack([s.weights for s in self.snapshots])

    def with_signals(self, X) -> "GraphSequence":
        X = np.asarray(X, dtype=float)
        if X.shape != (self.n_nodes, len(self)):
            raise DimensionMismatch(
                f"signal matrix {X.shape} does not match {(self.n_nodes, len(self))}"
            )
        snaps = [s.with_signals(X[:, t]) for t, s in enumerate(self.snapshots)]
        return GraphSequence(snaps, self.kind, self.dt)


@dataclass(frozen=True, eq=False)
class Spectrum:
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray


def laplacian(g) -> np.ndarray:
    """Combinatorial Laplacian ``D - W`` of a snapshot or a raw weight matrix."""
    W = g.weights if isinstance(g, GraphSnapshot) else np.asarray(g, dtype=float)
    return np.diag(W.sum(axis=1)) - W


def jacobi_eigh(A, tol=1e-12, max_sweeps=100):
    """Cyclic Jacobi eigensolver for a real symmetric matrix.

    Sweeps over all off-diagonal pairs, annihilating each with a plane
    rotation, until the off-diagonal Frobenius norm falls below
    ``tol * max(1, ||A||_F)``.

    Returns
    -------
    eigenvalues : ndarray, ascending
    eigenvectors : ndarray, columns orthonormal
    """
    A = np.array(A, dtype=float)
    n = A.shape[0]
    V = np.eye(n)
    threshold = tol * max(1.0, np.linalg.norm(A))
    off_diag = ~np.eye(n, dtype=bool)
    for _ in range(max_sweeps):
        if np.linalg.norm(A[off_diag]) < threshold:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = A[p, q]
                if abs(apq) < 1e-300:
                    continue
                theta = (A[q, q] - A[p, p]) / (2.0 * apq)
                if abs(theta) > 1e150:
                    t = 0.5 / theta  # theta^2 would overflow
                else:
                    t = np.copysign(1.0, theta) / (abs(theta) + np.sqrt(theta * theta + 1.0))
                c = 1.0 / np.sqrt(t * t + 1.0)
                s = t * c
                col_p = A[:, p].copy()
                col_q = A[:, q]
                A[:, p] = c * col_p - s * col_q
                A[:, q] = s * col_p + c * col_q
                row_p = A[p, :].copy()
                row_q = A[q, :]
                A[p, :] = c * row_p - s * row_q
                A[q, :] = s * row_p + c * row_q
                A[p, q] = A[q, p] = 0.0
                v_p = V[:, p].copy()
                v_q = V[:, q]
                V[:, p] = c * v_p - s * v_q
                V[:, q] = s * v_p + c * v_q
    else:
        raise ArithmeticError("Jacobi iteration did not converge")
    w = np.diag(A).copy()
    order = np.argsort(w, kind="stable")
    w, V = w[order], V[:, order]
    # deterministic sign: largest-magnitude entry of each vector positive
    idx = np.argmax(np.abs(V), axis=0)
    signs = np.sign(V[idx, np.arange(n)])
    signs[signs == 0] = 1.0
    return w, V * signs


def eigendecompose(L, sym_tol=1e-10) -> Spectrum:
    L = np.asarray(L, dtype=float)
    if L.ndim != 2 or L.shape[0] != L.shape[1]:
        raise DimensionMismatch(f"expected a square matrix, got {L.shape}")
    if L.size and np.max(np.abs(L - L.T)) > sym_tol:
        raise NotSymmetric(f"matrix asymmetry exceeds {sym_tol}")
    w, V = jacobi_eigh(0.5 * (L + L.T))
    return Spectrum(w, V)


def _check_vector(spec: Spectrum, x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.shape != (spec.eigenvectors.shape[0],):
        raise DimensionMismatch(
            f"signal of shape {x.shape} for a {spec.eigenvectors.shape[0]}-node graph"
        )
    return x


def gft(spec: Spectrum, x) -> np.ndarray:
    return spec.eigenvectors.T @ _check_vector(spec, x)


def igft(spec: Spectrum, xhat) -> np.ndarray:
    return spec.eigenvectors @ _check_vector(spec, xhat)


def smoothness_s2(g, x) -> float:
    """Laplacian quadratic form ``x^T L x``."""
    L = laplacian(g)
    x = np.asarray(x, dtype=float)
    if x.shape != (L.shape[0],):
        raise DimensionMismatch(f"signal of shape {x.shape} for {L.shape[0]} nodes")
    return float(x @ L @ x)


def temporal_smoothness(seq: GraphSequence, X) -> float:
    """Sum over t >= 1 of the quadratic form of ``x(t) - x(t-1)`` on snapshot t."""
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[0] != seq.n_nodes:
        raise DimensionMismatch(f"signal matrix {X.shape} for {seq.n_nodes} nodes")
    if X.shape[1] != len(seq):
        raise DimensionMismatch(f"{X.shape[1]} columns for {len(seq)} snapshots")
    if X.shape[1] < 2:
        raise DimensionMismatch("temporal smoothness needs at least two time steps")
    D = np.diff(X, axis=1)
    total = 0.0
    for t in range(1, X.shape[1]):
        total += smoothness_s2(seq[t], D[:, t - 1])
    return total


def _pairwise_distances(coords) -> np.ndarray:
    coords = np.asarray(coords, dtype=float)
    if coords.ndim == 1:
        coords = coords[:, None]
    diff = coords[:, None, :] - coords[None, :, :]
    return np.sqrt(np.sum(diff * diff, axis=-1))


def build_knn_graph(coords, k: int, signals=None) -> GraphSnapshot:
    """Symmetric unit-weight k-nearest-neighbor graph.

    Ties in distance go to the lower node index.
    """
    dist = _pairwise_distances(coords)
    n = dist.shape[0]
    if k < 1 or k >= n:
        raise KTooLarge(f"k={k} must lie in [1, {n - 1}]")
    W = np.zeros((n, n))
    for i in range(n):
        d = dist[i].copy()
        d[i] = np.inf
        nearest = np.argsort(d, kind="stable")[:k]
        W[i, nearest] = 1.0
    W = np.maximum(W, W.T)
    return GraphSnapshot(np.zeros(n) if signals is None else signals, W)


def radius_weights(coords, r: float) -> np.ndarray:
    dist = _pairwise_distances(coords)
    W = (dist <= r).astype(float)
    np.fill_diagonal(W, 0.0)
    return W


def build_radius_graph(coords, r: float, signals=None) -> GraphSnapshot:
    """Unit-weight graph joining nodes within Euclidean distance ``r``."""
    if r <= 0:
        raise ValueError("radius must be positive")
    W = radius_weights(coords, r)
    n = W.shape[0]
    return GraphSnapshot(np.zeros(n) if signals is None else signals, W)


def is_connected(g) -> bool:
    W = g.weights if isinstance(g, GraphSnapshot) else np.asarray(g)
    n = W.shape[0]
    if n == 0:
        return True
    seen = np.zeros(n, dtype=bool)
    seen[0] = True
    queue = deque([0])
    while queue:
        i = queue.popleft()
        for j in np.flatnonzero(W[i] > 0):
            if not seen[j]:
                seen[j] = True
                queue.append(j)
    return bool(seen.all())
