"""Classical reconstruction and forecasting baselines."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.sparse.csgraph import shortest_path

from . import autodiff as ad
from .exceptions import DimensionMismatch, Unfillable
from .graphcore import GraphSequence, laplacian
from .layers import Activation, GcnLayer, GraphBatch

__all__ = [
    "TgsConfig",
    "TgssConfig",
    "SmoothnessResult",
    "smoothness_objective",
    "tgs_reconstruct",
    "tgss_reconstruct",
    "nni_reconstruct",
    "GcnAutoencoder",
    "gcnae_reconstruct",
    "persistence_forecast",
    "gcnae_forecast",
]


@dataclass
class TgsConfig:
    gamma: float = 10.0
    max_outer: int = 500
    max_backtrack: int = 40
    grad_tol: float = 1e-6
    armijo_c: float = 1e-4
    shrink: float = 0.5

    def __post_init__(self):
        if self.gamma <= 0:
            raise ValueError("gamma must be positive")
        if self.grad_tol <= 0 or self.armijo_c <= 0 or not 0 < self.shrink < 1:
            raise ValueError("tolerances must be positive and shrink in (0, 1)")


@dataclass
class TgssConfig(TgsConfig):
    sobolev_epsilon: float = 0.1
    sobolev_beta: int = 1

    def __post_init__(self):
        super().__post_init__()
        if self.sobolev_epsilon < 0 or self.sobolev_beta < 1:
            raise ValueError("Sobolev epsilon must be >= 0 and beta >= 1")


@dataclass
class SmoothnessResult:
    estimate: np.ndarray
    converged: bool
    iterations: int
    objective: list = field(default_factory=list)
    notes: list = field(default_factory=list)


def _smoothing_operators(seq: GraphSequence, epsilon=0.0, beta=1) -> np.ndarray:
    """Stacked ``(T-1) x N x N`` smoothing matrices; entry t-1 acts on ``x(t) - x(t-1)``."""
    cache = {}
    n = seq.n_nodes
    ops = np.empty((max(len(seq) - 1, 0), n, n))
    for t in range(1, len(seq)):
        W = seq[t].weights
        key = W.tobytes()
        if key not in cache:
            Q = laplacian(W) + epsilon * np.eye(n)
            cache[key] = np.linalg.matrix_power(Q, beta) if beta > 1 else Q
        ops[t - 1] = cache[key]
    return ops


def smoothness_objective(X, Y, J, ops, gamma) -> float:
    """Sum of ``d_t^T Q_t d_t`` over temporal differences plus ``gamma ||J*X - Y||_F^2``."""
    D = np.diff(X, axis=1)
    smooth = float(np.einsum("it,tij,jt->", D, ops, D))
    R = J * X - Y
    return smooth + gamma * float(np.sum(R * R))


def _gradient(X, Y, J, ops, gamma):
    D = np.diff(X, axis=1)
    grad = 2.0 * gamma * J * (J * X - Y)
    Q = 2.0 * np.einsum("tij,jt->it", ops, D)
    grad[:, 1:] += Q
    grad[:, :-1] -= Q
    return grad


def _check_inputs(seq, Y, J):
    Y = np.asarray(Y, dtype=float)
    J = np.asarray(getattr(J, "J", J), dtype=float)
    if Y.shape != (seq.n_nodes, len(seq)) or J.shape != Y.shape:
        raise DimensionMismatch(
            f"data {Y.shape} / mask {J.shape} for sequence {(seq.n_nodes, len(seq))}"
        )
    return Y, J


def _prefix_length(J, tau):
    if tau is not None:
        return tau
    full = np.all(J == 1, axis=0)
    return int(np.argmin(full)) if not full.all() else J.shape[1]


def _projected_gradient(seq, Y, J, cfg: TgsConfig, ops, tau) -> SmoothnessResult:
    """Gradient projection with Barzilai-Borwein trial steps and Armijo backtracking.

    Columns before ``tau`` are held at their observed values.
    """
    fixed = np.zeros(Y.shape, dtype=bool)
    fixed[:, :tau] = True
    X = Y.copy()
    f = smoothness_objective(X, Y, J, ops, cfg.gamma)
    g = _gradient(X, Y, J, ops, cfg.gamma)
    g[fixed] = 0.0
    history = [f]
    step = 1.0
    iterations = 0
    while iterations < cfg.max_outer:
        if np.max(np.abs(g), initial=0.0) < cfg.grad_tol:
            break
        gg = float(np.sum(g * g))
        alpha = step
        for _ in range(cfg.max_backtrack):
            X_new = X - alpha * g
            f_new = smoothness_objective(X_new, Y, J, ops, cfg.gamma)
            if f_new <= f - cfg.armijo_c * alpha * gg:
                break
            alpha *= cfg.shrink
        else:
            break  # no acceptable step; keep the current iterate
        g_new = _gradient(X_new, Y, J, ops, cfg.gamma)
        g_new[fixed] = 0.0
        s = X_new - X
        sy = float(np.sum(s * (g_new - g)))
        step = float(np.sum(s * s)) / sy if sy > 0 else 2.0 * alpha
        X, f, g = X_new, f_new, g_new
        history.append(f)
        iterations += 1
    converged = np.max(np.abs(g), initial=0.0) < cfg.grad_tol
    return SmoothnessResult(X, bool(converged), iterations, history)


def tgs_reconstruct(seq: GraphSequence, Y, J, cfg: TgsConfig = None, tau=None,
                    return_info=False):
    """Temporal graph smoothness reconstruction.

    Minimizes the Laplacian smoothness of temporal differences plus a
    weighted data-fit term. For time-varying graphs the difference
    ``x(t) - x(t-1)`` uses the Laplacian of snapshot t.
    """
    cfg = TgsConfig() if cfg is None else cfg
    Y, J = _check_inputs(seq, Y, J)
    ops = _smoothing_operators(seq)
    result = _projected_gradient(seq, Y, J, cfg, ops, _prefix_length(J, tau))
    if len({s.weights.tobytes() for s in seq.snapshots}) > 1:
        result.notes.append("time-varying graph: per-snapshot Laplacians used")
    return (result.estimate, result) if return_info else result.estimate


def tgss_reconstruct(seq: GraphSequence, Y, J, cfg: TgssConfig = None, tau=None,
                     return_info=False):
    """TGS with the Sobolev operator ``(L_t + eps I)^beta`` in place of ``L_t``."""
    cfg = TgssConfig() if cfg is None else cfg
    Y, J = _check_inputs(seq, Y, J)
    ops = _smoothing_operators(seq, cfg.sobolev_epsilon, cfg.sobolev_beta)
    result = _projected_gradient(seq, Y, J, cfg, ops, _prefix_length(J, tau))
    return (result.estimate, result) if return_info else result.estimate


def nni_reconstruct(seq: GraphSequence, Y, J, coords=None) -> np.ndarray:
    """Fill each hidden entry from the nearest observed node at the same step.

    Nearness is hop distance on that step's graph, ties broken by Euclidean
    distance (when ``coords`` is given) and then node index. A node with no
    reachable observed node takes its own value at the nearest observed time,
    earlier time first on ties.
    """
    Y, J = _check_inputs(seq, Y, J)
    coords = None if coords is None else np.asarray(coords, dtype=float)
    X = Y.copy()
    observed = J == 1
    n, T = Y.shape
    for t in range(T):
        hidden = np.flatnonzero(~observed[:, t])
        if hidden.size == 0:
            continue
        hops = shortest_path(seq[t].weights > 0, unweighted=True, directed=False)
        c = None
        if coords is not None and coords.size:
            c = coords[t] if coords.ndim == 3 else coords
        obs_nodes = np.flatnonzero(observed[:, t])
        for i in hidden:
            d = hops[i, obs_nodes]
            finite = np.isfinite(d)
            if finite.any():
                best = d[finite].min()
                cands = obs_nodes[finite][d[finite] == best]
                if c is not None and cands.size > 1:
                    eu = np.linalg.norm(c[cands] - c[i], axis=1)
                    order = np.lexsort((cands, eu))
                    chosen = cands[order[0]]
                else:
                    chosen = cands.min()
                X[i, t] = Y[chosen, t]
                continue
            times = np.flatnonzero(observed[i])
            if times.size == 0:
                raise Unfillable(f"node {i} has no observed neighbor at t={t} and no observation")
            gap = np.abs(times - t)
            X[i, t] = Y[i, times[np.argmin(gap)]]  # argmin takes the earlier time on ties
    return X


class GcnAutoencoder:
    """Four normalized graph-convolution layers: two encode to width 8, two decode to one output."""

    def __init__(self, width=8, seed=0):
        rng = np.random.default_rng(seed)
        self.layers = [
            GcnLayer(1, width, Activation.LEAKY_RELU, rng),
            GcnLayer(width, width, Activation.LEAKY_RELU, rng),
            GcnLayer(width, width, Activation.LEAKY_RELU, rng),
            GcnLayer(width, 1, Activation.IDENTITY, rng),
        ]

    def parameters(self):
        return [p for layer in self.layers for p in layer.parameters()]

    def __call__(self, batch: GraphBatch, Y):
        H = ad.Tensor(GraphBatch.features(Y))
        for layer in self.layers:
            H = layer(H, batch)
        return H

    def predict(self, batch: GraphBatch, Y) -> np.ndarray:
        out = self(batch, Y).value
        return out.reshape(batch.n_graphs, batch.n_nodes).T

    def loss(self, batch: GraphBatch, Y, J) -> ad.Tensor:
        """MSE over observed entries only."""
        Y = np.asarray(Y, dtype=float)
        J = np.asarray(J, dtype=float)
        target = ad.Tensor(GraphBatch.features(Y * J))
        weight = ad.Tensor(GraphBatch.features(J))
        out = ad.hadamard(self(batch, Y * J), weight)
        return ad.scale(ad.mse(out, target), J.size / max(J.sum(), 1.0))

    def fit(self, batch: GraphBatch, Y, J, epochs=500, lr=1e-2):
        opt = ad.Adam(self.parameters(), lr=lr)
        history = []
        for _ in range(epochs):
            opt.zero_grad()
            with ad.Tape() as tape:
                loss = self.loss(batch, Y, J)
            tape.backward(loss)
            opt.step()
            history.append(loss.item())
        return history


def gcnae_reconstruct(seq: GraphSequence, Y, J, epochs=500, lr=1e-2, seed=0,
                      return_history=False):
    """Graph-convolution autoencoder fitted to observed entries; hidden entries read from its output."""
    Y, J = _check_inputs(seq, Y, J)
    batch = GraphBatch.from_snapshots(seq.snapshots)
    model = GcnAutoencoder(seed=seed)
    history = model.fit(batch, Y, J, epochs=epochs, lr=lr)
    X_hat = model.predict(batch, Y * J)
    return (X_hat, history) if return_history else X_hat


def persistence_forecast(X_prefix, P: int) -> np.ndarray:
    """Repeat the last observed column for P steps."""
    X_prefix = np.asarray(X_prefix, dtype=float)
    return np.repeat(X_prefix[:, -1:], P, axis=1)


def gcnae_forecast(seq_prefix: GraphSequence, P: int, epochs=500, lr=1e-2, seed=0) -> np.ndarray:
    """Autoencode the last observed snapshot with a GCN trained on the prefix; hold for P steps."""
    X = seq_prefix.signals
    model = GcnAutoencoder(seed=seed)
    model.fit(GraphBatch.from_snapshots(seq_prefix.snapshots), X, np.ones_like(X), epochs, lr)
    last = GraphBatch.from_snapshots(seq_prefix.snapshots[-1:])
    x_last = model.predict(last, X[:, -1:])
    return np.repeat(x_last, P, axis=1)
