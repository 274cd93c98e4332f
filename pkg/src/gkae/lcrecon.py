"""Sampling masks and the latent-consistency (LC) autoencoder for inpainting.

The LC encoder reads masked snapshots and is trained to land on the
embeddings a pre-trained GKAE assigns to the same time steps: encoder
embeddings for the fully observed prefix, Koopman rollouts after it.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .exceptions import DimensionMismatch, MissingTargets, RateOutOfRange
from .graphcore import GraphKind, GraphSequence, GraphSnapshot
from .koopman import GkaeModel, encode_graphs, predict_embeddings
from .layers import Activation, GraphBatch, SageLayer, dense_stack

__all__ = [
    "SamplingMask",
    "make_mask",
    "apply_mask",
    "LcConfig",
    "LcModel",
    "lc_encode",
    "lc_decode",
    "compute_targets",
    "loss_lc",
    "train_lc",
    "reconstruct",
]


@dataclass(eq=False)
class SamplingMask:
    J: np.ndarray  # N x T, 1 = observed
    tau: int
    rate: float

    def __post_init__(self):
        J = np.asarray(self.J)
        if J.ndim != 2:
            raise DimensionMismatch("sampling matrix must be N x T")
        if not np.all((J == 0) | (J == 1)):
            raise ValueError("sampling matrix entries must be 0 or 1")
        if not np.all(J[:, : self.tau] == 1):
            raise ValueError("columns before tau must be fully observed")
        self.J = J.astype(float)

    @property
    def shape(self):
        return self.J.shape

    @property
    def hidden(self) -> np.ndarray:
        """Boolean N x T matrix of hidden entries."""
        return self.J == 0


def make_mask(n_nodes, n_steps, tau, rate, seed=0, always_masked=()) -> SamplingMask:
    """Hide ``floor(rate * N)`` uniformly drawn nodes in every column ``t >= tau``.

    Nodes in ``always_masked`` are hidden in every such column and count
    toward the per-column total; the rest of the quota is drawn from the
    other nodes.
    """
    if not 0 <= rate < 1:
        raise RateOutOfRange(f"masking rate {rate} outside [0, 1)")
    if not 0 <= tau < n_steps:
        raise ValueError(f"tau={tau} must lie in [0, {n_steps})")
    always = np.asarray(sorted(set(always_masked)), dtype=int)
    k = max(int(np.floor(rate * n_nodes)), len(always))
    rng = np.random.default_rng(seed)
    J = np.ones((n_nodes, n_steps))
    others = np.setdiff1d(np.arange(n_nodes), always)
    for t in range(tau, n_steps):
        J[always, t] = 0.0
        extra = k - len(always)
        if extra > 0:
            J[rng.choice(others, size=extra, replace=False), t] = 0.0
    return SamplingMask(J, tau, rate)


def apply_mask(seq: GraphSequence, mask: SamplingMask) -> GraphSequence:
    """Zero hidden signals and drop every edge touching a hidden node."""
    J = mask.J
    if J.shape != (seq.n_nodes, len(seq)):
        raise DimensionMismatch(f"mask {J.shape} for sequence {(seq.n_nodes, len(seq))}")
    snaps = []
    for t, snap in enumerate(seq.snapshots):
        j = J[:, t]
        snaps.append(GraphSnapshot(snap.signals * j, snap.weights * np.outer(j, j)))
    kind = GraphKind.TYPE3 if np.any(J == 0) else seq.kind
    return GraphSequence(snaps, kind, seq.dt)


@dataclass
class LcConfig:
    n_nodes: int
    embed_dim: int = 8
    decoder_hidden: int = 32
    beta1: float = 1.0
    beta2: float = 1e-2
    epochs: int = 200
    learning_rate: float = 1e-2
    seed: int = 0


class LcModel:
    """Two SAGE layers plus mean pooling, then a two-layer dense decoder."""

    def __init__(self, config: LcConfig):
        self.config = config
        c = config
        rng = np.random.default_rng(c.seed)
        self.encoder = [
            SageLayer(1, c.embed_dim, Activation.LEAKY_RELU, rng),
            SageLayer(c.embed_dim, c.embed_dim, Activation.LEAKY_RELU, rng),
        ]
        self.decoder = dense_stack(
            [c.embed_dim, c.decoder_hidden, c.n_nodes],
            Activation.LEAKY_RELU,
            rng,
            last_activation=Activation.IDENTITY,
        )

    def parameters(self):
        return [p for layer in self.encoder for p in layer.parameters()] + self.decoder.parameters()

    def n_parameters(self) -> int:
        return sum(p.value.size for p in self.parameters())


def _encode(model: LcModel, batch: GraphBatch, Y):
    if batch.n_nodes != model.config.n_nodes:
        raise DimensionMismatch(
            f"LC model expects {model.config.n_nodes} nodes, graph has {batch.n_nodes}"
        )
    H = ad.Tensor(GraphBatch.features(Y))
    for layer in model.encoder:
        H = layer(H, batch)
    return batch.mean_pool(H)


def lc_encode(model: LcModel, masked) -> np.ndarray:
    """Embeddings of masked snapshot(s): a b-vector, or T x b rows for a sequence."""
    if isinstance(masked, GraphSnapshot):
        batch = GraphBatch.from_snapshots(masked)
        return _encode(model, batch, masked.signals).value[0].copy()
    batch = GraphBatch.from_snapshots(masked.snapshots)
    return _encode(model, batch, masked.signals).value


def lc_decode(model: LcModel, g) -> np.ndarray:
    g = np.asarray(g, dtype=float)
    if g.shape[-1] != model.config.embed_dim:
        raise DimensionMismatch(f"embedding width {g.shape[-1]}")
    out = model.decoder(ad.Tensor(np.atleast_2d(g))).value
    return out[0] if g.ndim == 1 else out


def compute_targets(gkae: GkaeModel, masked_seq: GraphSequence, tau: int,
                    reference: GraphSequence = None) -> np.ndarray:
    """Target embeddings: encoder output for t < tau, Koopman rollout from t = tau - 1 after.

    Passing the unmasked ``reference`` sequence instead encodes every step of
    it directly. That variant reads the hidden entries and is only a
    diagnostic upper bound.
    """
    T = len(masked_seq)
    if not 0 < tau < T:
        raise MissingTargets(f"tau={tau} leaves no observed prefix or no target window")
    if reference is not None:
        if len(reference) != T or reference.n_nodes != masked_seq.n_nodes:
            raise DimensionMismatch("reference sequence does not match the masked sequence")
        return encode_graphs(gkae, GraphBatch.from_snapshots(reference.snapshots),
                             reference.signals).value
    prefix = masked_seq.snapshots[:tau]
    G = encode_graphs(gkae, GraphBatch.from_snapshots(prefix), masked_seq.signals[:, :tau]).value
    future = predict_embeddings(gkae, G[-1], T - tau)
    return np.vstack([G, future])


def loss_lc(model: LcModel, gkae: GkaeModel, masked_seq: GraphSequence, targets, tau: int,
            batch: GraphBatch = None, decoded_targets=None) -> ad.Tensor:
    """``beta1 (L_latent + L_cosine) + beta2 L_par``; GKAE parameters are read only.

    Squared norms are element means per step, summed over steps.
    """
    T = len(masked_seq)
    if targets is None:
        raise MissingTargets("target embeddings are required")
    targets = np.asarray(targets, dtype=float)
    if targets.shape != (T, model.config.embed_dim):
        raise MissingTargets(f"targets of shape {targets.shape} for {T} steps")
    batch = GraphBatch.from_snapshots(masked_seq.snapshots) if batch is None else batch
    if decoded_targets is None:
        decoded_targets = gkae.graph_decoder(ad.Tensor(targets[tau:])).value
    c = model.config
    G_bar = _encode(model, batch, masked_seq.signals)
    target = ad.Tensor(targets)
    latent = ad.scale(ad.mse(G_bar, target), T)
    cosine = ad.sub(ad.Tensor(np.array([[float(T)]])), ad.sum_(ad.cosine_rows(G_bar, target)))
    decoded = model.decoder(ad.slice_rows(G_bar, tau, T))
    par = ad.scale(ad.mse(decoded, ad.Tensor(decoded_targets)), T - tau)
    return ad.add(ad.scale(ad.add(latent, cosine), c.beta1), ad.scale(par, c.beta2))


def train_lc(model: LcModel, gkae: GkaeModel, masked_seq: GraphSequence, mask: SamplingMask,
             epochs: int = None, callback=None, targets=None) -> list:
    """Adam on the LC loss. Returns per-epoch losses; ``gkae`` is not modified."""
    epochs = model.config.epochs if epochs is None else epochs
    if targets is None:
        targets = compute_targets(gkae, masked_seq, mask.tau)
    decoded_targets = gkae.graph_decoder(ad.Tensor(targets[mask.tau:])).value
    batch = GraphBatch.from_snapshots(masked_seq.snapshots)
    opt = ad.Adam(model.parameters(), lr=model.config.learning_rate)
    history = []
    for epoch in range(epochs):
        opt.zero_grad()
        with ad.Tape() as tape:
            loss = loss_lc(model, gkae, masked_seq, targets, mask.tau, batch, decoded_targets)
        tape.backward(loss)
        opt.step()
        history.append(loss.item())
        if callback is not None:
            callback(epoch, loss.item())
    return history


def reconstruct(model: LcModel, masked_seq: GraphSequence) -> np.ndarray:
    """Decoded signal estimates for every step, as N x T."""
    return lc_decode(model, lc_encode(model, masked_seq)).T
