"""Graph Koopman autoencoder: graph encoder, Koopman encoder/matrix/decoder, graph decoder.

Embeddings, latent states and signals are handled as row vectors, so one
latent step is ``h @ K.T``.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass

import numpy as np

from . import autodiff as ad
from .exceptions import DimensionMismatch, FormatError, LTooLarge
from .graphcore import GraphSequence, GraphSnapshot
from .layers import (
    Activation,
    GraphBatch,
    GraphConvLayer,
    SageLayer,
    dense_stack,
    glorot_uniform,
)

__all__ = [
    "GkaeConfig",
    "TrainConfig",
    "GkaeModel",
    "encode_graph",
    "encode_graphs",
    "koopman_encode",
    "koopman_decode",
    "koopman_advance",
    "forward_chain",
    "loss_gkae",
    "train_gkae",
    "predict_sequence",
    "predict_embeddings",
    "save_model",
    "load_model",
    "MODEL_FORMAT",
]

MODEL_FORMAT = "gkae-model/1"
EMBED_SCALE_FLOOR = 1e-2


@dataclass
class GkaeConfig:
    n_nodes: int
    embed_dim: int = 8
    koopman_dim: int = 8
    hidden_dim: int = 16
    koopman_layers: int = 6
    decoder_hidden: int = 32
    koopman_init: str = "identity"  # or "glorot"
    seed: int = 0


@dataclass
class TrainConfig:
    epochs: int = 200
    linearity_length: int = 50
    learning_rate: float = 1e-2
    seed: int = 0
    # When true the Koopman branch sees embeddings as constants, so the graph
    # encoder is shaped by the reconstruction term alone.
    detach_koopman_input: bool = True

    def __post_init__(self):
        if self.epochs <= 0:
            raise ValueError("epochs must be positive")
        if self.linearity_length < 1:
            raise ValueError("linearity length must be at least 1")


class GkaeModel:
    """Parameters of the five GKAE components.

    The Koopman encoder and decoder use tanh on their hidden layers and a
    linear output layer; the graph encoder and decoder use LeakyReLU with a
    linear decoder output.
    """

    def __init__(self, config: GkaeConfig):
        self.config = config
        c = config
        rng = np.random.default_rng(c.seed)
        b, M, H = c.embed_dim, c.koopman_dim, c.hidden_dim
        self.graph_encoder = [
            GraphConvLayer(1, b, Activation.LEAKY_RELU, rng),
            SageLayer(b, b, Activation.LEAKY_RELU, rng),
        ]
        inner = [H] * (c.koopman_layers - 1)
        self.koopman_encoder = dense_stack(
            [b, *inner, M], Activation.TANH, rng, last_activation=Activation.IDENTITY
        )
        K0 = np.eye(M) if c.koopman_init == "identity" else glorot_uniform(rng, M, M)
        self.K = ad.Tensor(K0, requires_grad=True, name="K")
        self.koopman_decoder = dense_stack(
            [M, *inner, b], Activation.TANH, rng, last_activation=Activation.IDENTITY
        )
        self.graph_decoder = dense_stack(
            [b, c.decoder_hidden, c.n_nodes],
            Activation.LEAKY_RELU,
            rng,
            last_activation=Activation.IDENTITY,
        )

        # fixed standardization at the Koopman-autoencoder boundary
        self.embed_mean = np.zeros(b)
        self.embed_scale = np.ones(b)

    @property
    def n_nodes(self) -> int:
        return self.config.n_nodes

    def set_embedding_stats(self, G: np.ndarray):
        """Standardize Koopman inputs and targets with statistics of ``G`` (rows)."""
        self.embed_mean = G.mean(axis=0)
        scale = G.std(axis=0)
        self.embed_scale = np.maximum(scale, EMBED_SCALE_FLOOR * max(scale.max(), 1e-12))

    def named_parameters(self) -> dict:
        out = {}
        for i, layer in enumerate(self.graph_encoder):
            for name in layer.param_names:
                out[f"graph_encoder.{i}.{name}"] = getattr(layer, name)
        for prefix, stack in (
            ("koopman_encoder", self.koopman_encoder),
            ("koopman_decoder", self.koopman_decoder),
            ("graph_decoder", self.graph_decoder),
        ):
            for i, layer in enumerate(stack.layers):
                out[f"{prefix}.{i}.W"] = layer.W
                out[f"{prefix}.{i}.b"] = layer.b
        out["K"] = self.K
        return out

    def parameters(self) -> list:
        return list(self.named_parameters().values())

    def n_parameters(self) -> int:
        return sum(p.value.size for p in self.parameters())

    def state_dict(self) -> dict:
        return {k: v.value.copy() for k, v in self.named_parameters().items()}

    def load_state_dict(self, state: dict):
        params = self.named_parameters()
        if set(state) != set(params):
            raise FormatError("parameter names do not match the model layout")
        for name, tensor in params.items():
            value = np.asarray(state[name], dtype=float)
            if value.shape != tensor.value.shape:
                raise FormatError(f"{name}: shape {value.shape} != {tensor.value.shape}")
            tensor.value = value.copy()


def _graph_features(model, batch: GraphBatch, X):
    if batch.n_nodes != model.n_nodes:
        raise DimensionMismatch(
            f"model expects {model.n_nodes} nodes, graph has {batch.n_nodes}"
        )
    H = ad.Tensor(GraphBatch.features(X))
    for layer in model.graph_encoder:
        H = layer(H, batch)
    return batch.mean_pool(H)


def encode_graphs(model: GkaeModel, batch: GraphBatch, X) -> ad.Tensor:
    """Pooled embeddings of every graph in ``batch`` as a ``T x b`` tensor.

    ``X`` is the ``N x T`` signal matrix aligned with the batch.
    """
    return _graph_features(model, batch, X)


def encode_graph(model: GkaeModel, snapshot: GraphSnapshot) -> np.ndarray:
    batch = GraphBatch.from_snapshots(snapshot)
    return encode_graphs(model, batch, snapshot.signals).value[0].copy()


def _rows(x, width, what):
    x = np.asarray(x.value if isinstance(x, ad.Tensor) else x, dtype=float)
    x = np.atleast_2d(x)
    if x.shape[1] != width:
        raise DimensionMismatch(f"{what} of width {x.shape[1]}, expected {width}")
    return x


def koopman_encode(model: GkaeModel, g) -> np.ndarray:
    g = _rows(g, model.config.embed_dim, "embedding")
    z = (g - model.embed_mean) / model.embed_scale
    return model.koopman_encoder(ad.Tensor(z)).value.squeeze(0)


def koopman_decode(model: GkaeModel, h) -> np.ndarray:
    h = _rows(h, model.config.koopman_dim, "latent state")
    z = model.koopman_decoder(ad.Tensor(h)).value
    return (z * model.embed_scale + model.embed_mean).squeeze(0)


def koopman_advance(model: GkaeModel, h, steps: int) -> np.ndarray:
    """``K^steps h`` by repeated multiplication."""
    if steps < 0:
        raise ValueError("steps must be nonnegative")
    h = np.asarray(h, dtype=float)
    KT = model.K.value.T
    out = h.copy()
    for _ in range(steps):
        out = out @ KT
    return out


def _decode_signals(model, g_rows) -> np.ndarray:
    return model.graph_decoder(ad.Tensor(np.atleast_2d(g_rows))).value


def forward_chain(model: GkaeModel, snapshot: GraphSnapshot, p: int) -> np.ndarray:
    """Predicted signals ``p`` steps after ``snapshot``."""
    g = encode_graph(model, snapshot)
    h = koopman_advance(model, koopman_encode(model, g), p)
    return _decode_signals(model, koopman_decode(model, h))[0]


def _latent_rollout(model, h0, horizon) -> np.ndarray:
    """Rows ``h0 (K^T)^p`` for p = 1..horizon."""
    KT = model.K.value.T
    out = np.empty((horizon, h0.shape[-1]))
    h = np.asarray(h0, dtype=float).reshape(1, -1)
    for p in range(horizon):
        h = h @ KT
        out[p] = h[0]
    return out


def predict_embeddings(model: GkaeModel, g_tau, horizon: int) -> np.ndarray:
    """Embeddings decoded from ``K^p E(g_tau)`` for p = 1..horizon, as rows."""
    if horizon < 1:
        raise ValueError("horizon must be at least 1")
    h0 = koopman_encode(model, g_tau)
    H = _latent_rollout(model, h0, horizon)
    z = model.koopman_decoder(ad.Tensor(H)).value
    return z * model.embed_scale + model.embed_mean


def predict_sequence(model: GkaeModel, seq_prefix, P: int) -> np.ndarray:
    """Signals for the P steps after the last snapshot of ``seq_prefix``, as ``N x P``."""
    if P == 0:
        return np.zeros((model.n_nodes, 0))
    last = seq_prefix[-1] if isinstance(seq_prefix, GraphSequence) else seq_prefix
    G = predict_embeddings(model, encode_graph(model, last), P)
    return _decode_signals(model, G).T


def loss_gkae(model: GkaeModel, seq, L: int, batch: GraphBatch = None,
              detach_input: bool = True, embedding_targets=None) -> ad.Tensor:
    """Reconstruction loss plus the multi-step Koopman loss on embeddings.

    Squared norms are element means per time step, summed over steps.
    Embedding targets ``g(t + l)`` are constants. The Koopman branch works
    on embeddings standardized with statistics of the current embeddings
    (also constants); ``embedding_targets`` overrides the source of both,
    which finite-difference checks use to hold them fixed.
    """
    T = len(seq)
    if L >= T:
        raise LTooLarge(f"linearity length {L} must be below sequence length {T}")
    if L < 1:
        raise ValueError("linearity length must be at least 1")
    batch = GraphBatch.from_snapshots(seq.snapshots) if batch is None else batch
    X = seq.signals
    G = encode_graphs(model, batch, X)
    x_hat = model.graph_decoder(G)
    loss = ad.scale(ad.mse(x_hat, ad.Tensor(X.T)), T)

    G_const = G.value if embedding_targets is None else np.asarray(embedding_targets)
    model.set_embedding_stats(G_const)
    inv_scale = 1.0 / model.embed_scale
    targets = (G_const - model.embed_mean) * inv_scale
    if detach_input:
        Z = ad.Tensor(targets)
    else:
        Z = ad.matmul(ad.sub(G, ad.Tensor(model.embed_mean[None, :])),
                      ad.Tensor(np.diag(inv_scale)))
    KT = ad.transpose(model.K)
    P = model.koopman_encoder(Z)
    for l in range(L):
        if l > 0:
            P = ad.matmul(ad.slice_rows(P, 0, T - l), KT)
        decoded = model.koopman_decoder(P)
        term = ad.mse(decoded, ad.Tensor(targets[l:]))
        loss = ad.add(loss, ad.scale(term, T - l))
    return loss


def train_gkae(seq: GraphSequence, config: TrainConfig, model_config: GkaeConfig = None,
               callback=None):
    """Full-batch Adam training. Returns ``(model, per-epoch loss history)``."""
    if len(seq) < config.linearity_length + 1:
        raise LTooLarge(
            f"sequence of length {len(seq)} is too short for L={config.linearity_length}"
        )
    if model_config is None:
        model_config = GkaeConfig(n_nodes=seq.n_nodes, seed=config.seed)
    model = GkaeModel(model_config)
    batch = GraphBatch.from_snapshots(seq.snapshots)
    opt = ad.Adam(model.parameters(), lr=config.learning_rate)
    history = []
    for epoch in range(config.epochs):
        opt.zero_grad()
        with ad.Tape() as tape:
            loss = loss_gkae(model, seq, config.linearity_length, batch,
                             detach_input=config.detach_koopman_input)
        tape.backward(loss)
        opt.step()
        history.append(loss.item())
        if callback is not None:
            callback(epoch, loss.item())
    # stats were taken before the last update; refresh for inference
    G = encode_graphs(model, batch, seq.signals).value
    model.set_embedding_stats(G)
    return model, history


def save_model(model: GkaeModel, path, normalization=None, extra=None):
    payload = {
        "format": MODEL_FORMAT,
        "config": asdict(model.config),
        "normalization": normalization,
        "extra": extra or {},
        "embedding_stats": {
            "mean": model.embed_mean.tolist(),
            "scale": model.embed_scale.tolist(),
        },
        "parameters": {
            name: {"shape": list(t.value.shape), "values": t.value.ravel().tolist()}
            for name, t in model.named_parameters().items()
        },
    }
    with open(path, "w") as fh:
        json.dump(payload, fh)


def load_model(path):
    """Returns ``(model, normalization, extra)``."""
    with open(path) as fh:
        payload = json.load(fh)
    if payload.get("format") != MODEL_FORMAT:
        raise FormatError(f"{path}: expected format {MODEL_FORMAT!r}, got {payload.get('format')!r}")
    model = GkaeModel(GkaeConfig(**payload["config"]))
    state = {
        name: np.asarray(entry["values"], dtype=float).reshape(entry["shape"])
        for name, entry in payload["parameters"].items()
    }
    model.load_state_dict(state)
    stats = payload["embedding_stats"]
    model.embed_mean = np.asarray(stats["mean"], dtype=float)
    model.embed_scale = np.asarray(stats["scale"], dtype=float)
    return model, payload.get("normalization"), payload.get("extra", {})
