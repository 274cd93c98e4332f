"""Small random inputs shared by several test modules."""

from gkae.graphcore import GraphKind, GraphSequence, GraphSnapshot
from gkae.koopman import GkaeConfig
from oracles import random_weights


def random_sequence(rng, n=5, T=8, density=0.5, static=False):
    W0 = random_weights(rng, n, density)
    snaps = []
    for _ in range(T):
        W = W0 if static else random_weights(rng, n, density)
        snaps.append(GraphSnapshot(rng.normal(size=n), W))
    return GraphSequence(snaps, GraphKind.TYPE1 if static else GraphKind.TYPE3, 0.1)


def tiny_config(n_nodes, seed=0, **kw):
    params = dict(n_nodes=n_nodes, embed_dim=3, koopman_dim=2, hidden_dim=4,
                  koopman_layers=2, decoder_hidden=4, seed=seed)
    params.update(kw)
    return GkaeConfig(**params)
