import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gkae.baselines import (
    GcnAutoencoder,
    TgsConfig,
    TgssConfig,
    gcnae_forecast,
    gcnae_reconstruct,
    nni_reconstruct,
    persistence_forecast,
    tgs_reconstruct,
    tgss_reconstruct,
)
from gkae.exceptions import DimensionMismatch, Unfillable
from gkae.graphcore import GraphKind, GraphSequence, GraphSnapshot
from gkae.layers import GraphBatch
from factories import random_sequence
from oracles import laplacian_by_loops, tgs_dense_minimizer, tgs_objective


def static_sequence(W, X):
    return GraphSequence([GraphSnapshot(X[:, t], W) for t in range(X.shape[1])], GraphKind.TYPE1)


def random_instance(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(2, 7))
    T = int(rng.integers(3, 9))
    seq = random_sequence(rng, n=n, T=T, static=True)
    tau = int(rng.integers(1, T - 1))
    J = np.ones((n, T))
    J[:, tau:] = rng.random((n, T - tau)) > 0.4
    Y = seq.signals * J
    Qs = [laplacian_by_loops(s.weights) for s in seq.snapshots[1:]]
    return seq, Y, J, tau, Qs


# TGS


@pytest.mark.parametrize("seed", range(20))
def test_tgs_matches_dense_minimizer(seed):
    seq, Y, J, tau, Qs = random_instance(seed)
    X = tgs_reconstruct(seq, Y, J, tau=tau)
    X_star = tgs_dense_minimizer(Qs, Y, J, 10.0, tau)
    f, f_star = tgs_objective(Qs, X, Y, J, 10.0), tgs_objective(Qs, X_star, Y, J, 10.0)
    assert abs(f - f_star) <= 1e-6 * max(abs(f_star), 1.0)


@given(st.integers(0, 10_000))
@settings(max_examples=25)
def test_tgs_never_touches_prefix(seed):
    seq, Y, J, tau, _ = random_instance(seed)
    X = tgs_reconstruct(seq, Y, J, tau=tau)
    np.testing.assert_array_equal(X[:, :tau], Y[:, :tau])
    X = tgss_reconstruct(seq, Y, J, tau=tau)
    np.testing.assert_array_equal(X[:, :tau], Y[:, :tau])


@given(st.integers(0, 10_000))
@settings(max_examples=25)
def test_tgs_objective_non_increasing(seed):
    seq, Y, J, tau, _ = random_instance(seed)
    _, info = tgs_reconstruct(seq, Y, J, tau=tau, return_info=True)
    assert np.all(np.diff(info.objective) <= 0)


def test_tgs_full_observation_large_gamma_recovers_data(rng):
    seq = random_sequence(rng, n=5, T=6, static=True)
    Y = seq.signals
    X = tgs_reconstruct(seq, Y, np.ones_like(Y), TgsConfig(gamma=1e6), tau=1)
    np.testing.assert_allclose(X, Y, atol=1e-4)


def test_tgs_single_hidden_entry_on_linear_signal():
    # path graph, signal linear in time and space; smoothness makes the gap linear too
    W = np.diag(np.ones(2), 1)
    W = W + W.T
    X_true = np.add.outer(np.arange(3.0), np.arange(5.0))
    J = np.ones_like(X_true)
    J[1, 3] = 0
    Y = X_true * J
    seq = static_sequence(W, X_true)
    X = tgs_reconstruct(seq, Y, J, tau=2)
    Qs = [laplacian_by_loops(W)] * 4
    np.testing.assert_allclose(X, tgs_dense_minimizer(Qs, Y, J, 10.0, 2), atol=1e-6)
    assert X_true[1, 2] < X[1, 3] < X_true[1, 4]


def test_tgs_time_varying_note(rng):
    seq = random_sequence(rng, n=4, T=5)
    J = np.ones((4, 5))
    J[0, 3:] = 0
    _, info = tgs_reconstruct(seq, seq.signals * J, J, return_info=True)
    assert info.notes


def test_tgs_infers_prefix_from_mask(rng):
    seq, Y, J, tau, _ = random_instance(3)
    np.testing.assert_array_equal(tgs_reconstruct(seq, Y, J), tgs_reconstruct(seq, Y, J, tau=tau))


def test_tgs_shape_mismatch(rng):
    seq = random_sequence(rng, n=4, T=5)
    with pytest.raises(DimensionMismatch):
        tgs_reconstruct(seq, np.zeros((4, 4)), np.ones((4, 4)))


def test_config_validation():
    with pytest.raises(ValueError):
        TgsConfig(gamma=0)
    with pytest.raises(ValueError):
        TgssConfig(sobolev_beta=0)
    with pytest.raises(ValueError):
        TgssConfig(sobolev_epsilon=-1)


# TGSS


@pytest.mark.parametrize("seed", range(5))
def test_tgss_reduces_to_tgs(seed):
    seq, Y, J, tau, _ = random_instance(seed)
    a = tgs_reconstruct(seq, Y, J, tau=tau)
    b = tgss_reconstruct(seq, Y, J, TgssConfig(sobolev_epsilon=0.0, sobolev_beta=1), tau=tau)
    np.testing.assert_array_equal(a, b)


@pytest.mark.parametrize("seed", range(10))
def test_tgss_matches_dense_minimizer(seed):
    seq, Y, J, tau, Qs = random_instance(seed)
    n = Y.shape[0]
    Ss = [np.linalg.matrix_power(Q + 0.3 * np.eye(n), 2) for Q in Qs]
    # squaring the operator worsens conditioning, so allow more outer iterations
    cfg = TgssConfig(sobolev_epsilon=0.3, sobolev_beta=2, max_outer=5000)
    X = tgss_reconstruct(seq, Y, J, cfg, tau=tau)
    X_star = tgs_dense_minimizer(Ss, Y, J, cfg.gamma, tau)
    f, f_star = tgs_objective(Ss, X, Y, J, cfg.gamma), tgs_objective(Ss, X_star, Y, J, cfg.gamma)
    assert abs(f - f_star) <= 1e-6 * max(abs(f_star), 1.0)


def test_tgss_large_epsilon_shrinks_temporal_differences():
    rng = np.random.default_rng(11)
    seq = random_sequence(rng, n=5, T=8, static=True)
    tau = 3
    J = np.ones((5, 8))
    J[:, tau:] = rng.random((5, 5)) > 0.5
    Y = seq.signals * J
    hidden = J == 0
    spreads = []
    for eps in [0.0, 1.0, 100.0]:
        X = tgss_reconstruct(seq, Y, J, TgssConfig(sobolev_epsilon=eps, max_outer=5000), tau=tau)
        D = np.diff(X, axis=1)
        spreads.append(np.abs(D[hidden[:, 1:]]).sum())
    assert spreads[2] < spreads[1] <= spreads[0] + 1e-9


# NNI


def test_nni_single_masked_node_takes_neighbor_value():
    W = np.zeros((3, 3))
    W[0, 1] = W[1, 0] = 1.0
    X = np.array([[5.0, 6.0], [1.0, 2.0], [9.0, 9.0]])
    J = np.ones((3, 2))
    J[0, 1] = 0
    out = nni_reconstruct(static_sequence(W, X), X * J, J)
    assert out[0, 1] == 2.0


def test_nni_no_masking_is_identity(rng):
    seq = random_sequence(rng, n=5, T=4)
    np.testing.assert_array_equal(nni_reconstruct(seq, seq.signals, np.ones((5, 4))), seq.signals)


def test_nni_four_node_hand_trace():
    # 0 - 1 - 2 and 0 - 3; node 0 hidden, nodes 1 and 3 tie at one hop
    W = np.zeros((4, 4))
    for a, b in [(0, 1), (1, 2), (0, 3)]:
        W[a, b] = W[b, a] = 1.0
    X = np.array([[0.0], [10.0], [20.0], [30.0]])
    J = np.array([[0.0], [1.0], [1.0], [1.0]])
    seq = static_sequence(W, X)
    assert nni_reconstruct(seq, X * J, J)[0, 0] == 10.0  # index breaks the tie
    coords = np.array([[0.0, 0.0], [2.0, 0.0], [3.0, 0.0], [0.0, 1.0]])
    assert nni_reconstruct(seq, X * J, J, coords=coords)[0, 0] == 30.0  # distance breaks it
    J2 = np.array([[0.0], [0.0], [1.0], [1.0]])
    out = nni_reconstruct(seq, X * J2, J2, coords=coords)
    assert out[0, 0] == 30.0 and out[1, 0] == 20.0


def test_nni_temporal_fallback():
    W = np.zeros((2, 2))
    X = np.array([[1.0, 2.0, 3.0, 4.0], [5.0, 6.0, 7.0, 8.0]])
    J = np.ones((2, 4))
    J[0, 2:] = 0
    out = nni_reconstruct(static_sequence(W, X), X * J, J)
    np.testing.assert_array_equal(out[0], [1.0, 2.0, 2.0, 2.0])


def test_nni_unfillable():
    W = np.zeros((2, 2))
    X = np.ones((2, 2))
    J = np.array([[0.0, 0.0], [1.0, 1.0]])
    with pytest.raises(Unfillable):
        nni_reconstruct(static_sequence(W, X), X * J, J)


# GCN autoencoder


def test_gcn_layout():
    model = GcnAutoencoder()
    assert len(model.layers) == 4
    assert [l.W.shape for l in model.layers] == [(8, 1), (8, 8), (8, 8), (1, 8)]


def test_gcn_reconstruction_deterministic_and_learns(rng):
    seq = random_sequence(rng, n=5, T=6)
    J = np.ones((5, 6))
    a, hist = gcnae_reconstruct(seq, seq.signals, J, epochs=150, return_history=True)
    b = gcnae_reconstruct(seq, seq.signals, J, epochs=150)
    np.testing.assert_array_equal(a, b)
    assert a.shape == (5, 6) and np.all(np.isfinite(a))
    assert hist[-1] < 0.5 * hist[0]


def test_gcn_loss_ignores_hidden_entries(rng):
    seq = random_sequence(rng, n=4, T=5)
    J = np.ones((4, 5))
    J[1, 3:] = 0
    Y = seq.signals * J
    model_a, model_b = GcnAutoencoder(seed=1), GcnAutoencoder(seed=1)
    batch = GraphBatch.from_snapshots(seq.snapshots)
    Y_other = Y.copy()
    Y_other[1, 3:] = 99.0  # hidden values must not matter
    assert model_a.fit(batch, Y, J, epochs=3) == model_b.fit(batch, Y_other, J, epochs=3)


# forecasting baselines


def test_persistence_forecast():
    X = np.array([[1.0, 2.0], [3.0, 4.0]])
    np.testing.assert_array_equal(persistence_forecast(X, 3), [[2, 2, 2], [4, 4, 4]])
    assert persistence_forecast(X, 0).shape == (2, 0)


def test_gcn_forecast_holds_constant(rng):
    seq = random_sequence(rng, n=4, T=5)
    out = gcnae_forecast(seq, 3, epochs=20)
    assert out.shape == (4, 3)
    np.testing.assert_array_equal(out[:, 0], out[:, 2])
    np.testing.assert_array_equal(out, gcnae_forecast(seq, 3, epochs=20))
