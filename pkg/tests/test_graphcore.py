import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from gkae.exceptions import DimensionMismatch, KTooLarge, NotSymmetric
from gkae.graphcore import (
    GraphKind,
    GraphSequence,
    GraphSnapshot,
    build_knn_graph,
    build_radius_graph,
    eigendecompose,
    gft,
    igft,
    is_connected,
    jacobi_eigh,
    laplacian,
    smoothness_s2,
    temporal_smoothness,
)
from oracles import (
    components,
    connected_weights,
    edge_sum_s2,
    laplacian_by_loops,
    random_weights,
)

PATH3 = np.array([[0, 1, 0], [1, 0, 1], [0, 1, 0]], dtype=float)


def snap(W, x=None):
    return GraphSnapshot(np.zeros(len(W)) if x is None else x, W)


# snapshots and sequences


def test_snapshot_derives_edges():
    g = snap(PATH3)
    assert g.edges == frozenset({(0, 1), (1, 2)})
    assert list(g.neighbors(1)) == [0, 2]


def test_snapshot_rejects_asymmetric_weights():
    W = PATH3.copy()
    W[0, 1] = 2.0
    with pytest.raises(NotSymmetric):
        snap(W)


def test_snapshot_rejects_negative_and_diagonal():
    with pytest.raises(ValueError):
        snap(-PATH3)
    with pytest.raises(ValueError):
        snap(PATH3 + np.eye(3))


def test_snapshot_rejects_inconsistent_edges():
    with pytest.raises(ValueError):
        GraphSnapshot(np.zeros(3), PATH3, edges={(0, 2)})


def test_snapshot_shape_mismatch():
    with pytest.raises(DimensionMismatch):
        GraphSnapshot(np.zeros(2), PATH3)


def test_snapshot_is_read_only():
    g = snap(PATH3)
    with pytest.raises(ValueError):
        g.weights[0, 1] = 5.0


def test_sequence_type_invariants():
    a = snap(PATH3)
    b = snap(2 * PATH3)
    c = snap(np.ones((3, 3)) - np.eye(3))
    GraphSequence([a, b], GraphKind.TYPE2)
    with pytest.raises(ValueError):
        GraphSequence([a, b], GraphKind.TYPE1)
    with pytest.raises(ValueError):
        GraphSequence([a, c], GraphKind.TYPE2)
    GraphSequence([a, c], GraphKind.TYPE3)


def test_sequence_node_count_must_match():
    with pytest.raises(DimensionMismatch):
        GraphSequence([snap(PATH3), snap(np.zeros((2, 2)))])


def test_sequence_signals_and_slicing():
    X = np.arange(6.0).reshape(3, 2)
    seq = GraphSequence([snap(PATH3, X[:, 0]), snap(PATH3, X[:, 1])], GraphKind.TYPE1)
    np.testing.assert_array_equal(seq.signals, X)
    assert seq.weights.shape == (2, 3, 3)
    assert len(seq[1:]) == 1
    np.testing.assert_array_equal(seq.with_signals(X + 1).signals, X + 1)


# laplacian


def test_laplacian_path():
    expected = np.array([[1, -1, 0], [-1, 2, -1], [0, -1, 1]], dtype=float)
    np.testing.assert_array_equal(laplacian(snap(PATH3)), expected)


def test_laplacian_empty_graph_is_zero():
    np.testing.assert_array_equal(laplacian(np.zeros((4, 4))), np.zeros((4, 4)))


def test_laplacian_weighted_triangle():
    W = np.array([[0, 2, 1], [2, 0, 3], [1, 3, 0]], dtype=float)
    np.testing.assert_array_equal(laplacian(W), np.diag([3.0, 5.0, 4.0]) - W)


@given(st.integers(0, 10_000), st.integers(2, 12))
def test_laplacian_matches_loop_oracle(seed, n):
    W = random_weights(np.random.default_rng(seed), n)
    L = laplacian(W)
    np.testing.assert_allclose(L, laplacian_by_loops(W), atol=1e-12)
    np.testing.assert_allclose(L.sum(axis=1), 0.0, atol=1e-12)


# eigendecomposition


def test_identity_spectrum():
    spec = eigendecompose(np.eye(3))
    np.testing.assert_allclose(spec.eigenvalues, [1, 1, 1])
    np.testing.assert_allclose(spec.eigenvectors.T @ spec.eigenvectors, np.eye(3), atol=1e-12)


def test_complete_k3_spectrum():
    K3 = np.ones((3, 3)) - np.eye(3)
    spec = eigendecompose(laplacian(K3))
    np.testing.assert_allclose(spec.eigenvalues, [0, 3, 3], atol=1e-12)


def test_connected_graph_first_eigenvalues():
    spec = eigendecompose(laplacian(PATH3))
    assert abs(spec.eigenvalues[0]) < 1e-12
    assert spec.eigenvalues[1] > 1e-9


def test_not_symmetric_rejected():
    with pytest.raises(NotSymmetric):
        eigendecompose(np.array([[1.0, 2.0], [0.0, 1.0]]))


@given(st.integers(0, 10_000), st.integers(1, 12))
def test_jacobi_matches_numpy(seed, n):
    rng = np.random.default_rng(seed)
    A = rng.normal(size=(n, n))
    A = A + A.T
    w, V = jacobi_eigh(A)
    np.testing.assert_allclose(w, np.linalg.eigvalsh(A), atol=1e-9 * max(1, np.abs(A).max()))
    assert np.all(np.diff(w) >= 0)
    np.testing.assert_allclose(V.T @ V, np.eye(n), atol=1e-8)
    np.testing.assert_allclose(A @ V, V * w, atol=1e-8 * max(1, np.linalg.norm(A)))


@given(st.integers(0, 10_000), st.integers(2, 12))
def test_spectrum_reconstructs_laplacian(seed, n):
    L = laplacian(random_weights(np.random.default_rng(seed), n))
    spec = eigendecompose(L)
    U, lam = spec.eigenvectors, spec.eigenvalues
    recon = U @ np.diag(lam) @ U.T
    assert np.linalg.norm(recon - L) <= 1e-8 * max(np.linalg.norm(L), 1.0)
    assert lam[0] >= -1e-9


@given(st.integers(0, 10_000), st.integers(2, 12))
def test_zero_eigenvalue_multiplicity_counts_components(seed, n):
    W = random_weights(np.random.default_rng(seed), n, density=0.25)
    lam = eigendecompose(laplacian(W)).eigenvalues
    n_comp = len(components(W))
    assert np.sum(np.abs(lam) < 1e-9) == n_comp
    assert is_connected(W) == (n_comp == 1)


# graph Fourier transform


def test_gft_of_eigenvector_is_unit_vector():
    spec = eigendecompose(laplacian(PATH3))
    for k in range(3):
        e = np.zeros(3)
        e[k] = 1.0
        np.testing.assert_allclose(gft(spec, spec.eigenvectors[:, k]), e, atol=1e-12)


def test_gft_zero():
    spec = eigendecompose(laplacian(PATH3))
    np.testing.assert_array_equal(gft(spec, np.zeros(3)), np.zeros(3))


def test_gft_dimension_mismatch():
    spec = eigendecompose(laplacian(PATH3))
    with pytest.raises(DimensionMismatch):
        gft(spec, np.zeros(4))
    with pytest.raises(DimensionMismatch):
        igft(spec, np.zeros(2))


@given(st.integers(0, 10_000), st.integers(2, 12))
def test_gft_round_trip(seed, n):
    rng = np.random.default_rng(seed)
    spec = eigendecompose(laplacian(random_weights(rng, n)))
    x = rng.normal(size=n)
    assert np.linalg.norm(igft(spec, gft(spec, x)) - x) < 1e-9
    assert np.linalg.norm(gft(spec, igft(spec, x)) - x) < 1e-9


# smoothness


def test_s2_constant_signal_is_zero():
    assert smoothness_s2(snap(PATH3), np.full(3, 4.2)) == pytest.approx(0.0, abs=1e-12)


def test_s2_path_hand_value():
    assert smoothness_s2(snap(PATH3), np.array([0.0, 1.0, 0.0])) == pytest.approx(2.0)


def test_s2_dimension_mismatch():
    with pytest.raises(DimensionMismatch):
        smoothness_s2(snap(PATH3), np.zeros(2))


@given(st.integers(0, 10_000), st.integers(2, 12))
def test_s2_edge_sum_and_bounds(seed, n):
    rng = np.random.default_rng(seed)
    W = random_weights(rng, n)
    x = rng.normal(size=n)
    s2 = smoothness_s2(W, x)
    oracle = edge_sum_s2(W, x)
    assert abs(s2 - oracle) <= 1e-9 * max(abs(oracle), 1.0)
    lam_max = np.linalg.eigvalsh(laplacian_by_loops(W))[-1]
    assert -1e-9 <= s2 <= lam_max * x @ x + 1e-9


@given(st.integers(0, 10_000), st.integers(2, 12))
def test_zero_mean_sandwich_bound(seed, n):
    rng = np.random.default_rng(seed)
    W = connected_weights(rng, n)
    lam = np.linalg.eigvalsh(laplacian_by_loops(W))
    x = rng.normal(size=n)
    x -= x.mean()
    s2 = smoothness_s2(W, x)
    assert lam[1] * x @ x - 1e-9 <= s2 <= lam[-1] * x @ x + 1e-9


@given(st.integers(0, 10_000), st.integers(2, 12))
def test_fiedler_value_volume_bound(seed, n):
    W = random_weights(np.random.default_rng(seed), n)
    L = laplacian(W)
    lam = eigendecompose(L).eigenvalues
    assert lam[1] <= np.trace(L) / (n - 1) + 1e-9


def _path_sequence(X):
    return GraphSequence([snap(PATH3, X[:, t]) for t in range(X.shape[1])], GraphKind.TYPE1)


def test_temporal_smoothness_examples():
    const_time = np.tile(np.array([[1.0], [2.0], [3.0]]), (1, 4))
    assert temporal_smoothness(_path_sequence(const_time), const_time) == 0.0
    const_space = np.tile(np.array([1.0, 5.0, -2.0]), (3, 1))
    assert temporal_smoothness(_path_sequence(const_space), const_space) == pytest.approx(0.0)
    X = np.array([[0.0, 0.0], [0.0, 1.0], [0.0, 0.0]])
    assert temporal_smoothness(_path_sequence(X), X) == pytest.approx(2.0)


def test_temporal_smoothness_uses_snapshot_t():
    # weights of the later snapshot apply to the difference that ends there
    W2 = 3.0 * PATH3
    seq = GraphSequence([snap(PATH3), snap(W2)], GraphKind.TYPE2)
    X = np.array([[0.0, 0.0], [0.0, 1.0], [0.0, 0.0]])
    assert temporal_smoothness(seq, X) == pytest.approx(6.0)


def test_temporal_smoothness_errors():
    X = np.zeros((3, 1))
    with pytest.raises(DimensionMismatch):
        temporal_smoothness(_path_sequence(X), X)
    with pytest.raises(DimensionMismatch):
        temporal_smoothness(_path_sequence(np.zeros((3, 2))), np.zeros((2, 2)))


# graph construction


def test_knn_collinear_points():
    g = build_knn_graph(np.array([[0.0], [1.0], [2.0]]), 1)
    assert g.edges == frozenset({(0, 1), (1, 2)})


def test_knn_complete_when_k_is_n_minus_1(rng):
    g = build_knn_graph(rng.random((6, 2)), 5)
    assert len(g.edges) == 15


def test_knn_ties_go_to_lower_index():
    # node 0 sits at equal distance from nodes 1 and 2; node 2 prefers node 3
    coords = np.array([[0.0, 0.0], [1.0, 0.0], [-1.0, 0.0], [-1.5, 0.0]])
    g = build_knn_graph(coords, 1)
    assert (0, 1) in g.edges and (0, 2) not in g.edges


def test_knn_duplicate_coordinates():
    coords = np.zeros((4, 2))
    g = build_knn_graph(coords, 1)
    assert g.edges == frozenset({(0, 1), (0, 2), (0, 3)})


def test_knn_k_too_large():
    with pytest.raises(KTooLarge):
        build_knn_graph(np.zeros((3, 2)), 3)


@given(st.integers(0, 10_000), st.integers(3, 12), st.integers(1, 2))
def test_knn_matches_sorted_distance_oracle(seed, n, k):
    coords = np.random.default_rng(seed).random((n, 2))
    g = build_knn_graph(coords, k)
    expected = set()
    for i in range(n):
        order = sorted((j for j in range(n) if j != i),
                       key=lambda j: (np.linalg.norm(coords[i] - coords[j]), j))
        for j in order[:k]:
            expected.add((min(i, j), max(i, j)))
    assert g.edges == frozenset(expected)


def test_radius_graph_examples():
    square = np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]])
    assert build_radius_graph(square, 0.5).edges == frozenset()
    assert len(build_radius_graph(square, 2.0).edges) == 6
    sides = build_radius_graph(square, 1.0).edges
    assert sides == frozenset({(0, 1), (1, 2), (2, 3), (0, 3)})


def test_radius_must_be_positive():
    with pytest.raises(ValueError):
        build_radius_graph(np.zeros((2, 2)), 0.0)


def test_is_connected_examples():
    assert not is_connected(snap(np.zeros((2, 2))))
    assert is_connected(snap(PATH3))
    tri = np.ones((3, 3)) - np.eye(3)
    two = np.zeros((6, 6))
    two[:3, :3] = tri
    two[3:, 3:] = tri
    assert not is_connected(two)
