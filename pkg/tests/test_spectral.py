import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import linalg
from scipy.stats import ortho_group, spearmanr

from connlap.errors import ValidationError
from connlap.experiments import CALIBRATED_C, bandwidth_schedule
from connlap.graph import AffinityGraph, assemble_operator, attach_connection, build_affinity
from connlap.kernels import KernelSpec
from connlap.manifolds import get_model, sample
from connlap.spectral import (
    cluster_eigenvalues,
    dm_embed,
    eigendecompose,
    hs_affinity,
    hs_affinity_spectral,
    rescale_eigenvalues,
    vdd,
    vdm_embed,
)


def random_graph(n, q, seed):
    rng = np.random.default_rng(seed)
    W = rng.random((n, n)) * (rng.random((n, n)) < 0.7)
    W = np.triu(W, 1)
    W = W + W.T + np.diag(rng.random(n) + 0.1)
    a = AffinityGraph.from_weights(W)
    if q == 1:
        G = rng.choice([-1.0, 1.0], (a.n_edges, 1, 1))
    else:
        G = np.array([ortho_group.rvs(q, random_state=rng) for _ in range(a.n_edges)])
    return attach_connection(a, "custom", blocks=G.reshape(a.n_edges, q, q))


def test_swap_matrix():
    graph = attach_connection(AffinityGraph.from_weights(np.array([[1e-300, 1.0], [1.0, 1e-300]])),
                              "trivial")
    dec = eigendecompose(assemble_operator(graph, "sym_normalized"), 2)
    assert np.allclose(dec.eigenvalues, [1.0, -1.0], atol=1e-15)


def test_random_symmetric_matches_dense():
    rng = np.random.default_rng(0)
    W = rng.random((30, 30))
    W = W + W.T
    op = assemble_operator(AffinityGraph.from_weights(W), "S")
    dec = eigendecompose(op, 30)
    assert np.allclose(np.sort(dec.eigenvalues), linalg.eigvalsh(W), atol=1e-10)
    gram = dec.eigenvectors.T @ dec.eigenvectors
    assert np.allclose(gram, np.eye(30), atol=1e-8)


def test_markov_similarity_n8_q2():
    graph = random_graph(8, 2, seed=3)
    markov = np.eye(16) - assemble_operator(graph, "one_minus_markov").to_dense()
    direct = np.sort(np.linalg.eigvals(markov).real)
    dec = eigendecompose(assemble_operator(graph, "one_minus_markov"), 16)
    assert np.allclose(np.sort(dec.eigenvalues), direct, atol=1e-10)
    # stored vectors are right eigenvectors of D^-1 S
    V = dec.markov_vectors
    assert np.allclose(markov @ V, V * dec.eigenvalues, atol=1e-10)
    d = np.repeat(dec.degrees, 2)
    assert np.allclose(V.T @ (d[:, None] * V), np.eye(16), atol=1e-8)


def test_lanczos_path_matches_dense():
    model = get_model("s1")
    X = sample(model, 2500, seed=0).points
    op = assemble_operator(build_affinity(X, KernelSpec(dim=1), 0.01, 1.0), "sym_normalized")
    dense = np.sort(linalg.eigvalsh(op.to_dense()))[::-1][:6]
    dec = eigendecompose(op, 6, seed=4)
    assert np.allclose(dec.eigenvalues, dense, atol=1e-9)
    assert np.all(dec.residuals <= 1e-8)
    again = eigendecompose(op, 6, seed=4)
    assert np.array_equal(dec.eigenvalues, again.eigenvalues)


def test_eigendecompose_errors():
    op = assemble_operator(AffinityGraph.from_weights(np.eye(3)), "S")
    with pytest.raises(ValidationError):
        eigendecompose(op, 0)
    with pytest.raises(ValidationError):
        eigendecompose(op, 4)
    with pytest.raises(ValidationError):
        eigendecompose(op.to_dense(), 1)


def test_rescale_examples():
    graph = random_graph(5, 1, seed=0)
    dec = eigendecompose(assemble_operator(graph, "sym_normalized"), 5)
    dec.eigenvalues = np.array([1.0, 0.9, 0.5, 0.0, -0.2])
    lam = rescale_eigenvalues(dec, 0.1, d=2)
    assert lam[0] == 0.0
    assert np.allclose(lam, 2 * (1 - dec.eigenvalues) / 0.1, rtol=1e-12)
    with pytest.raises(ValidationError):
        rescale_eigenvalues(dec, 0.0, d=2)


def test_circle_first_eigenvalue():
    n = 3000
    h = bandwidth_schedule(n, 1, 1.0, CALIBRATED_C["s1"])
    X = sample(get_model("s1"), n, seed=0).points
    op = assemble_operator(build_affinity(X, KernelSpec(dim=1), h, 1.0), "sym_normalized")
    lam = rescale_eigenvalues(eigendecompose(op, 3), h, d=1)
    assert lam[1] == pytest.approx(1.0, rel=0.1)


def test_cluster_eigenvalues():
    clusters = cluster_eigenvalues([4.1, 1.0, 0.0, 0.98, 3.9, 9.2])
    assert [c.size for c in clusters] == [1, 2, 2, 1]
    assert clusters[1].mean == pytest.approx(0.99)


@given(st.integers(2, 8), st.integers(1, 3), st.integers(0, 10**6))
@settings(max_examples=25, deadline=None)
def test_hs_identity_and_vdm(n, q, seed):
    graph = random_graph(n, q, seed)
    op = assemble_operator(graph, "sym_normalized")
    dec = eigendecompose(op, n * q)
    rng = np.random.default_rng(seed)
    i, j = rng.integers(0, n, 2)
    for t in (1, 2, 3):
        brute = hs_affinity(op, t, i, j)
        assert hs_affinity_spectral(dec, t, i, j) == pytest.approx(brute, rel=1e-10, abs=1e-10)
    emb = vdm_embed(dec, 2, n * q)
    assert emb.coordinates[i] @ emb.coordinates[j] == pytest.approx(hs_affinity(op, 2, i, j),
                                                                   rel=1e-10, abs=1e-10)


def test_hs_single_point_identity():
    a = AffinityGraph.from_weights(np.array([[2.0]]))
    graph = attach_connection(a, "custom", blocks=np.empty((0, 2, 2)))
    assert hs_affinity(assemble_operator(graph, "sym_normalized"), 3, 0, 0) == pytest.approx(2.0)


def test_hs_two_point_swap():
    # S_tilde = [[a, b], [b, a]]; its 2t power has entries ((a+b)^2t +- (a-b)^2t) / 2
    W = np.array([[1.0, 3.0], [3.0, 1.0]])
    op = assemble_operator(attach_connection(AffinityGraph.from_weights(W), "trivial"),
                           "sym_normalized")
    a, b = 0.25, 0.75
    for t in (1, 2):
        off = ((a + b) ** (2 * t) - (a - b) ** (2 * t)) / 2
        assert hs_affinity(op, t, 0, 1) == pytest.approx(off**2, rel=1e-14)


def test_vdm_single_pair_and_normalization():
    graph = random_graph(6, 2, seed=5)
    dec = eigendecompose(assemble_operator(graph, "sym_normalized"), 12)
    emb = vdm_embed(dec, 3, 1)
    v1 = dec.blocks()[:, :, 0]
    assert np.allclose(emb.coordinates[:, 0], dec.eigenvalues[0] ** 6 * (v1**2).sum(1))
    full = vdm_embed(dec, 3, 12)
    norm = vdm_embed(dec, 3, 12, normalized=True)
    assert np.allclose(norm.coordinates, full.coordinates / dec.degrees[:, None], rtol=1e-15)
    with pytest.raises(ValidationError):
        vdm_embed(dec, 0, 2)


@given(st.integers(0, 10**6))
@settings(max_examples=20, deadline=None)
def test_vdd_pseudometric(seed):
    graph = random_graph(8, 2, seed)
    emb = vdm_embed(eigendecompose(assemble_operator(graph, "sym_normalized"), 16), 1, 16)
    rng = np.random.default_rng(seed)
    for _ in range(10):
        i, j, k = rng.integers(0, 8, 3)
        assert vdd(emb, i, i) == 0
        assert vdd(emb, i, j) >= 0
        assert vdd(emb, i, j) == vdd(emb, j, i)
        # the square root of VDD is a Euclidean distance
        assert np.sqrt(vdd(emb, i, k)) <= np.sqrt(vdd(emb, i, j)) + np.sqrt(vdd(emb, j, k)) + 1e-9


def test_vdd_tracks_geodesic_distance_on_sphere():
    model = get_model("s2")
    n = 1500
    X = sample(model, n, seed=0).points
    h = bandwidth_schedule(n, 2, 1.0, CALIBRATED_C["s2"])
    graph = attach_connection(build_affinity(X, KernelSpec(dim=2), h, 1.0), "analytic",
                              model.frames(X), model)
    emb = vdm_embed(eigendecompose(assemble_operator(graph, "sym_normalized"), 60), 5, 60)
    idx = np.arange(300)
    geo = np.arccos(np.clip(X[idx] @ X[idx].T, -1, 1))
    a, b = np.nonzero(np.triu((geo < 0.3) & (geo > 0), 1))
    dist = [vdd(emb, i, j) for i, j in zip(a, b)]
    assert spearmanr(dist, geo[a, b]).statistic > 0.9


def test_diffusion_map_of_circle():
    X = sample(get_model("s1"), 1000, seed=0).points
    graph = attach_connection(build_affinity(X, KernelSpec(dim=1), 0.01, 1.0), "trivial")
    dec = eigendecompose(assemble_operator(graph, "sym_normalized"), 3)
    Y = dm_embed(dec, 1, 3)
    assert np.std(Y[:, 0]) < 1e-10 * np.abs(Y[:, 0]).max()
    r = np.linalg.norm(Y[:, 1:], axis=1)
    assert (r.max() - r.min()) / r.mean() < 0.15
    assert dm_embed(dec, 1, 0).shape == (1000, 0)
    vec = eigendecompose(assemble_operator(random_graph(4, 2, 0), "sym_normalized"), 2)
    with pytest.raises(ValidationError):
        dm_embed(vec, 1, 1)
