import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.stats import ortho_group

from connlap.errors import ValidationError
from connlap.graph import (
    AffinityGraph,
    assemble_operator,
    attach_connection,
    build_affinity,
)
from connlap.kernels import KernelSpec
from connlap.manifolds import get_model, sample

K0 = 1 / math.sqrt(2 * math.pi)
FORMS = ("S", "D", "L_unnormalized", "one_minus_markov", "sym_normalized")


def random_connection_graph(n, q, seed, density=0.6):
    """Random symmetric weights with a positive diagonal and random O(q) blocks."""
    rng = np.random.default_rng(seed)
    W = rng.random((n, n)) * (rng.random((n, n)) < density)
    W = np.triu(W, 1)
    W = W + W.T + np.diag(rng.random(n) + 0.1)
    a = AffinityGraph.from_weights(W)
    G = np.stack([ortho_group.rvs(q, random_state=rng) if q > 1 else rng.choice([-1.0, 1.0], (1, 1))
                  for _ in range(a.n_edges)]) if a.n_edges else np.empty((0, q, q))
    return attach_connection(a, "custom", blocks=G), W


def dense_oracle(graph, W, form):
    """Assemble the block operator entry by entry from W and g."""
    n, q = graph.affinity.n, graph.q
    S = np.zeros((n * q, n * q))
    for i in range(n):
        for j in range(n):
            if W[i, j]:
                g = np.eye(q) if i == j else graph.connection(i, j)
                S[i * q:(i + 1) * q, j * q:(j + 1) * q] = W[i, j] * g
    d = np.repeat(W.sum(axis=1), q)
    return {
        "S": S,
        "D": np.diag(d),
        "L_unnormalized": np.diag(d) - S,
        "one_minus_markov": np.eye(n * q) - S / d[:, None],
        "sym_normalized": S / np.sqrt(np.outer(d, d)),
    }[form]


def test_two_point_graph():
    h = 0.3
    X = np.array([[0.0, 0.0], [math.sqrt(h), 0.0]])
    a = build_affinity(X, KernelSpec(dim=1), h, 0.0)
    assert a.w[0] == pytest.approx(K0 * math.exp(-0.5), rel=1e-15)
    assert a.degrees[0] == pytest.approx(K0 + K0 * math.exp(-0.5), rel=1e-15)
    assert not a.warnings


def test_isolated_vertex_warning():
    X = np.array([[0.0, 0.0], [100.0, 0.0], [100.1, 0.0]])
    a = build_affinity(X, KernelSpec(dim=1), 0.01, 1.0)
    assert a.warnings and "isolated" in a.warnings[0]
    assert np.all(a.degrees > 0)


def test_square_matches_dense_path():
    X = np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]])
    h, alpha = 0.5, 1.0
    spec = KernelSpec(dim=2)
    d2 = ((X[:, None] - X[None]) ** 2).sum(-1)
    K = np.exp(-0.5 * d2 / h) / (2 * math.pi)
    p = K.mean(axis=1)
    W = K / np.outer(p, p)
    a = build_affinity(X, spec, h, alpha)
    assert np.allclose(a.weight_matrix().toarray(), W, rtol=1e-13, atol=0)
    assert np.allclose(a.degrees, W.sum(axis=1), rtol=1e-13, atol=0)


def test_two_by_two_markov_eigenvalues():
    W = np.array([[K0, 1.0], [1.0, K0]])
    graph = attach_connection(AffinityGraph.from_weights(W), "trivial")
    op = assemble_operator(graph, "one_minus_markov")
    markov = np.eye(2) - op.to_dense()
    vals = np.sort(np.linalg.eigvals(markov).real)
    assert np.allclose(vals, [(K0 - 1) / (K0 + 1), 1.0], atol=1e-15)


def test_constant_sections_in_kernel_of_laplacian():
    X = sample(get_model("s2"), 60, seed=0).points
    a = build_affinity(X, KernelSpec(dim=2), 0.1, 0.5)
    q = 3
    graph = attach_connection(a, "custom", blocks=np.broadcast_to(np.eye(q), (a.n_edges, q, q)))
    op = assemble_operator(graph, "L_unnormalized")
    for k in range(q):
        v = np.zeros((a.n, q))
        v[:, k] = 1.0
        assert np.abs(op.apply(v.ravel())).max() < 1e-12 * a.degrees.max()


def test_three_clique_markov_averages():
    graph = attach_connection(AffinityGraph.from_weights(np.ones((3, 3))), "custom",
                              blocks=np.broadcast_to(np.eye(2), (3, 2, 2)))
    op = assemble_operator(graph, "one_minus_markov")
    v = np.arange(6.0)
    averaged = v - op.apply(v)
    assert np.allclose(averaged.reshape(3, 2), v.reshape(3, 2).mean(axis=0), atol=1e-15)
    assert np.array_equal(op.apply(np.zeros(6)), np.zeros(6))


def test_trivial_connection_is_graph_laplacian():
    X = sample(get_model("s1"), 80, seed=3).points
    a = build_affinity(X, KernelSpec(dim=1), 0.05, 1.0)
    L = assemble_operator(attach_connection(a, "trivial"), "L_unnormalized").to_dense()
    W = a.weight_matrix().toarray()
    assert np.allclose(L, np.diag(W.sum(axis=1)) - W, rtol=0, atol=1e-12 * W.max())


def test_sym_normalized_exactly_symmetric():
    graph, _ = random_connection_graph(12, 2, seed=4)
    S = assemble_operator(graph, "sym_normalized").to_dense()
    assert np.max(np.abs(S - S.T)) == 0.0


def test_circle_analytic_connection_is_trivial():
    model = get_model("s1")
    X = sample(model, 100, seed=0).points
    graph = attach_connection(build_affinity(X, KernelSpec(dim=1), 0.05, 1.0), "analytic",
                              model.frames(X), model)
    assert np.allclose(graph.G, 1.0, atol=1e-12)


def test_sphere_analytic_connection_rotations():
    model = get_model("s2")
    X = sample(model, 150, seed=1).points
    graph = attach_connection(build_affinity(X, KernelSpec(dim=2), 0.05, 1.0), "analytic",
                              model.frames(X), model)
    G = graph.G
    assert np.allclose(np.einsum("mij,mkj->mik", G, G), np.eye(2), atol=1e-10)
    assert np.allclose(np.linalg.det(G), 1.0)
    i, j = graph.affinity.I[0], graph.affinity.J[0]
    assert np.array_equal(graph.connection(j, i), graph.connection(i, j).T)


def test_cylinder_z2_connection_all_positive():
    model = get_model("cylinder")
    X = sample(model, 300, seed=2).points
    graph = attach_connection(build_affinity(X, KernelSpec(dim=2), 0.05, 1.0), "z2_determinant",
                              model.frames(X), model)
    assert graph.q == 1
    assert np.all(graph.G == 1.0)


def test_attach_connection_errors():
    a = AffinityGraph.from_weights(np.ones((3, 3)))
    with pytest.raises(ValidationError):
        attach_connection(a, "analytic")
    with pytest.raises(ValidationError):
        attach_connection(a, "estimated_pca", frames=np.ones((3, 2, 1)))
    with pytest.raises(ValidationError):
        attach_connection(a, "custom", blocks=np.full((3, 2, 2), 2.0))
    with pytest.raises(ValidationError):
        assemble_operator(attach_connection(a, "trivial"), "inverse")
    with pytest.raises(ValidationError):
        assemble_operator(a, "S").apply(np.ones(4))


@pytest.mark.parametrize("form", FORMS)
def test_apply_matches_dense_oracle(form):
    graph, W = random_connection_graph(6, 2, seed=7)
    op = assemble_operator(graph, form)
    A = dense_oracle(graph, W, form)
    assert np.allclose(op.to_dense(), A, rtol=0, atol=1e-13)
    assert np.allclose(op.to_sparse().toarray(), A, rtol=0, atol=1e-13)
    v = np.random.default_rng(0).standard_normal(12)
    assert np.allclose(op.apply(v), A @ v, rtol=0, atol=1e-13)


@given(st.integers(2, 12), st.integers(1, 3), st.integers(0, 10**6))
@settings(max_examples=50, deadline=None)
def test_operator_invariants(n, q, seed):
    graph, _ = random_connection_graph(n, q, seed)
    L = assemble_operator(graph, "L_unnormalized").to_dense()
    S = assemble_operator(graph, "S").to_dense()
    St = assemble_operator(graph, "sym_normalized").to_dense()
    assert np.array_equal(S, S.T)
    lam = np.linalg.eigvalsh(L)
    assert lam.min() >= -1e-10 * max(1.0, np.abs(lam).max())
    mu = np.linalg.eigvalsh(St)
    assert mu.min() >= -1 - 1e-10 and mu.max() <= 1 + 1e-10
    markov = np.eye(n * q) - assemble_operator(graph, "one_minus_markov").to_dense()
    assert np.allclose(np.sort(np.linalg.eigvals(markov).real), np.sort(mu), atol=1e-9)
    d = graph.affinity.degrees
    assert np.allclose(d, graph.affinity.weight_matrix().toarray().sum(axis=1), rtol=1e-12)
