import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate, stats

from connlap import manifolds as M
from connlap.errors import (
    ChartSingularityError,
    NoClosedFormError,
    OffManifoldError,
    ValidationError,
)

ALL = M.model_names()
TRANSPORT_MODELS = ["s1", "interval", "s2", "flat_torus", "cylinder"]


# --- oracles -----------------------------------------------------------------


def sphere_transport_ode(x, y, v):
    """Parallel transport of v from y to x on S^2 by integrating V' = -<V, g'> g
    along the great circle."""
    theta = np.arccos(np.clip(x @ y, -1, 1))
    u = x - (x @ y) * y
    u /= np.linalg.norm(u)

    def rhs(s, V):
        g = np.cos(s) * y + np.sin(s) * u
        dg = -np.sin(s) * y + np.cos(s) * u
        return -(V @ dg) * g

    sol = integrate.solve_ivp(rhs, (0, theta), v, rtol=1e-12, atol=1e-13)
    return sol.y[:, -1]


def fd_tangents(model, P, eps=1e-6):
    cols = []
    for k in range(model.intrinsic_dim):
        dP = np.zeros_like(P)
        dP[:, k] = eps
        cols.append((model.embed(P + dP) - model.embed(P - dP)) / (2 * eps))
    return np.stack(cols, axis=2)


# --- rng and sampling --------------------------------------------------------


def test_rng_is_keyed_and_reproducible():
    a = M.make_rng(5).random(4)
    b = M.make_rng(5).random(4)
    c = M.make_rng(5, stream=1).random(4)
    assert np.array_equal(a, b)
    assert not np.array_equal(a, c)
    with pytest.raises(ValidationError):
        M.make_rng(-1)


def test_philox_doubles_follow_documented_construction():
    bits = np.random.Philox(key=7).random_raw(3)
    expected = (bits >> np.uint64(11)).astype(np.float64) * 2.0**-53
    assert np.array_equal(M.make_rng(7).random(3), expected)


def test_sample_circle_points_on_circle():
    cloud = M.sample(M.get_model("s1"), 4, seed=0)
    assert cloud.points.shape == (4, 2)
    assert np.allclose(np.linalg.norm(cloud.points, axis=1), 1.0, atol=1e-12)


def test_sample_sphere_mean_near_origin():
    cloud = M.sample(M.get_model("s2"), 1000, seed=1)
    assert np.linalg.norm(cloud.points.mean(axis=0)) < 0.1


def _circle_cdf(t):
    # CDF of p(t) = (2 + sin t) / (4 pi) on [0, 2 pi)
    return (2 * t + 1 - np.cos(t)) / (4 * np.pi)


def test_two_plus_sin_sampler_chi_square_and_ks():
    cloud = M.sample(M.get_model("s1"), 100_000, density="two_plus_sin", seed=2)
    theta = np.mod(np.arctan2(cloud.points[:, 1], cloud.points[:, 0]), 2 * np.pi)
    edges = np.linspace(0, 2 * np.pi, 41)
    observed, _ = np.histogram(theta, edges)
    expected = np.diff(_circle_cdf(edges)) * len(theta)
    assert stats.chisquare(observed, expected).pvalue > 0.01
    ks = stats.kstest(theta, _circle_cdf).statistic
    assert ks < 0.02


def test_density_values_populated_and_normalized():
    cloud = M.sample(M.get_model("s1"), 50, density="two_plus_sin", seed=3)
    theta = np.arctan2(cloud.points[:, 1], cloud.points[:, 0])
    assert np.allclose(cloud.density_values, (2 + np.sin(theta)) / (4 * np.pi))
    uni = M.sample(M.get_model("s2"), 10, seed=0)
    assert np.allclose(uni.density_values, 1 / (4 * np.pi))


@pytest.mark.parametrize("name", ALL)
def test_embedding_equation_holds(name):
    model = M.get_model(name)
    cloud = M.sample(model, 500, seed=11)
    assert cloud.points.shape[1] == model.ambient_dim
    assert model.residual(cloud.points).max() <= 1e-12
    assert model.intrinsic_dim <= model.ambient_dim


@given(st.sampled_from(ALL), st.integers(0, 2**32))
@settings(max_examples=30, deadline=None)
def test_embedding_equation_property(name, seed):
    model = M.get_model(name)
    cloud = M.sample(model, 16, seed=seed)
    assert model.residual(cloud.points).max() <= 1e-12


def test_sample_errors():
    with pytest.raises(ValidationError):
        M.sample(M.get_model("s1"), 1)
    with pytest.raises(ValidationError):
        M.sample(M.get_model("s2"), 10, density="two_plus_sin")
    with pytest.raises(ValidationError):
        M.get_model("hyperbolic_plane")


def test_catalog_flags():
    flags = {n: (M.get_model(n).has_boundary, M.get_model(n).orientable) for n in ALL}
    assert flags["interval"] == (True, True)
    assert flags["cylinder"] == (True, True)
    assert flags["mobius"] == (True, False)
    assert flags["klein"] == (False, False)
    assert flags["torus"] == (False, True)


@pytest.mark.parametrize("name", ["torus", "mobius", "klein", "s2", "cylinder"])
def test_volume_matches_monte_carlo_free_formula(name):
    model = M.get_model(name)
    # generic area-element quadrature against the closed forms where known
    closed = {"torus": 4 * np.pi**2 * 2.0, "s2": 4 * np.pi, "cylinder": 4 * np.pi}
    generic = M.ManifoldModel.volume.func(model)
    if name in closed:
        assert generic == pytest.approx(closed[name], rel=1e-9)
    assert model.volume == pytest.approx(generic, rel=1e-9)


def test_point_cloud_and_frame_validation():
    with pytest.raises(ValidationError):
        M.PointCloud(np.zeros((1, 2)))
    with pytest.raises(ValidationError):
        M.PointCloud(np.array([[0.0, np.nan], [1.0, 0.0]]))
    with pytest.raises(ValidationError):
        M.PointCloud(np.zeros((2, 2)), density_values=np.array([1.0, 0.0]))
    with pytest.raises(ValidationError):
        M.Frame(0, np.array([[1.0, 0.0], [0.0, 1.1]]))


# --- frames ------------------------------------------------------------------


def test_sphere_frame_at_equator():
    frame = M.analytic_frame(M.get_model("s2"), np.array([1.0, 0.0, 0.0]))
    assert np.allclose(np.array([1.0, 0, 0]) @ frame.basis, 0, atol=1e-15)
    assert abs(frame.basis[0]).max() < 1e-15  # span{e2, e3}


def test_circle_frame_closed_form():
    t = 0.7
    frame = M.analytic_frame(M.get_model("s1"), np.array([np.cos(t), np.sin(t)]))
    assert np.allclose(frame.basis[:, 0], [-np.sin(t), np.cos(t)], atol=1e-15)


def test_torus_frame_against_finite_difference_tangents():
    model = M.get_model("torus")
    P = np.array([[0.4, 2.1]])
    x = model.embed(P)[0]
    frame = M.analytic_frame(model, x)
    T = fd_tangents(model, P)[0]
    normal = np.cross(T[:, 0], T[:, 1])
    normal /= np.linalg.norm(normal)
    assert np.allclose(frame.basis.T @ frame.basis, np.eye(2), atol=1e-12)
    assert np.abs(normal @ frame.basis).max() < 1e-8


@pytest.mark.parametrize("name", ALL)
def test_frames_span_fd_tangent_plane(name):
    model = M.get_model(name)
    X = M.sample(model, 40, seed=4).points
    P = model.coords(X)
    T = fd_tangents(model, P)
    F = model.frames(X)
    # projecting the FD tangents onto the frame loses nothing
    T = T / np.linalg.norm(T, axis=1, keepdims=True)
    resid = T - np.einsum("npi,nqi,nqk->npk", F, F, T)
    assert np.abs(resid).max() < 1e-6


def test_frame_errors():
    sphere = M.get_model("s2")
    with pytest.raises(OffManifoldError):
        M.analytic_frame(sphere, np.array([1.0, 1.0, 0.0]))
    with pytest.raises(ChartSingularityError):
        M.analytic_frame(sphere, np.array([0.0, 0.0, 1.0]), chart=0)
    # the automatic choice uses the other chart at the pole
    frame = M.analytic_frame(sphere, np.array([0.0, 0.0, 1.0]))
    assert np.allclose(frame.basis.T @ frame.basis, np.eye(2))
    with pytest.raises(OffManifoldError):
        M.analytic_frame(M.get_model("interval"), np.array([4.0, 0.0]))


# --- transport ---------------------------------------------------------------


@pytest.mark.parametrize("name", TRANSPORT_MODELS)
def test_transport_identity_at_same_point(name):
    model = M.get_model(name)
    x = M.sample(model, 2, seed=9).points[0]
    f = M.analytic_frame(model, x)
    g = M.analytic_transport(model, x, x, f, f)
    assert np.allclose(g, np.eye(model.intrinsic_dim), atol=1e-14)


def test_circle_transport_is_one():
    model = M.get_model("s1")
    X = M.sample(model, 20, seed=1).points
    for x, y in zip(X[:10], X[10:]):
        g = M.analytic_transport(model, x, y, M.analytic_frame(model, x), M.analytic_frame(model, y))
        assert g.shape == (1, 1)
        assert g[0, 0] == pytest.approx(1.0, abs=1e-12)


def test_sphere_antipodal_is_zero():
    model = M.get_model("s2")
    x = np.array([0.6, 0.0, 0.8])
    g = M.analytic_transport(model, x, -x, M.analytic_frame(model, x), M.analytic_frame(model, -x))
    assert np.array_equal(g, np.zeros((2, 2)))


def test_sphere_transport_matches_ode_oracle():
    model = M.get_model("s2")
    X = M.sample(model, 20, seed=5).points
    for x, y in zip(X[:10], X[10:]):
        fx, fy = M.analytic_frame(model, x), M.analytic_frame(model, y)
        g = M.analytic_transport(model, x, y, fx, fy)
        for k in range(2):
            moved = sphere_transport_ode(x, y, fy.basis[:, k])
            assert np.allclose(g[:, k], fx.basis.T @ moved, atol=1e-9)
        assert np.linalg.det(g) == pytest.approx(1.0)


def test_transport_missing_closed_form():
    model = M.get_model("torus")
    x = M.sample(model, 2, seed=0).points
    f = M.analytic_frame(model, x[0])
    with pytest.raises(NoClosedFormError):
        M.analytic_transport(model, x[0], x[1], f, M.analytic_frame(model, x[1]))


@given(st.sampled_from(TRANSPORT_MODELS), st.integers(0, 10**6))
@settings(max_examples=40, deadline=None)
def test_transport_orthogonal_and_symmetric(name, seed):
    model = M.get_model(name)
    X = M.sample(model, 2, seed=seed).points
    F = model.frames(X)
    g = M.analytic_transport(model, X[0], X[1], F[0], F[1])
    g_back = M.analytic_transport(model, X[1], X[0], F[1], F[0])
    q = model.intrinsic_dim
    if np.any(g):
        assert np.allclose(g.T @ g, np.eye(q), atol=1e-10)
        assert np.allclose(g, g_back.T, atol=1e-10)
    else:
        assert not np.any(g_back)


# --- fields ------------------------------------------------------------------


def test_field_examples():
    s1 = M.get_model("s1")
    fv = M.analytic_field(s1, "sin", np.array([0.0, 1.0]))
    assert fv.value[0] == pytest.approx(1.0)
    assert fv.laplacian[0] == pytest.approx(-1.0)
    fv = M.analytic_field(s1, "sin", np.array([1.0, 0.0]), alpha=1.0, density="two_plus_sin")
    assert fv.drift[0] == 0.0
    iv = M.get_model("interval")
    fv = M.analytic_field(iv, "cos", np.array([np.pi / 3, 0.0]))
    assert fv.laplacian[0] == pytest.approx(-0.5)
    with pytest.raises(ValidationError):
        M.analytic_field(s1, "tan", np.array([1.0, 0.0]))


def _fd_second(fun, t, eps=1e-3):
    return (fun(t + eps) - 2 * fun(t) + fun(t - eps)) / eps**2


@pytest.mark.parametrize("name,field_id", [("s1", "sin"), ("s1", "cos2"), ("s1", "const"),
                                           ("interval", "cos"), ("interval", "cos2")])
def test_curve_field_laplacian_fd_oracle(name, field_id):
    model = M.get_model(name)
    X = M.sample(model, 100, seed=6).points
    P = model.coords(X)[:, 0]
    _, lap, _ = M.field_values(model, field_id, X)

    def value_at(t):
        return M.field_values(model, field_id, model.embed(t[:, None]))[0][:, 0]

    inside = (P > 2e-3) & (P < model.param_box[0, 1] - 2e-3)
    fd = _fd_second(value_at, P)
    assert np.abs(fd - lap[:, 0])[inside].max() < 1e-4


def test_circle_drift_fd_oracle():
    model = M.get_model("s1")
    X = M.sample(model, 100, seed=7).points
    t = model.coords(X)[:, 0]
    alpha = 0.3
    _, _, drift = M.field_values(model, "sin", X, alpha=alpha, density="two_plus_sin")
    eps = 1e-5
    pw = lambda s: (2 + np.sin(s)) ** (1 - alpha)  # noqa: E731
    dpw = (pw(t + eps) - pw(t - eps)) / (2 * eps)
    df = (np.sin(t + eps) - np.sin(t - eps)) / (2 * eps)
    assert np.abs(drift[:, 0] - 2 * df * dpw / pw(t)).max() < 1e-7


def _sphere_scalar_laplacian_fd(f, X, eps=1e-3):
    # sum of second derivatives along two orthogonal great circles
    F = M.get_model("s2").frames(X)
    out = np.zeros(len(X))
    for k in range(2):
        e = F[:, :, k]
        g = lambda s: np.cos(s) * X + np.sin(s) * e  # noqa: E731
        out += (f(g(eps)) - 2 * f(X) + f(g(-eps))) / eps**2
    return out


def test_sphere_z_laplacian_fd_oracle():
    model = M.get_model("s2")
    X = M.sample(model, 100, seed=8).points
    _, lap, _ = M.field_values(model, "z", X)
    fd = _sphere_scalar_laplacian_fd(lambda Y: Y[:, 2], X)
    assert np.abs(fd - lap[:, 0]).max() < 1e-4


def grad_z_ambient(Y):
    return np.array([0.0, 0.0, 1.0]) - Y[:, 2:3] * Y


def sphere_connection_laplacian_fd(field, X, eps=1e-3):
    """Connection Laplacian of an ambient tangent field on S^2: along each unit
    geodesic g(s) through x, the second covariant derivative is
    P_x d/ds [P_g(s) d/ds V(g(s))] at s = 0."""
    F = M.get_model("s2").frames(X)
    out = np.zeros_like(X)

    def proj(Y, V):
        return V - np.einsum("ij,ij->i", Y, V)[:, None] * Y

    for k in range(2):
        e = F[:, :, k]
        g = lambda s: np.cos(s) * X + np.sin(s) * e  # noqa: E731

        def cov_derivative(s):
            dV = (field(g(s + eps)) - field(g(s - eps))) / (2 * eps)
            return proj(g(s), dV)

        second = (cov_derivative(eps) - cov_derivative(-eps)) / (2 * eps)
        out += proj(X, second)
    return out


def test_sphere_grad_z_connection_laplacian_fd_oracle():
    """grad z is an eigenfield of the rough Laplacian with eigenvalue 1."""
    model = M.get_model("s2")
    X = M.sample(model, 100, seed=9).points
    F = model.frames(X)
    value, lap, _ = M.field_values(model, "grad_z", X, F)
    fd = sphere_connection_laplacian_fd(grad_z_ambient, X)
    fd_coeff = np.einsum("npi,np->ni", F, fd)
    assert np.abs(fd_coeff - lap).max() < 1e-4
    assert np.allclose(lap, -value)


@pytest.mark.parametrize("name,field_id", [("flat_torus", "sin_u"), ("cylinder", "cos_phi")])
def test_flat_field_laplacian_fd_oracle(name, field_id):
    model = M.get_model(name)
    X = M.sample(model, 100, seed=10).points
    P = model.coords(X)
    _, lap, _ = M.field_values(model, field_id, X)
    eps = 1e-3
    fd = np.zeros(len(X))
    for k in range(2):
        dP = np.zeros_like(P)
        dP[:, k] = eps
        vals = [M.field_values(model, field_id, model.embed(P + s * dP))[0][:, 0] for s in (1, 0, -1)]
        fd += (vals[0] - 2 * vals[1] + vals[2]) / eps**2
    inside = np.ones(len(X), bool)
    if model.has_boundary:
        inside = model.boundary_distance(X) > 2 * eps
    assert np.abs(fd - lap[:, 0])[inside].max() < 1e-4


def test_sphere_tangent_eigenfields_are_eigenfields():
    X = M.sample(M.get_model("s2"), 60, seed=12).points
    F = M.get_model("s2").frames(X)
    basis = M.sphere_tangent_eigenfields(X, F)
    assert basis.shape == (120, 6)
    assert np.linalg.matrix_rank(basis) == 6
    for col in range(6):
        k, kind = divmod(col, 2)

        def field(Y, k=k, kind=kind):
            e = np.eye(3)[k]
            return e - Y[:, k:k + 1] * Y if kind == 0 else np.cross(e, Y)

        lap = np.einsum("npi,np->ni", F, sphere_connection_laplacian_fd(field, X)).ravel()
        assert np.allclose(lap, -basis[:, col], atol=1e-4)


# --- spectra -----------------------------------------------------------------


def test_reference_spectra_examples():
    s1 = M.reference_spectrum(M.get_model("s1"), "laplace_beltrami", 5)
    assert s1.entries == [(0.0, 1), (1.0, 2), (4.0, 2), (9.0, 2), (16.0, 2)]
    iv = M.reference_spectrum(M.get_model("interval"), "laplace_beltrami", 3)
    assert iv.entries == [(0.0, 1), (1.0, 1), (4.0, 1)]
    s2 = M.reference_spectrum(M.get_model("s2"), "connection_laplacian_tangent", 3)
    assert s2.entries == [(1.0, 6), (5.0, 10), (11.0, 14)]
    assert s2.eigenvalues.min() > 0
    ft = M.reference_spectrum(M.get_model("flat_torus"), "laplace_beltrami", 4)
    assert ft.entries == [(0.0, 1), (1.0, 4), (2.0, 4), (4.0, 4)]
    assert M.reference_spectrum(M.get_model("s2"), "laplace_beltrami", 3).entries == [
        (0.0, 1), (2.0, 3), (6.0, 5)]
    with pytest.raises(ValidationError):
        M.reference_spectrum(M.get_model("torus"), "laplace_beltrami", 3)


def test_cylinder_spectrum_by_separation_of_variables():
    ref = M.reference_spectrum(M.get_model("cylinder"), "laplace_beltrami", 4)
    # k^2 + (m pi / 2)^2 with multiplicity 2 for k > 0
    assert ref.entries[0] == (0.0, 1)
    assert ref.entries[1] == (1.0, 2)
    assert ref.entries[2][0] == pytest.approx(np.pi**2 / 4)
    assert ref.entries[2][1] == 1
    assert ref.entries[3][0] == pytest.approx(1 + np.pi**2 / 4)


@given(st.sampled_from([("s1", "laplace_beltrami"), ("s2", "connection_laplacian_tangent"),
                        ("flat_torus", "laplace_beltrami"), ("cylinder", "laplace_beltrami")]),
       st.integers(1, 12))
@settings(max_examples=30, deadline=None)
def test_reference_spectrum_sorted(pair, count):
    ref = M.reference_spectrum(M.get_model(pair[0]), pair[1], count)
    assert len(ref.entries) == count
    assert np.all(np.diff(ref.eigenvalues) > 0)
    assert np.all(ref.multiplicities >= 1)
