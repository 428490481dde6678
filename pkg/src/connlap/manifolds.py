"""Analytic manifold models.

Each model is a parametrized embedded manifold with closed-form tangent
frames, an area element for uniform sampling, and (where available) parallel
transport along minimizing geodesics, catalogued test sections and reference
spectra. The catalog is fixed:

=============  ===  ===  ========  ==========
name           d    p    boundary  orientable
=============  ===  ===  ========  ==========
s1             1    2    no        yes
interval       1    2    yes       yes
s2             2    3    no        yes
flat_torus     2    4    no        yes
torus          2    3    no        yes
cylinder       2    3    yes       yes
mobius         2    3    yes       no
klein          2    4    no        no
=============  ===  ===  ========  ==========

Random numbers come from :func:`make_rng`: Philox4x64-10 keyed with the two
64-bit words ``(seed, stream)``, counter starting at zero, doubles formed as
``(next_uint64 >> 11) * 2**-53``. Sampling consumes only such doubles, so a
seed reproduces the same cloud in any implementation of that generator.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy import integrate

from .errors import (
    ChartSingularityError,
    NoClosedFormError,
    OffManifoldError,
    ValidationError,
)

CUT_LOCUS_TOL = 1e-9
ON_MANIFOLD_TOL = 1e-8


def make_rng(seed, stream=0):
    """Counter-based generator keyed by ``(seed, stream)``."""
    seed = int(seed)
    stream = int(stream)
    if not (0 <= seed < 2**64 and 0 <= stream < 2**64):
        raise ValidationError("seed and stream must be in [0, 2**64)")
    return np.random.Generator(np.random.Philox(key=seed + (stream << 64)))


@dataclass
class PointCloud:
    """Sampled points, one per row."""

    points: np.ndarray
    manifold: "ManifoldModel | None" = None
    density_values: np.ndarray | None = None
    seed: int | None = None
    density: str = "uniform"

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=np.float64)
        if self.points.ndim != 2:
            raise ValidationError("points must be an n x p matrix")
        if self.points.shape[0] < 2:
            raise ValidationError("a point cloud needs at least 2 points")
        if not np.all(np.isfinite(self.points)):
            raise ValidationError("points must be finite")
        if self.density_values is not None:
            self.density_values = np.asarray(self.density_values, dtype=np.float64)
            if self.density_values.shape != (self.points.shape[0],):
                raise ValidationError("density_values must have one entry per point")
            if not np.all(self.density_values > 0):
                raise ValidationError("density values must be strictly positive")

    @property
    def n(self):
        return self.points.shape[0]

    @property
    def p(self):
        return self.points.shape[1]


@dataclass
class Frame:
    """Column-orthonormal basis of an embedded tangent plane."""

    base_point_index: int
    basis: np.ndarray

    def __post_init__(self):
        self.basis = np.asarray(self.basis, dtype=np.float64)
        if self.basis.ndim != 2:
            raise ValidationError("frame basis must be a p x d matrix")
        gram = self.basis.T @ self.basis
        if np.max(np.abs(gram - np.eye(gram.shape[0]))) > 1e-10:
            raise ValidationError("frame basis is not column-orthonormal")


@dataclass
class ReferenceSpectrum:
    operator_kind: str
    entries: list[tuple[float, int]]

    @property
    def eigenvalues(self):
        return np.array([e for e, _ in self.entries])

    @property
    def multiplicities(self):
        return np.array([m for _, m in self.entries], dtype=int)

    def expanded(self):
        """Eigenvalues repeated by multiplicity, ascending."""
        return np.repeat(self.eigenvalues, self.multiplicities)


@dataclass
class FieldValue:
    """A catalogued section at one point, in frame coordinates.

    ``drift`` is ``2 grad X . grad(p**(1-alpha)) / p**(1-alpha)``.
    """

    value: np.ndarray
    laplacian: np.ndarray
    drift: np.ndarray
    kind: str = "scalar"


# ----------------------------------------------------------------------------
# small vectorized helpers


def _rot2(angle):
    c, s = np.cos(angle), np.sin(angle)
    R = np.empty(angle.shape + (2, 2))
    R[..., 0, 0] = c
    R[..., 0, 1] = -s
    R[..., 1, 0] = s
    R[..., 1, 1] = c
    return R


def _circle_transport(a, b):
    """Rotation in the plane carrying unit vector b onto unit vector a."""
    angle = np.arctan2(b[:, 0] * a[:, 1] - b[:, 1] * a[:, 0],
                       np.einsum("ij,ij->i", a, b))
    cut = np.linalg.norm(a + b, axis=1) < CUT_LOCUS_TOL
    return _rot2(angle), cut


def _sphere_transport(x, y):
    """Rotation about y x x carrying y onto x (parallel transport on S^2)."""
    v = np.cross(y, x)
    c = np.einsum("ij,ij->i", x, y)
    K = np.zeros((len(c), 3, 3))
    K[:, 0, 1], K[:, 0, 2] = -v[:, 2], v[:, 1]
    K[:, 1, 0], K[:, 1, 2] = v[:, 2], -v[:, 0]
    K[:, 2, 0], K[:, 2, 1] = -v[:, 1], v[:, 0]
    cut = np.linalg.norm(x + y, axis=1) < CUT_LOCUS_TOL
    denom = np.where(cut, 1.0, 1.0 + c)
    R = np.eye(3)[None] + K + (K @ K) / denom[:, None, None]
    return R, cut


def _as_points(x, p):
    X = np.atleast_2d(np.asarray(x, dtype=np.float64))
    if X.shape[1] != p:
        raise ValidationError(f"expected points in R^{p}, got dimension {X.shape[1]}")
    return X


# ----------------------------------------------------------------------------
# densities


@dataclass(frozen=True)
class _Density:
    name: str
    weight: object  # params -> relative weight, bounded by weight_max
    weight_max: float
    log_grad: object = None  # params -> d/dparam log p (1-d models only)
    normalizer: float = 1.0  # integral of weight over the manifold


class ManifoldModel:
    """Base class for catalogued manifolds.

    Subclasses provide ``embed``, ``coords``, ``jacobian`` and the parameter
    box; everything else has generic defaults that subclasses may override.
    """

    name: str
    intrinsic_dim: int
    ambient_dim: int
    has_boundary: bool = False
    orientable: bool = True
    diameter: float

    @property
    def fiber_dim(self):
        return self.intrinsic_dim

    def __repr__(self):
        return f"<ManifoldModel {self.name}>"

    # geometry -------------------------------------------------------------
    param_box: np.ndarray

    def embed(self, P):
        raise NotImplementedError

    def coords(self, X):
        raise NotImplementedError

    def jacobian(self, P):
        raise NotImplementedError

    def area_element(self, P):
        Jm = self.jacobian(P)
        G = np.einsum("mpi,mpj->mij", Jm, Jm)
        return np.sqrt(np.linalg.det(G))

    area_bound: float

    @cached_property
    def volume(self):
        box = self.param_box
        if self.intrinsic_dim == 1:
            val, _ = integrate.quad(lambda t: self.area_element(np.array([[t]]))[0],
                                    box[0, 0], box[0, 1])
            return val
        val, _ = integrate.dblquad(
            lambda v, u: self.area_element(np.array([[u, v]]))[0],
            box[0, 0], box[0, 1], box[1, 0], box[1, 1], epsabs=1e-11, epsrel=1e-11)
        return val

    def in_box(self, P):
        box = self.param_box
        tol = 1e-12
        return np.all((P >= box[:, 0] - tol) & (P <= box[:, 1] + tol), axis=1)

    def residual(self, X):
        X = _as_points(X, self.ambient_dim)
        P = self.coords(X)
        res = np.linalg.norm(self.embed(P) - X, axis=1)
        res[~self.in_box(P)] = np.inf
        return res

    def check_on_manifold(self, X, tol=ON_MANIFOLD_TOL):
        res = self.residual(X)
        bad = np.flatnonzero(~(res <= tol))
        if len(bad):
            raise OffManifoldError(
                f"{len(bad)} point(s) lie off {self.name} (max residual {np.max(res[bad]):.3g})")

    def boundary_distance(self, X):
        return np.full(len(np.atleast_2d(X)), np.inf)

    # frames ---------------------------------------------------------------
    def frames(self, X):
        """Orthonormal tangent frames at each row of X, shape (n, p, d)."""
        X = _as_points(X, self.ambient_dim)
        Jm = self.jacobian(self.coords(X))
        return Jm / np.linalg.norm(Jm, axis=1, keepdims=True)

    # transport ------------------------------------------------------------
    def ambient_transport(self, X, Y):
        """Ambient linear map carrying T_y onto T_x along the minimizing geodesic.

        Returns ``(R, cut)`` with R of shape (m, p, p) and a boolean cut-locus
        mask.
        """
        raise NoClosedFormError(f"{self.name} has no closed-form parallel transport")

    # catalogs -------------------------------------------------------------
    def densities(self):
        return {"uniform": _Density("uniform", lambda P: np.ones(len(P)), 1.0,
                                    lambda P: np.zeros(len(P)), self.volume)}

    def fields(self):
        return {}

    def spectra(self):
        return {}


# ----------------------------------------------------------------------------
# catalog


class Circle(ManifoldModel):
    name = "s1"
    intrinsic_dim = 1
    ambient_dim = 2
    diameter = 2.0
    param_box = np.array([[0.0, 2 * np.pi]])
    area_bound = 1.0

    def embed(self, P):
        t = P[:, 0]
        return np.c_[np.cos(t), np.sin(t)]

    def coords(self, X):
        return np.mod(np.arctan2(X[:, 1], X[:, 0]), 2 * np.pi)[:, None]

    def jacobian(self, P):
        t = P[:, 0]
        return np.stack([-np.sin(t), np.cos(t)], axis=1)[:, :, None]

    def area_element(self, P):
        return np.ones(len(P))

    @cached_property
    def volume(self):
        return 2 * np.pi

    def ambient_transport(self, X, Y):
        return _circle_transport(X, Y)

    def densities(self):
        d = super().densities()
        d["two_plus_sin"] = _Density(
            "two_plus_sin",
            lambda P: 2.0 + np.sin(P[:, 0]),
            3.0,
            lambda P: np.cos(P[:, 0]) / (2.0 + np.sin(P[:, 0])),
            4 * np.pi,
        )
        return d

    def fields(self):
        return {
            "const": _scalar_field_1d(lambda t: np.ones_like(t), lambda t: np.zeros_like(t),
                                      lambda t: np.zeros_like(t)),
            "sin": _scalar_field_1d(np.sin, np.cos, lambda t: -np.sin(t)),
            "cos2": _scalar_field_1d(lambda t: np.cos(2 * t), lambda t: -2 * np.sin(2 * t),
                                     lambda t: -4 * np.cos(2 * t)),
        }

    def spectra(self):
        def lb(count):
            return [(0.0, 1)] + [(float(k * k), 2) for k in range(1, count)]
        # T S^1 is flat and trivial: the tangent connection Laplacian is d^2/dt^2
        return {"laplace_beltrami": lb, "connection_laplacian_tangent": lb}


class Interval(ManifoldModel):
    """The segment [0, pi] on the first axis of R^2."""

    name = "interval"
    intrinsic_dim = 1
    ambient_dim = 2
    has_boundary = True
    diameter = np.pi
    param_box = np.array([[0.0, np.pi]])
    area_bound = 1.0

    def embed(self, P):
        return np.c_[P[:, 0], np.zeros(len(P))]

    def coords(self, X):
        return X[:, :1].copy()

    def jacobian(self, P):
        Jm = np.zeros((len(P), 2, 1))
        Jm[:, 0, 0] = 1.0
        return Jm

    def area_element(self, P):
        return np.ones(len(P))

    @cached_property
    def volume(self):
        return np.pi

    def boundary_distance(self, X):
        x = np.atleast_2d(X)[:, 0]
        return np.minimum(x, np.pi - x)

    def ambient_transport(self, X, Y):
        m = len(X)
        return np.broadcast_to(np.eye(2), (m, 2, 2)).copy(), np.zeros(m, dtype=bool)

    def fields(self):
        return {
            "const": _scalar_field_1d(lambda t: np.ones_like(t), lambda t: np.zeros_like(t),
                                      lambda t: np.zeros_like(t)),
            "cos": _scalar_field_1d(np.cos, lambda t: -np.sin(t), lambda t: -np.cos(t)),
            "cos2": _scalar_field_1d(lambda t: np.cos(2 * t), lambda t: -2 * np.sin(2 * t),
                                     lambda t: -4 * np.cos(2 * t)),
        }

    def spectra(self):
        def neumann(count):
            return [(float(k * k), 1) for k in range(count)]
        return {"laplace_beltrami": neumann, "connection_laplacian_tangent": neumann}


class Sphere(ManifoldModel):
    """Unit sphere, parametrized by (z, phi) so the area element is constant."""

    name = "s2"
    intrinsic_dim = 2
    ambient_dim = 3
    diameter = 2.0
    param_box = np.array([[-1.0, 1.0], [0.0, 2 * np.pi]])
    area_bound = 1.0

    def embed(self, P):
        z, phi = P[:, 0], P[:, 1]
        r = np.sqrt(np.clip(1.0 - z * z, 0.0, None))
        return np.c_[r * np.cos(phi), r * np.sin(phi), z]

    def coords(self, X):
        z = np.clip(X[:, 2], -1.0, 1.0)
        return np.c_[z, np.mod(np.arctan2(X[:, 1], X[:, 0]), 2 * np.pi)]

    def residual(self, X):
        X = _as_points(X, 3)
        return np.abs(np.linalg.norm(X, axis=1) - 1.0)

    def area_element(self, P):
        return np.ones(len(P))

    @cached_property
    def volume(self):
        return 4 * np.pi

    @staticmethod
    def _chart_frames(X):
        # (e_theta, e_phi) of the chart with poles at +-e3
        x, y, z = X.T
        rho = np.hypot(x, y)
        with np.errstate(invalid="ignore", divide="ignore"):
            cphi, sphi = x / rho, y / rho
        F = np.empty((len(X), 3, 2))
        F[:, :, 0] = np.c_[z * cphi, z * sphi, -rho]
        F[:, :, 1] = np.c_[-sphi, cphi, np.zeros(len(X))]
        return F, rho

    def chart_frames(self, X, chart):
        """Frames from chart 0 (poles at +-e3) or chart 1 (poles at +-e1)."""
        X = _as_points(X, 3)
        if chart == 0:
            F, rho = self._chart_frames(X)
        else:
            # cyclic relabelling (x, y, z) -> (y, z, x) keeps the orientation
            F, rho = self._chart_frames(X[:, [1, 2, 0]])
            F = F[:, [2, 0, 1], :]
        if np.any(rho < 1e-8):
            raise ChartSingularityError(
                f"point at a pole of chart {chart}; use the other chart")
        return F

    def frames(self, X):
        X = _as_points(X, 3)
        use_std = np.abs(X[:, 2]) <= np.abs(X[:, 0])
        F = np.empty((len(X), 3, 2))
        if np.any(use_std):
            F[use_std] = self.chart_frames(X[use_std], 0)
        if np.any(~use_std):
            F[~use_std] = self.chart_frames(X[~use_std], 1)
        return F

    def ambient_transport(self, X, Y):
        return _sphere_transport(X, Y)

    def fields(self):
        return {
            "const": _sphere_const,
            "z": _sphere_z,
            "grad_z": _sphere_grad_z,
        }

    def spectra(self):
        def lb(count):
            return [(float(l * (l + 1)), 2 * l + 1) for l in range(count)]

        def tangent(count):
            # rough Laplacian on 1-forms = Hodge Laplacian - Ric, Ric = 1
            return [(float(l * (l + 1) - 1), 2 * (2 * l + 1)) for l in range(1, count + 1)]
        return {"laplace_beltrami": lb, "connection_laplacian_tangent": tangent}


class FlatTorus(ManifoldModel):
    """Product of two unit circles in R^4."""

    name = "flat_torus"
    intrinsic_dim = 2
    ambient_dim = 4
    diameter = 2 * np.sqrt(2.0)
    param_box = np.array([[0.0, 2 * np.pi], [0.0, 2 * np.pi]])
    area_bound = 1.0

    def embed(self, P):
        u, v = P[:, 0], P[:, 1]
        return np.c_[np.cos(u), np.sin(u), np.cos(v), np.sin(v)]

    def coords(self, X):
        return np.mod(np.c_[np.arctan2(X[:, 1], X[:, 0]), np.arctan2(X[:, 3], X[:, 2])],
                      2 * np.pi)

    def jacobian(self, P):
        u, v = P[:, 0], P[:, 1]
        Jm = np.zeros((len(P), 4, 2))
        Jm[:, 0, 0], Jm[:, 1, 0] = -np.sin(u), np.cos(u)
        Jm[:, 2, 1], Jm[:, 3, 1] = -np.sin(v), np.cos(v)
        return Jm

    def area_element(self, P):
        return np.ones(len(P))

    @cached_property
    def volume(self):
        return 4 * np.pi**2

    def ambient_transport(self, X, Y):
        Ru, cu = _circle_transport(X[:, :2], Y[:, :2])
        Rv, cv = _circle_transport(X[:, 2:], Y[:, 2:])
        R = np.zeros((len(X), 4, 4))
        R[:, :2, :2] = Ru
        R[:, 2:, 2:] = Rv
        return R, cu | cv

    def fields(self):
        def sin_u(model, X, P, frames, alpha, density):
            u = P[:, 0]
            return np.sin(u)[:, None], -np.sin(u)[:, None], np.zeros((len(u), 1))
        return {"const": _const_field, "sin_u": sin_u}

    def spectra(self):
        def lattice(count, mult):
            vals = {}
            k = int(np.ceil(np.sqrt(count))) + 3
            for a in range(-k, k + 1):
                for b in range(-k, k + 1):
                    vals[a * a + b * b] = vals.get(a * a + b * b, 0) + 1
            keys = sorted(vals)[:count]
            return [(float(e), mult * vals[e]) for e in keys]
        return {"laplace_beltrami": lambda c: lattice(c, 1),
                "connection_laplacian_tangent": lambda c: lattice(c, 2)}


class Torus(ManifoldModel):
    """Torus of revolution with radii R (center circle) and r (tube) in R^3."""

    name = "torus"
    intrinsic_dim = 2
    ambient_dim = 3
    param_box = np.array([[0.0, 2 * np.pi], [0.0, 2 * np.pi]])

    def __init__(self, R=2.0, r=1.0):
        self.R, self.r = float(R), float(r)
        self.diameter = 2 * (self.R + self.r)
        self.area_bound = self.r * (self.R + self.r)

    def embed(self, P):
        u, v = P[:, 0], P[:, 1]
        rho = self.R + self.r * np.cos(v)
        return np.c_[rho * np.cos(u), rho * np.sin(u), self.r * np.sin(v)]

    def coords(self, X):
        u = np.arctan2(X[:, 1], X[:, 0])
        v = np.arctan2(X[:, 2], np.hypot(X[:, 0], X[:, 1]) - self.R)
        return np.mod(np.c_[u, v], 2 * np.pi)

    def jacobian(self, P):
        u, v = P[:, 0], P[:, 1]
        rho = self.R + self.r * np.cos(v)
        Jm = np.zeros((len(P), 3, 2))
        Jm[:, 0, 0], Jm[:, 1, 0] = -rho * np.sin(u), rho * np.cos(u)
        Jm[:, 0, 1] = -self.r * np.sin(v) * np.cos(u)
        Jm[:, 1, 1] = -self.r * np.sin(v) * np.sin(u)
        Jm[:, 2, 1] = self.r * np.cos(v)
        return Jm

    def area_element(self, P):
        return self.r * (self.R + self.r * np.cos(P[:, 1]))

    @cached_property
    def volume(self):
        return 4 * np.pi**2 * self.R * self.r


class Cylinder(ManifoldModel):
    """Unit-radius cylinder with axis e3 and height in [-1, 1]."""

    name = "cylinder"
    intrinsic_dim = 2
    ambient_dim = 3
    has_boundary = True
    diameter = 2 * np.sqrt(2.0)
    param_box = np.array([[0.0, 2 * np.pi], [-1.0, 1.0]])
    area_bound = 1.0

    def embed(self, P):
        return np.c_[np.cos(P[:, 0]), np.sin(P[:, 0]), P[:, 1]]

    def coords(self, X):
        return np.c_[np.mod(np.arctan2(X[:, 1], X[:, 0]), 2 * np.pi), X[:, 2]]

    def jacobian(self, P):
        Jm = np.zeros((len(P), 3, 2))
        Jm[:, 0, 0], Jm[:, 1, 0] = -np.sin(P[:, 0]), np.cos(P[:, 0])
        Jm[:, 2, 1] = 1.0
        return Jm

    def area_element(self, P):
        return np.ones(len(P))

    @cached_property
    def volume(self):
        return 4 * np.pi

    def boundary_distance(self, X):
        z = np.atleast_2d(X)[:, 2]
        return np.minimum(z + 1.0, 1.0 - z)

    def ambient_transport(self, X, Y):
        Rc, cut = _circle_transport(X[:, :2], Y[:, :2])
        R = np.zeros((len(X), 3, 3))
        R[:, :2, :2] = Rc
        R[:, 2, 2] = 1.0
        return R, cut

    def fields(self):
        def cos_phi(model, X, P, frames, alpha, density):
            c = np.cos(P[:, 0])
            return c[:, None], -c[:, None], np.zeros((len(c), 1))
        return {"const": _const_field, "cos_phi": cos_phi}

    def spectra(self):
        def neumann(count, mult):
            vals = {}
            for k in range(0, count + 2):
                for m in range(0, count + 2):
                    e = round(k * k + (m * np.pi / 2.0) ** 2, 12)
                    vals[e] = vals.get(e, 0) + (1 if k == 0 else 2)
            keys = sorted(vals)[:count]
            return [(float(e), mult * vals[e]) for e in keys]
        return {"laplace_beltrami": lambda c: neumann(c, 1),
                "connection_laplacian_tangent": lambda c: neumann(c, 2)}


class MobiusBand(ManifoldModel):
    """Mobius band around a circle of radius R, ruling half-width w, in R^3.

    Parameters (u, s) with u in [0, 2 pi), s in [-w, w]; (u + 2 pi, s) is
    identified with (u, -s).
    """

    name = "mobius"
    intrinsic_dim = 2
    ambient_dim = 3
    has_boundary = True
    orientable = False

    def __init__(self, R=0.5, w=0.2):
        self.R, self.w = float(R), float(w)
        self.param_box = np.array([[0.0, 2 * np.pi], [-self.w, self.w]])
        self.diameter = 2 * (self.R + self.w)
        self.area_bound = math.sqrt((self.R + self.w) ** 2 + self.w**2 / 4)

    def embed(self, P):
        u, s = P[:, 0], P[:, 1]
        rho = self.R + s * np.cos(u / 2)
        return np.c_[rho * np.cos(u), rho * np.sin(u), s * np.sin(u / 2)]

    def coords(self, X):
        u = np.mod(np.arctan2(X[:, 1], X[:, 0]), 2 * np.pi)
        rho = np.hypot(X[:, 0], X[:, 1])
        s = (rho - self.R) * np.cos(u / 2) + X[:, 2] * np.sin(u / 2)
        return np.c_[u, s]

    def jacobian(self, P):
        u, s = P[:, 0], P[:, 1]
        c, sn = np.cos(u / 2), np.sin(u / 2)
        rho = self.R + s * c
        Jm = np.zeros((len(P), 3, 2))
        Jm[:, 0, 0] = -rho * np.sin(u) - 0.5 * s * sn * np.cos(u)
        Jm[:, 1, 0] = rho * np.cos(u) - 0.5 * s * sn * np.sin(u)
        Jm[:, 2, 0] = 0.5 * s * c
        Jm[:, 0, 1] = c * np.cos(u)
        Jm[:, 1, 1] = c * np.sin(u)
        Jm[:, 2, 1] = sn
        return Jm

    def area_element(self, P):
        u, s = P[:, 0], P[:, 1]
        return np.sqrt((self.R + s * np.cos(u / 2)) ** 2 + s * s / 4)

    def boundary_distance(self, X):
        return self.w - np.abs(self.coords(np.atleast_2d(X))[:, 1])


class KleinBottle(ManifoldModel):
    """Klein bottle in R^4 (tube radius r around a circle of radius R).

    (u + 2 pi, v) is identified with (u, -v).
    """

    name = "klein"
    intrinsic_dim = 2
    ambient_dim = 4
    orientable = False
    param_box = np.array([[0.0, 2 * np.pi], [0.0, 2 * np.pi]])

    def __init__(self, R=1.0, r=0.5):
        self.R, self.r = float(R), float(r)
        self.diameter = 2 * (self.R + self.r)
        self.area_bound = self.r * math.sqrt((self.R + self.r) ** 2 + self.r**2 / 4)

    def embed(self, P):
        u, v = P[:, 0], P[:, 1]
        rho = self.R + self.r * np.cos(v)
        return np.c_[rho * np.cos(u), rho * np.sin(u),
                     self.r * np.sin(v) * np.cos(u / 2), self.r * np.sin(v) * np.sin(u / 2)]

    def coords(self, X):
        u = np.mod(np.arctan2(X[:, 1], X[:, 0]), 2 * np.pi)
        a = X[:, 2] * np.cos(u / 2) + X[:, 3] * np.sin(u / 2)
        v = np.arctan2(a, np.hypot(X[:, 0], X[:, 1]) - self.R)
        return np.c_[u, np.mod(v, 2 * np.pi)]

    def jacobian(self, P):
        u, v = P[:, 0], P[:, 1]
        r = self.r
        rho = self.R + r * np.cos(v)
        Jm = np.zeros((len(P), 4, 2))
        Jm[:, 0, 0] = -rho * np.sin(u)
        Jm[:, 1, 0] = rho * np.cos(u)
        Jm[:, 2, 0] = -0.5 * r * np.sin(v) * np.sin(u / 2)
        Jm[:, 3, 0] = 0.5 * r * np.sin(v) * np.cos(u / 2)
        Jm[:, 0, 1] = -r * np.sin(v) * np.cos(u)
        Jm[:, 1, 1] = -r * np.sin(v) * np.sin(u)
        Jm[:, 2, 1] = r * np.cos(v) * np.cos(u / 2)
        Jm[:, 3, 1] = r * np.cos(v) * np.sin(u / 2)
        return Jm

    def area_element(self, P):
        v = P[:, 1]
        return self.r * np.sqrt((self.R + self.r * np.cos(v)) ** 2
                                + self.r**2 * np.sin(v) ** 2 / 4)


# ----------------------------------------------------------------------------
# field implementations: f(model, X, P, frames, alpha, density) -> (value,
# laplacian, drift), each of shape (m, q) in frame coordinates


def _scalar_field_1d(f, df, d2f):
    def field_fn(model, X, P, frames, alpha, density):
        t = P[:, 0]
        dens = model.densities()[density]
        drift = 2.0 * df(t) * (1.0 - alpha) * dens.log_grad(P)
        return f(t)[:, None], d2f(t)[:, None], drift[:, None]
    return field_fn


def _require_uniform(density, alpha):
    if density != "uniform" and alpha != 1.0:
        raise NoClosedFormError("drift term only catalogued for uniform sampling or alpha=1")


def _const_field(model, X, P, frames, alpha, density):
    m = len(X)
    return np.ones((m, 1)), np.zeros((m, 1)), np.zeros((m, 1))


def _sphere_const(model, X, P, frames, alpha, density):
    return _const_field(model, X, P, frames, alpha, density)


def _sphere_z(model, X, P, frames, alpha, density):
    _require_uniform(density, alpha)
    z = X[:, 2]
    return z[:, None], -2.0 * z[:, None], np.zeros((len(z), 1))


def _sphere_grad_z(model, X, P, frames, alpha, density):
    """Gradient of the height function, e3 - z x; an eigenfield with eigenvalue 1."""
    _require_uniform(density, alpha)
    amb = np.array([0.0, 0.0, 1.0])[None, :] - X[:, 2:3] * X
    coeff = np.einsum("mpi,mp->mi", frames, amb)
    return coeff, -coeff, np.zeros_like(coeff)


_TANGENT_FIELDS = {"grad_z"}


# ----------------------------------------------------------------------------
# public operations

_CATALOG = {
    "s1": Circle,
    "interval": Interval,
    "s2": Sphere,
    "flat_torus": FlatTorus,
    "torus": Torus,
    "cylinder": Cylinder,
    "mobius": MobiusBand,
    "klein": KleinBottle,
}


def get_model(name):
    try:
        return _CATALOG[name]()
    except KeyError:
        raise ValidationError(
            f"unknown manifold {name!r}; choose from {', '.join(sorted(_CATALOG))}") from None


def model_names():
    return sorted(_CATALOG)


def sample(model, n, density="uniform", seed=0):
    """Draw n i.i.d. points from ``model`` under a catalogued density.

    Candidates come in blocks of ``max(256, 2n)`` rows of ``d + 1`` uniforms:
    the first d map affinely onto the parameter box, the last is the
    acceptance draw against ``area_element * density_weight / bound``.
    """
    if isinstance(model, str):
        model = get_model(model)
    n = int(n)
    if n < 2:
        raise ValidationError("n must be at least 2")
    dens_table = model.densities()
    if density not in dens_table:
        raise ValidationError(
            f"unknown density {density!r} for {model.name}; choose from {sorted(dens_table)}")
    dens = dens_table[density]
    rng = make_rng(seed)
    box = model.param_box
    lo, span = box[:, 0], box[:, 1] - box[:, 0]
    bound = model.area_bound * dens.weight_max
    d = model.intrinsic_dim
    accepted = []
    have = 0
    block = max(256, 2 * n)
    while have < n:
        U = rng.random((block, d + 1))
        P = lo + U[:, :d] * span
        w = model.area_element(P) * dens.weight(P)
        keep = U[:, d] * bound < w
        accepted.append(P[keep])
        have += int(keep.sum())
    P = np.concatenate(accepted)[:n]
    X = model.embed(P)
    values = dens.weight(P) / dens.normalizer
    return PointCloud(points=X, manifold=model, density_values=values, seed=int(seed),
                      density=density)


def analytic_frame(model, x, chart=None, index=-1):
    """Closed-form tangent frame at a single point x."""
    X = _as_points(x, model.ambient_dim)
    model.check_on_manifold(X)
    if chart is not None:
        if not isinstance(model, Sphere):
            raise ValidationError(f"{model.name} has a single chart")
        F = model.chart_frames(X, chart)
    else:
        F = model.frames(X)
    return Frame(index, F[0])


def analytic_transport(model, x, y, frame_x, frame_y):
    """Parallel transport from y to x in frame coordinates (q = d).

    Columns of the result are the frame_x coordinates of the transported
    frame_y columns; the zero matrix is returned when y is in the cut locus
    of x.
    """
    X = _as_points(x, model.ambient_dim)
    Y = _as_points(y, model.ambient_dim)
    model.check_on_manifold(np.vstack([X, Y]))
    Fx = frame_x.basis if isinstance(frame_x, Frame) else np.asarray(frame_x)
    Fy = frame_y.basis if isinstance(frame_y, Frame) else np.asarray(frame_y)
    return transport_batch(model, X, Y, Fx[None], Fy[None])[0]


def transport_batch(model, X, Y, FX, FY):
    """Vectorized :func:`analytic_transport` over aligned rows."""
    R, cut = model.ambient_transport(X, Y)
    G = np.einsum("mpi,mpq,mqj->mij", FX, R, FY)
    G[cut] = 0.0
    return G


def field_values(model, field_id, X, frames=None, alpha=1.0, density="uniform"):
    """Batch evaluation of a catalogued section; returns (value, laplacian, drift)."""
    table = model.fields()
    if field_id not in table:
        raise ValidationError(
            f"unknown field {field_id!r} for {model.name}; choose from {sorted(table)}")
    if density not in model.densities():
        raise ValidationError(f"unknown density {density!r} for {model.name}")
    X = _as_points(X, model.ambient_dim)
    if frames is None and field_id in _TANGENT_FIELDS:
        frames = model.frames(X)
    return table[field_id](model, X, model.coords(X), frames, float(alpha), density)


def field_kind(field_id):
    return "tangent" if field_id in _TANGENT_FIELDS else "scalar"


def analytic_field(model, field_id, x, alpha=1.0, density="uniform", frame=None):
    """Catalogued section at a point, with its connection Laplacian and drift term."""
    X = _as_points(x, model.ambient_dim)
    model.check_on_manifold(X)
    frames = None
    if frame is not None:
        frames = (frame.basis if isinstance(frame, Frame) else np.asarray(frame))[None]
    value, lap, drift = field_values(model, field_id, X, frames, alpha, density)
    return FieldValue(value[0], lap[0], drift[0], field_kind(field_id))


def reference_spectrum(model, operator_kind, count):
    table = model.spectra()
    if operator_kind not in table:
        raise ValidationError(
            f"no catalogued {operator_kind} spectrum for {model.name}")
    count = int(count)
    if count < 1:
        raise ValidationError("count must be positive")
    return ReferenceSpectrum(operator_kind, table[operator_kind](count))


def sphere_tangent_eigenfields(X, frames):
    """Basis of the six-dimensional lowest eigenspace of the S^2 tangent
    connection Laplacian (gradients and rotations of the coordinate
    functions), in frame coordinates, flattened to length 2n."""
    cols = []
    for k in range(3):
        e = np.zeros(3)
        e[k] = 1.0
        grad = e[None, :] - X[:, k:k + 1] * X
        rot = np.cross(e[None, :], X)
        for amb in (grad, rot):
            cols.append(np.einsum("mpi,mp->mi", frames, amb).ravel())
    return np.stack(cols, axis=1)
