"""Connection graphs and their block operators.

A connection graph carries kernel weights w_ij, degrees d_i and one
orthogonal q x q block g_ij per unordered edge i < j; g_ji = g_ij^T is
generated on application. Self-loops carry w_ii = K_hat(x_i, x_i) and
g_ii = I_q.

Operator forms:

- ``S``: S(i, j) = w_ij g_ij
- ``D``: D(i, i) = d_i I_q
- ``L_unnormalized``: D - S
- ``one_minus_markov``: I - D^-1 S (not symmetric; applied as v - D^-1 S v)
- ``sym_normalized``: D^-1/2 S D^-1/2
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import sparse
from scipy.sparse.linalg import LinearOperator

from . import _backend
from .errors import ValidationError
from .kernels import KernelSpec, kernel_pairs, normalize_pairs
from .manifolds import Frame, ManifoldModel, PointCloud, transport_batch

FORMS = ("S", "D", "L_unnormalized", "one_minus_markov", "sym_normalized")
SOURCES = ("trivial", "analytic", "estimated_pca", "z2_determinant", "custom")


@dataclass
class AffinityGraph:
    """Symmetric kernel affinities stored once per unordered edge."""

    n: int
    I: np.ndarray
    J: np.ndarray
    w: np.ndarray
    w_diag: np.ndarray
    degrees: np.ndarray
    alpha: float
    h: float
    density: np.ndarray | None = None
    points: np.ndarray | None = None
    spec: KernelSpec | None = None
    warnings: list = field(default_factory=list)

    @property
    def n_edges(self):
        return len(self.I)

    def weight_matrix(self):
        """Sparse symmetric weight matrix including the self-loops."""
        idx = np.arange(self.n)
        return sparse.csr_matrix(
            (np.concatenate([self.w, self.w, self.w_diag]),
             (np.concatenate([self.I, self.J, idx]), np.concatenate([self.J, self.I, idx]))),
            shape=(self.n, self.n))

    @classmethod
    def from_weights(cls, W, alpha=0.0, h=1.0):
        """Wrap an explicit symmetric nonnegative weight matrix (dense)."""
        W = np.asarray(W, dtype=np.float64)
        if W.ndim != 2 or W.shape[0] != W.shape[1]:
            raise ValidationError("weight matrix must be square")
        if not np.array_equal(W, W.T):
            raise ValidationError("weight matrix must be symmetric")
        if np.any(W < 0) or np.any(np.diag(W) <= 0):
            raise ValidationError("weights must be nonnegative with a positive diagonal")
        n = len(W)
        I, J = np.triu_indices(n, 1)
        keep = W[I, J] > 0
        I, J = I[keep].astype(np.int64), J[keep].astype(np.int64)
        w = W[I, J].copy()
        w_diag = np.diag(W).copy()
        return cls(n, I, J, w, w_diag, _degrees(n, I, J, w, w_diag), float(alpha), float(h))


def _degrees(n, I, J, w, w_diag):
    return w_diag + np.bincount(I, weights=w, minlength=n) + np.bincount(J, weights=w, minlength=n)


def _points(cloud):
    if isinstance(cloud, PointCloud):
        return cloud.points
    X = np.asarray(cloud, dtype=np.float64)
    if X.ndim != 2 or len(X) < 2:
        raise ValidationError("points must be an n x p matrix with n >= 2")
    return X


def build_affinity(cloud, spec, h, alpha):
    """Affinity graph w_ij = K_hat_{h,alpha,n}(x_i, x_j), truncated at r_c sqrt(h)."""
    X = _points(cloud)
    n = len(X)
    I, J, kv = kernel_pairs(X, spec, h)
    w, w_diag, density = normalize_pairs(n, I, J, kv, spec, alpha)
    degrees = _degrees(n, I, J, w, w_diag)
    graph = AffinityGraph(n, I, J, w, w_diag, degrees, float(alpha), float(h), density, X, spec)
    lonely = np.flatnonzero(np.bincount(np.concatenate([I, J]), minlength=n) == 0)
    if len(lonely):
        graph.warnings.append(
            f"{len(lonely)} isolated vertex(es) after truncation (first: {lonely[0]})")
    return graph


@dataclass
class ConnectionGraph:
    affinity: AffinityGraph
    q: int
    G: np.ndarray  # (n_edges, q, q), g_ij for the stored edge (i, j), i < j
    source: str

    def connection(self, i, j):
        """g_ij for any ordered pair (identity on the diagonal)."""
        if i == j:
            return np.eye(self.q)
        a = self.affinity
        lo, hi = min(i, j), max(i, j)
        hit = np.flatnonzero((a.I == lo) & (a.J == hi))
        if not len(hit):
            raise ValidationError(f"({i}, {j}) is not an edge")
        g = self.G[hit[0]]
        return g if i < j else g.T


def _frames_array(frames, n):
    if frames is None:
        raise ValidationError("this connection source requires frames")
    if isinstance(frames, np.ndarray):
        F = np.asarray(frames, dtype=np.float64)
    else:
        frames = list(frames)
        F = np.stack([f.basis if isinstance(f, Frame) else np.asarray(f, dtype=np.float64)
                      for f in frames])
    if F.ndim != 3 or F.shape[0] != n:
        raise ValidationError("need one p x d frame per point")
    gram = np.einsum("npi,npj->nij", F, F)
    if np.max(np.abs(gram - np.eye(F.shape[2]))) > 1e-10:
        raise ValidationError("frames must be column-orthonormal to 1e-10")
    return F


def attach_connection(affinity, source, frames=None, model=None, blocks=None):
    """Attach per-edge connection blocks to an affinity graph.

    ``trivial`` gives q = 1, g = 1. ``analytic`` uses the model's parallel
    transport expressed in the given frames. ``estimated_pca`` uses Procrustes
    alignment of (typically local-PCA) frames. ``z2_determinant`` keeps only
    the sign of the alignment determinant. ``custom`` takes explicit blocks.
    """
    from .tangent import procrustes_batch

    a = affinity
    m = a.n_edges
    if source == "trivial":
        return ConnectionGraph(a, 1, np.ones((m, 1, 1)), source)
    if source == "custom":
        G = np.asarray(blocks, dtype=np.float64)
        if G.ndim != 3 or G.shape[0] != m or G.shape[1] != G.shape[2]:
            raise ValidationError("custom blocks must have shape (n_edges, q, q)")
        q = G.shape[1]
        err = np.einsum("mij,mkj->mik", G, G) - np.eye(q)
        if m and np.max(np.abs(err)) > 1e-10:
            raise ValidationError("connection blocks must be orthogonal")
        return ConnectionGraph(a, q, G, source)
    if source not in SOURCES:
        raise ValidationError(f"unknown connection source {source!r}")
    F = _frames_array(frames, a.n)
    if source == "analytic":
        if not isinstance(model, ManifoldModel):
            raise ValidationError("analytic connection requires a manifold model")
        if a.points is None:
            raise ValidationError("analytic connection requires the graph's points")
        if F.shape[2] != model.intrinsic_dim or F.shape[1] != model.ambient_dim:
            raise ValidationError("frame shape does not match the model")
        X = a.points
        G = transport_batch(model, X[a.I], X[a.J], F[a.I], F[a.J])
        return ConnectionGraph(a, model.intrinsic_dim, G, source)
    G, _ = procrustes_batch(F[a.I], F[a.J])
    if source == "estimated_pca":
        return ConnectionGraph(a, F.shape[2], G, source)
    signs = np.sign(np.linalg.det(G))
    return ConnectionGraph(a, 1, signs[:, None, None], source)


@dataclass
class BlockOperator:
    """Sparse nq x nq operator made of a scalar diagonal and one block per edge.

    ``apply`` computes diag_i v[i] + sum_j B_ij v[j], with B_ji = B_ij^T; for
    ``one_minus_markov`` the result is v - (that sum) / d_i.
    """

    form: str
    n: int
    q: int
    I: np.ndarray
    J: np.ndarray
    blocks: np.ndarray
    diag: np.ndarray
    degrees: np.ndarray

    @property
    def shape(self):
        return (self.n * self.q, self.n * self.q)

    @property
    def symmetric(self):
        return self.form != "one_minus_markov"

    def apply(self, v):
        v = np.asarray(v, dtype=np.float64)
        if v.shape != (self.n * self.q,):
            raise ValidationError(f"vector must have length {self.n * self.q}, got {v.shape}")
        out = _backend.block_matvec(self.n, self.q, self.I, self.J, self.blocks, self.diag, v)
        if self.form == "one_minus_markov":
            out = v - out / np.repeat(self.degrees, self.q)
        return out

    def to_dense(self):
        n, q = self.n, self.q
        A = np.zeros((n, q, n, q))
        idx = np.arange(n)
        A[idx, :, idx, :] = self.diag[:, None, None] * np.eye(q)
        A[self.I, :, self.J, :] = self.blocks
        A[self.J, :, self.I, :] = np.transpose(self.blocks, (0, 2, 1))
        A = A.reshape(n * q, n * q)
        if self.form == "one_minus_markov":
            A = np.eye(n * q) - A / np.repeat(self.degrees, q)[:, None]
        return A

    def to_sparse(self):
        n, q = self.n, self.q
        ii, aa = np.meshgrid(np.arange(n), np.arange(q), indexing="ij")
        diag_rows = (ii * q + aa).ravel()
        diag_vals = np.repeat(self.diag, q)
        a, b = np.meshgrid(np.arange(q), np.arange(q), indexing="ij")
        er = (self.I[:, None, None] * q + a).ravel()
        ec = (self.J[:, None, None] * q + b).ravel()
        ev = self.blocks.ravel()
        rows = np.concatenate([diag_rows, er, ec])
        cols = np.concatenate([diag_rows, ec, er])
        vals = np.concatenate([diag_vals, ev, ev])
        A = sparse.csr_matrix((vals, (rows, cols)), shape=self.shape)
        if self.form == "one_minus_markov":
            scale = sparse.diags(1.0 / np.repeat(self.degrees, q))
            A = sparse.identity(n * q, format="csr") - scale @ A
        return A

    def as_linear_operator(self):
        return LinearOperator(self.shape, matvec=self.apply,
                              rmatvec=self.apply if self.symmetric else None,
                              dtype=np.float64)

    def norm_bound(self):
        """Upper bound on the spectral norm (used by the residual contract)."""
        dmax = float(np.max(self.degrees))
        return {"S": dmax, "D": dmax, "L_unnormalized": 2 * dmax,
                "one_minus_markov": 2.0, "sym_normalized": 1.0}[self.form]


def assemble_operator(graph, form):
    """Materialize one of the block operator forms of a connection graph."""
    if isinstance(graph, AffinityGraph):
        graph = attach_connection(graph, "trivial")
    if form not in FORMS:
        raise ValidationError(f"unknown operator form {form!r}; choose from {FORMS}")
    a = graph.affinity
    q = graph.q
    I, J = a.I, a.J
    wG = a.w[:, None, None] * graph.G
    if form == "S" or form == "one_minus_markov":
        diag, blocks = a.w_diag.copy(), wG
    elif form == "D":
        diag = a.degrees.copy()
        I = J = np.empty(0, dtype=np.int64)
        blocks = np.empty((0, q, q))
    elif form == "L_unnormalized":
        diag, blocks = a.degrees - a.w_diag, -wG
    else:
        root = np.sqrt(a.degrees)
        diag = a.w_diag * (1.0 / (root * root))
        blocks = (a.w * (1.0 / (root[I] * root[J])))[:, None, None] * graph.G
    return BlockOperator(form, a.n, q, I, J, blocks, diag, a.degrees)
