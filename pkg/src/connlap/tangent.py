"""Local PCA tangent frames, Procrustes alignment and related utilities."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import _backend
from .errors import DegenerateAlignmentError, InsufficientNeighborsError, ValidationError
from .kernels import KernelSpec
from .manifolds import Frame, PointCloud

RANK_TOL = 1e-12


@dataclass
class LocalPCAResult:
    frame: Frame
    eigenvalues: np.ndarray
    neighbor_count: int
    h_pca: float


@dataclass
class LocalPCAFrames:
    """Batch result: frames (n, p, d), eigenvalues (n, p), counts and radii used."""

    frames: np.ndarray
    eigenvalues: np.ndarray
    neighbor_counts: np.ndarray
    h_pca: np.ndarray


def default_h_pca(n, d, c=1.0):
    """Local PCA bandwidth c * n^(-2/(d+2))."""
    return float(c) * float(n) ** (-2.0 / (d + 2))


def _points(cloud):
    X = cloud.points if isinstance(cloud, PointCloud) else np.asarray(cloud, dtype=np.float64)
    if X.ndim != 2:
        raise ValidationError("points must be an n x p matrix")
    return X


def _pca_weights(spec, dist, h_pca, weighting):
    if weighting == "uniform":
        return np.ones_like(dist)
    if weighting != "kernel":
        raise ValidationError(f"unknown weighting {weighting!r}")
    # kernel support is the PCA ball; only the Gaussian profile inside matters
    return spec.normalizer * np.exp(-0.5 * dist * dist / h_pca)


def local_pca(cloud, i, h_pca, d, spec=None, weighting="kernel"):
    """Local covariance of neighbors within sqrt(h_pca) of point i and its top-d frame.

    Xi = (n-1)^-1 sum_{j != i, |xi-xj| <= sqrt(h_pca)} K(|xi-xj|/sqrt(h_pca)) (xj-xi)(xj-xi)^T
    """
    X = _points(cloud)
    spec = spec or KernelSpec(dim=d)
    n, p = X.shape
    if not h_pca > 0:
        raise ValidationError("h_pca must be positive")
    diff = X - X[i]
    dist = np.sqrt(np.einsum("ij,ij->i", diff, diff))
    mask = dist <= math.sqrt(h_pca)
    mask[i] = False
    count = int(mask.sum())
    if count < d:
        raise InsufficientNeighborsError(
            f"point {i} has {count} neighbor(s) within sqrt(h_pca), need {d}", count)
    w = _pca_weights(spec, dist[mask], h_pca, weighting)
    nb = diff[mask]
    xi = (nb * w[:, None]).T @ nb / (n - 1)
    vals, vecs = np.linalg.eigh(xi)
    vals, vecs = vals[::-1], vecs[:, ::-1]
    vals = np.clip(vals, 0.0, None)[:min(p, count)]
    return LocalPCAResult(Frame(i, vecs[:, :d]), vals, count, float(h_pca))


def local_pca_frames(cloud, h_pca, d, spec=None, weighting="kernel", max_doublings=4):
    """Local PCA at every point.

    Points with fewer than d neighbors are retried with h_pca doubled, up to
    ``max_doublings`` times; the radius actually used is reported per point.
    """
    X = _points(cloud)
    spec = spec or KernelSpec(dim=d)
    n, p = X.shape
    frames = np.empty((n, p, d))
    eigvals = np.empty((n, p))
    counts = np.zeros(n, dtype=np.int64)
    used = np.full(n, np.nan)
    todo = np.arange(n)
    h = float(h_pca)
    for attempt in range(max_doublings + 1):
        I, J, d2 = _backend.pairs_within(X, math.sqrt(h))
        w = _pca_weights(spec, np.sqrt(d2), h, weighting)
        cnt = np.bincount(I, minlength=n) + np.bincount(J, minlength=n)
        ready = todo[cnt[todo] >= d]
        if len(ready):
            C = _backend.scatter_matrices(X, I, J, w)[ready] / (n - 1)
            vals, vecs = np.linalg.eigh(C)
            frames[ready] = vecs[:, :, ::-1][:, :, :d]
            eigvals[ready] = np.clip(vals[:, ::-1], 0.0, None)
            counts[ready] = cnt[ready]
            used[ready] = h
        todo = todo[cnt[todo] < d]
        if not len(todo):
            break
        h *= 2.0
    if len(todo):
        raise InsufficientNeighborsError(
            f"{len(todo)} point(s) still have fewer than {d} neighbors after enlarging h_pca",
            int(cnt[todo].min()))
    return LocalPCAFrames(frames, eigvals, counts, used)


def _as_basis(frame):
    B = frame.basis if isinstance(frame, Frame) else np.asarray(frame, dtype=np.float64)
    if B.ndim != 2:
        raise ValidationError("frame must be a p x d matrix")
    return B


def procrustes_align(O_i, O_j):
    """Closest orthogonal matrix U V^T to O_i^T O_j (SVD U S V^T)."""
    A, B = _as_basis(O_i), _as_basis(O_j)
    if A.shape != B.shape:
        raise ValidationError("frames must have the same shape")
    U, s, Vt = np.linalg.svd(A.T @ B)
    if s[-1] <= RANK_TOL * max(1.0, s[0]):
        raise DegenerateAlignmentError(
            "frames are (nearly) perpendicular; the alignment is rank deficient")
    return U @ Vt


def procrustes_batch(Fi, Fj):
    """Vectorized Procrustes over aligned stacks of frames; returns (O, smallest singular value)."""
    M = np.einsum("mpi,mpj->mij", Fi, Fj)
    U, s, Vt = np.linalg.svd(M)
    return U @ Vt, s[:, -1]


def z2_connection(O_i, O_j):
    """Sign of det of the Procrustes alignment, +1 or -1."""
    return 1 if np.linalg.det(procrustes_align(O_i, O_j)) > 0 else -1


def invariant_distance(A, B):
    """Distance between the O(q) orbits of A and B under right multiplication.

    Returns ``(min_g |A g - B|_F, g)``; g = U V^T from the SVD of A^T B.
    """
    A = np.asarray(A, dtype=np.float64)
    B = np.asarray(B, dtype=np.float64)
    if A.shape != B.shape or A.ndim != 2:
        raise ValidationError("A and B must be matrices of the same shape")
    U, _, Vt = np.linalg.svd(A.T @ B)
    g = U @ Vt
    return float(np.linalg.norm(A @ g - B)), g


def estimate_dimension(cloud, h_pca=None, spec=None):
    """Median over points of the index of the largest gap in the local PCA spectrum."""
    X = _points(cloud)
    n, p = X.shape
    if n < 10:
        raise ValidationError("dimension estimation needs at least 10 points")
    spec = spec or KernelSpec(dim=1)
    if h_pca is None:
        # conservative: use the scale at which a 1-d sample would have ~sqrt(n) neighbors
        h_pca = _diameter(X) ** 2 * n ** -0.5
    I, J, d2 = _backend.pairs_within(X, math.sqrt(h_pca))
    w = _pca_weights(spec, np.sqrt(d2), h_pca, "kernel")
    cnt = np.bincount(I, minlength=n) + np.bincount(J, minlength=n)
    C = _backend.scatter_matrices(X, I, J, w)
    vals = np.clip(np.linalg.eigvalsh(C)[:, ::-1], 0.0, None)
    ok = (cnt >= 2) & (vals[:, 0] > 0)
    if not np.any(ok):
        raise InsufficientNeighborsError("no point has enough neighbors", int(cnt.max()))
    rel = vals[ok] / vals[ok, :1]
    gaps = rel[:, :-1] - rel[:, 1:]
    dims = np.argmax(gaps, axis=1) + 1
    return int(np.median(dims))


def _diameter(X):
    # double sweep from an arbitrary point: within a factor 2 of the true diameter
    a = X[np.argmax(np.linalg.norm(X - X[0], axis=1))]
    return float(np.max(np.linalg.norm(X - a, axis=1)))


def cloud_diameter(X):
    return _diameter(_points(X))
