"""Block eigensolving, eigenvalue rescaling, VDM / DM embeddings and the
Hilbert-Schmidt affinity identity.

Markov-type decompositions (``sym_normalized`` and ``one_minus_markov``)
store the eigenvalues of D^-1 S, in descending order; the eigenvalues of
I - D^-1 S are one minus these. Eigenvectors of ``sym_normalized`` are
orthonormal in the standard inner product; those stored for
``one_minus_markov`` are the corresponding right eigenvectors of D^-1 S,
orthonormal in the D-weighted inner product.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import linalg
from scipy.sparse.linalg import ArpackNoConvergence, eigsh

from .errors import EigenSolverError, ValidationError
from .graph import BlockOperator
from .kernels import KernelSpec, kernel_moment
from .manifolds import make_rng

DENSE_LIMIT = 2000
HS_BRUTE_LIMIT = 500


@dataclass
class SpectralDecomposition:
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray  # (nq, k)
    operator_form: str
    residuals: np.ndarray
    degrees: np.ndarray
    n: int
    q: int
    seed: int | None = None

    @property
    def k(self):
        return len(self.eigenvalues)

    @property
    def sym_vectors(self):
        """Eigenvectors of D^-1/2 S D^-1/2 (standard-orthonormal)."""
        if self.operator_form == "one_minus_markov":
            return self.eigenvectors * np.repeat(np.sqrt(self.degrees), self.q)[:, None]
        return self.eigenvectors

    @property
    def markov_vectors(self):
        """Right eigenvectors of D^-1 S (D-orthonormal)."""
        if self.operator_form == "sym_normalized":
            return self.eigenvectors / np.repeat(np.sqrt(self.degrees), self.q)[:, None]
        if self.operator_form == "one_minus_markov":
            return self.eigenvectors
        raise ValidationError("markov vectors only exist for normalized forms")

    def blocks(self, vectors=None):
        """Eigenvectors reshaped to (n, q, k)."""
        V = self.sym_vectors if vectors is None else vectors
        return V.reshape(self.n, self.q, -1)


def _symmetrized(op):
    """The symmetric operator whose spectrum the solver actually computes."""
    if op.form != "one_minus_markov":
        return op
    inv_root = 1.0 / np.sqrt(op.degrees)
    blocks = (inv_root[op.I] * inv_root[op.J])[:, None, None] * op.blocks
    return BlockOperator("sym_normalized", op.n, op.q, op.I, op.J, blocks,
                         op.diag * inv_root * inv_root, op.degrees)


def eigendecompose(op, k, tol=1e-8, which=None, seed=0):
    """Top-k eigenpairs of a symmetric block operator (or of D^-1 S for I - D^-1 S).

    ``which`` is ``"largest"`` (default for normalized forms) or
    ``"smallest"`` (default for D - S, S and D). Dense LAPACK for nq <= 2000,
    implicitly restarted Lanczos (ARPACK) above, with a start vector drawn
    from the keyed generator.
    """
    if not isinstance(op, BlockOperator):
        raise ValidationError("eigendecompose expects a BlockOperator")
    nq = op.n * op.q
    k = int(k)
    if not 1 <= k <= nq:
        raise ValidationError(f"k must be in [1, {nq}]")
    if which is None:
        which = "largest" if op.form in ("sym_normalized", "one_minus_markov") else "smallest"
    if which not in ("largest", "smallest"):
        raise ValidationError("which must be 'largest' or 'smallest'")
    A = _symmetrized(op)
    if nq <= DENSE_LIMIT or k >= nq - 1:
        M = A.to_dense()
        lo, hi = (nq - k, nq - 1) if which == "largest" else (0, k - 1)
        vals, vecs = linalg.eigh(M, subset_by_index=[lo, hi])
    else:
        v0 = make_rng(seed, 1).random(nq) - 0.5
        try:
            vals, vecs = eigsh(A.as_linear_operator(), k=k, which="LA" if which == "largest" else "SA",
                               v0=v0, tol=tol * 1e-3, maxiter=max(1000, 20 * nq))
        except ArpackNoConvergence as exc:
            res = _residuals(A, exc.eigenvalues, exc.eigenvectors)
            raise EigenSolverError(
                f"Lanczos did not converge: {len(exc.eigenvalues)} of {k} pairs", res) from exc
    order = np.argsort(vals)[::-1]
    vals, vecs = vals[order], vecs[:, order]
    # fix signs so the largest-magnitude entry of every vector is positive
    pivot = np.argmax(np.abs(vecs), axis=0)
    vecs = vecs * np.sign(vecs[pivot, np.arange(vecs.shape[1])])
    res = _residuals(A, vals, vecs)
    bound = A.norm_bound()
    if np.any(res > tol * bound):
        raise EigenSolverError(
            f"residual {res.max():.3g} exceeds {tol:g} * |A| ({bound:.3g})", res)
    gram = vecs.T @ vecs
    if np.max(np.abs(gram - np.eye(len(vals)))) > 1e-8:
        raise EigenSolverError("eigenvectors lost orthonormality", res)
    if op.form == "one_minus_markov":
        vecs = vecs / np.repeat(np.sqrt(op.degrees), op.q)[:, None]
    return SpectralDecomposition(vals, vecs, op.form, res, op.degrees.copy(), op.n, op.q,
                                 int(seed))


def _residuals(A, vals, vecs):
    out = np.empty(len(vals))
    for c in range(len(vals)):
        out[c] = np.linalg.norm(A.apply(vecs[:, c]) - vals[c] * vecs[:, c])
    return out


def laplacian_scale(spec, d):
    """2d / mu_{1,2}: converts (1 - lambda) / h into connection Laplacian units."""
    return 2.0 * d / kernel_moment(spec, d, 1, 2, 0)


def rescale_eigenvalues(decomp, h, spec=None, d=None):
    """lambda_hat = (2d / mu_{1,2}) (1 - lambda) / h, ascending."""
    if not h > 0:
        raise ValidationError("h must be positive")
    if decomp.operator_form not in ("sym_normalized", "one_minus_markov"):
        raise ValidationError("rescaling needs a normalized (Markov-type) decomposition")
    if d is None:
        if spec is None:
            raise ValidationError("need the intrinsic dimension d")
        d = spec.dim
    spec = spec or KernelSpec(dim=d)
    return laplacian_scale(spec, d) * (1.0 - decomp.eigenvalues) / h


@dataclass
class EigenCluster:
    mean: float
    size: int
    members: np.ndarray


def cluster_eigenvalues(values, rel_gap=0.25):
    """Split ascending values where (v[k+1] - v[k]) / |v[k+1]| exceeds rel_gap."""
    v = np.sort(np.asarray(values, dtype=np.float64))
    clusters = []
    start = 0
    for k in range(1, len(v) + 1):
        if k == len(v) or (v[k] - v[k - 1]) > rel_gap * max(abs(v[k]), 1e-12):
            members = v[start:k]
            clusters.append(EigenCluster(float(members.mean()), len(members), members))
            start = k
    return clusters


@dataclass
class VdmEmbedding:
    t: int
    coordinates: np.ndarray  # (n, m*m)
    m: int
    normalized: bool


def vdm_embed(decomp, t, m, normalized=False):
    """V_t(i) = ((lambda_l lambda_r)^t <v_l[i], v_r[i]>) over the first m eigenpairs."""
    t, m = int(t), int(m)
    if t < 1:
        raise ValidationError("diffusion time t must be a positive integer")
    if not 0 <= m <= decomp.k:
        raise ValidationError(f"m must be in [0, {decomp.k}]")
    if decomp.operator_form not in ("sym_normalized", "one_minus_markov"):
        raise ValidationError("VDM needs a normalized decomposition")
    V = decomp.blocks()[:, :, :m]
    lam = decomp.eigenvalues[:m]
    inner = np.einsum("nal,nar->nlr", V, V)
    coords = (np.outer(lam, lam) ** t)[None] * inner
    coords = coords.reshape(decomp.n, m * m)
    if normalized:
        coords = coords / decomp.degrees[:, None]
    return VdmEmbedding(t, coords, m, bool(normalized))


def vdd(emb, i, j):
    """Vector diffusion distance |V_t(i) - V_t(j)|^2."""
    diff = emb.coordinates[i] - emb.coordinates[j]
    return float(diff @ diff)


def hs_affinity(op, t, i, j):
    """|S_tilde^{2t}(i, j)|_HS^2 by explicit matrix powers (small operators only)."""
    if op.form != "sym_normalized":
        raise ValidationError("hs_affinity needs the sym_normalized form")
    nq = op.n * op.q
    if nq > HS_BRUTE_LIMIT:
        raise ValidationError(f"brute-force HS affinity limited to nq <= {HS_BRUTE_LIMIT}")
    P = np.linalg.matrix_power(op.to_dense(), 2 * int(t))
    q = op.q
    block = P[i * q:(i + 1) * q, j * q:(j + 1) * q]
    return float(np.sum(block * block))


def hs_affinity_spectral(decomp, t, i, j):
    """Same quantity from the eigen-expansion sum_{l,r} (lambda_l lambda_r)^{2t} <.,.><.,.>."""
    V = decomp.blocks()
    lam = decomp.eigenvalues
    gi = V[i].T @ V[i]
    gj = V[j].T @ V[j]
    return float(np.sum(np.outer(lam, lam) ** (2 * int(t)) * gi * gj))


def dm_embed(decomp, t, m):
    """Diffusion-map coordinates lambda_l^t w_l[i] for the first m eigenpairs of D^-1 S."""
    if decomp.q != 1:
        raise ValidationError("diffusion maps need a scalar (q = 1) decomposition")
    m = int(m)
    if not 0 <= m <= decomp.k:
        raise ValidationError(f"m must be in [0, {decomp.k}]")
    W = decomp.markov_vectors[:, :m]
    return W * (decomp.eigenvalues[:m] ** int(t))[None, :]
