"""Numpy implementations of the inner loops in ``_core.pyx``.

Same signatures and output ordering as the compiled module; used when the
extension is not built or when ``CONNLAP_BACKEND=python``.
"""
import numpy as np

_CHUNK_ELEMS = 1 << 22


def pairs_within(X, cutoff, row_start, row_stop):
    X = np.ascontiguousarray(X, dtype=np.float64)
    n, p = X.shape
    c2 = cutoff * cutoff
    out_i, out_j, out_d = [], [], []
    rows = max(1, _CHUNK_ELEMS // max(1, n * p))
    for i0 in range(row_start, row_stop, rows):
        i1 = min(row_stop, i0 + rows)
        diff = X[i0:i1, None, :] - X[None, i0:, :]
        d2 = np.zeros(diff.shape[:2])
        for k in range(p):
            d2 += diff[:, :, k] * diff[:, :, k]
        ii, jj = np.nonzero(d2 <= c2)
        ii_abs = ii + i0
        jj_abs = jj + i0
        keep = jj_abs > ii_abs
        out_i.append(ii_abs[keep])
        out_j.append(jj_abs[keep])
        out_d.append(d2[ii[keep], jj[keep]])
    if not out_i:
        empty = np.empty(0, dtype=np.int64)
        return empty, empty.copy(), np.empty(0)
    return (np.concatenate(out_i).astype(np.int64),
            np.concatenate(out_j).astype(np.int64),
            np.concatenate(out_d))


def block_matvec(n, q, I, J, B, diag, v):
    v = np.asarray(v, dtype=np.float64)
    out = (np.repeat(diag, q) * v)
    if len(I) == 0:
        return out
    V = v.reshape(n, q)
    if q == 1:
        b = B[:, 0, 0]
        out += np.bincount(I, weights=b * v[J], minlength=n)
        out += np.bincount(J, weights=b * v[I], minlength=n)
        return out
    to_i = np.einsum("eab,eb->ea", B, V[J])
    to_j = np.einsum("eba,eb->ea", B, V[I])
    O = out.reshape(n, q)
    for a in range(q):
        O[:, a] += np.bincount(I, weights=to_i[:, a], minlength=n)
        O[:, a] += np.bincount(J, weights=to_j[:, a], minlength=n)
    return out


def scatter_matrices(X, I, J, w):
    X = np.asarray(X, dtype=np.float64)
    n, p = X.shape
    diff = X[J] - X[I]
    out = np.zeros((n, p, p))
    for a in range(p):
        for b in range(a, p):
            vals = w * diff[:, a] * diff[:, b]
            col = np.bincount(I, weights=vals, minlength=n)
            col += np.bincount(J, weights=vals, minlength=n)
            out[:, a, b] = col
            out[:, b, a] = col
    return out
