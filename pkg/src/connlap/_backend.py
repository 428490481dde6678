"""Backend selection for the hot loops.

The compiled extension is used when importable; set ``CONNLAP_BACKEND=python``
to force the numpy fallback. ``CONNLAP_THREADS`` caps the number of worker
threads used by the radius pair search (0 or unset means one per CPU).
"""
import os
from concurrent.futures import ThreadPoolExecutor

import numpy as np
from scipy.spatial import cKDTree

from . import _core_py

EXACT_PAIR_LIMIT = 5000


def _load():
    if os.environ.get("CONNLAP_BACKEND", "").lower() == "python":
        return _core_py, "python"
    try:
        from . import _core
    except ImportError:
        return _core_py, "python"
    return _core, "compiled"


_impl, BACKEND = _load()


def thread_count():
    raw = os.environ.get("CONNLAP_THREADS", "0").strip() or "0"
    try:
        value = int(raw)
    except ValueError:
        value = 0
    if value <= 0:
        value = os.cpu_count() or 1
    return value


def _row_chunks(n, parts):
    # Equal work per chunk: row i carries n - i - 1 candidate pairs.
    total = n * (n - 1) / 2.0
    bounds = [0]
    for k in range(1, parts):
        target = total * k / parts
        # solve i*n - i*(i+1)/2 = target for i
        i = int(n - 0.5 - np.sqrt((n - 0.5) ** 2 - 2.0 * target))
        bounds.append(min(max(i, bounds[-1]), n))
    bounds.append(n)
    return [(a, b) for a, b in zip(bounds[:-1], bounds[1:]) if b > a]


def pairs_within(X, cutoff, impl=None):
    """All unordered pairs i < j with Euclidean distance <= cutoff.

    Exact all-pairs scan for n <= EXACT_PAIR_LIMIT, k-d tree above. The result
    is sorted by (i, j) regardless of path, so downstream sums are
    deterministic.
    """
    impl = impl or _impl
    X = np.ascontiguousarray(X, dtype=np.float64)
    n = X.shape[0]
    if n > EXACT_PAIR_LIMIT:
        P = cKDTree(X).query_pairs(cutoff, output_type="ndarray").astype(np.int64)
        if len(P) == 0:
            empty = np.empty(0, dtype=np.int64)
            return empty, empty.copy(), np.empty(0)
        order = np.lexsort((P[:, 1], P[:, 0]))
        I, J = P[order, 0], P[order, 1]
        diff = X[I] - X[J]
        d2 = np.zeros(len(I))
        for k in range(X.shape[1]):
            d2 += diff[:, k] * diff[:, k]
        return I, J, d2
    parts = min(thread_count(), max(1, n // 500))
    if parts <= 1 or impl is _core_py:
        return impl.pairs_within(X, cutoff, 0, n)
    chunks = _row_chunks(n, parts)
    with ThreadPoolExecutor(max_workers=len(chunks)) as pool:
        results = list(pool.map(lambda c: impl.pairs_within(X, cutoff, c[0], c[1]), chunks))
    return tuple(np.concatenate([r[k] for r in results]) for k in range(3))


def block_matvec(n, q, I, J, B, diag, v, impl=None):
    impl = impl or _impl
    return impl.block_matvec(
        int(n), int(q),
        np.ascontiguousarray(I, dtype=np.int64),
        np.ascontiguousarray(J, dtype=np.int64),
        np.ascontiguousarray(B, dtype=np.float64),
        np.ascontiguousarray(diag, dtype=np.float64),
        np.ascontiguousarray(v, dtype=np.float64),
    )


def scatter_matrices(X, I, J, w, impl=None):
    impl = impl or _impl
    return impl.scatter_matrices(
        np.ascontiguousarray(X, dtype=np.float64),
        np.ascontiguousarray(I, dtype=np.int64),
        np.ascontiguousarray(J, dtype=np.int64),
        np.ascontiguousarray(w, dtype=np.float64),
    )
