"""Pure-Python / numpy implementations of the hot kernels.

Every function here has a twin with the same signature in ``_kernels.pyx``.
The compiled versions are preferred at import time (see ``mlscale.kernels``);
these are used when the extension is unavailable or ``MLSCALE_BACKEND=python``.
"""

import numpy as np
from scipy.linalg import cho_solve

_MASK32 = 0xFFFFFFFF
# pivot threshold (relative to the largest diagonal entry) below which a
# normal matrix is treated as singular
SINGULAR_RTOL = 1e-12


def ridge_half_sweep(indptr, indices, data, fixed, lam, nonneg, start, stop, out):
    """Solve the ridge regressions of one ALS half-sweep for rows ``start:stop``.

    Row ``u`` of the CSR triple is regressed on the rows of ``fixed`` selected by
    its observed columns: ``(F_u' F_u + lam I) a = F_u' x_u``. The solution is
    written into ``out[u]`` and, if ``nonneg``, clamped at zero.

    Returns the row ids whose normal matrix was numerically singular; their
    ``out`` rows are left untouched for the caller to fill.
    """
    r = fixed.shape[1]
    singular = []
    eye = np.eye(r)
    for u in range(start, stop):
        s, e = indptr[u], indptr[u + 1]
        if s == e:
            out[u, :] = 0.0
            continue
        f = fixed[indices[s:e]]
        g = f.T @ f + lam * eye
        b = f.T @ data[s:e]
        scale = max(float(np.max(np.diag(g))), 1e-300)
        try:
            chol = np.linalg.cholesky(g)
        except np.linalg.LinAlgError:
            singular.append(u)
            continue
        if float(np.min(np.diag(chol))) ** 2 <= SINGULAR_RTOL * scale:
            singular.append(u)
            continue
        sol = cho_solve((chol, True), b)
        if nonneg:
            np.maximum(sol, 0.0, out=sol)
        out[u, :] = sol
    return np.asarray(singular, dtype=np.int64)


def lowrank_entries(rows, cols, left, right):
    """``out[k] = left[rows[k]] . right[cols[k]]`` for each observed entry."""
    if rows.shape[0] == 0:
        return np.zeros(0)
    return np.einsum("ij,ij->i", left[rows], right[cols])


def kmeans_partials(points, centroids):
    """Assign each point to its nearest centroid and accumulate per-cluster sums.

    Distances are squared Euclidean; ties go to the smallest cluster id.
    Returns ``(labels, sums, counts, inertia)``.
    """
    k, d = centroids.shape
    diff = points[:, None, :] - centroids[None, :, :]
    dist = np.einsum("nkd,nkd->nk", diff, diff)
    labels = np.argmin(dist, axis=1).astype(np.int64)
    inertia = float(dist[np.arange(points.shape[0]), labels].sum())
    sums = np.zeros((k, d))
    np.add.at(sums, labels, points)
    counts = np.bincount(labels, minlength=k).astype(np.int64)
    return labels, sums, counts, inertia


def _rotl32(x, r):
    return ((x << r) | (x >> (32 - r))) & _MASK32


def murmurhash3_32(key, seed=0):
    """MurmurHash3 x86_32 of ``key`` (bytes or str, UTF-8) as an unsigned int."""
    if isinstance(key, str):
        key = key.encode("utf-8")
    c1, c2 = 0xCC9E2D51, 0x1B873593
    h = seed & _MASK32
    n = len(key)
    nblocks = n // 4
    for i in range(nblocks):
        k = int.from_bytes(key[4 * i:4 * i + 4], "little")
        k = (k * c1) & _MASK32
        k = _rotl32(k, 15)
        k = (k * c2) & _MASK32
        h ^= k
        h = _rotl32(h, 13)
        h = (h * 5 + 0xE6546B64) & _MASK32
    tail = key[4 * nblocks:]
    k = 0
    if len(tail) >= 3:
        k ^= tail[2] << 16
    if len(tail) >= 2:
        k ^= tail[1] << 8
    if len(tail) >= 1:
        k ^= tail[0]
        k = (k * c1) & _MASK32
        k = _rotl32(k, 15)
        k = (k * c2) & _MASK32
        h ^= k
    h ^= n
    h ^= h >> 16
    h = (h * 0x85EBCA6B) & _MASK32
    h ^= h >> 13
    h = (h * 0xC2B2AE35) & _MASK32
    h ^= h >> 16
    return h


def hash_grams(grams, n_hash, signed):
    """Bucket index (seed 0) and +-1 sign (seed 1) for each gram string."""
    m = len(grams)
    idx = np.empty(m, dtype=np.int64)
    sign = np.ones(m, dtype=np.int64)
    for i, g in enumerate(grams):
        b = g.encode("utf-8")
        idx[i] = murmurhash3_32(b, 0) % n_hash
        if signed and murmurhash3_32(b, 1) & 1:
            sign[i] = -1
    return idx, sign
