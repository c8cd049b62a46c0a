# cython: language_level=3
"""Compiled hot kernels. Signatures and semantics mirror ``_fallback``."""

import numpy as np
cimport numpy as cnp
from libc.math cimport sqrt
from libc.stdint cimport uint32_t, uint8_t
from libc.stdlib cimport malloc, free

cnp.import_array()

cdef double SINGULAR_RTOL = 1e-12


cdef inline int _cholesky_solve(double* g, double* b, Py_ssize_t r, double rtol) noexcept nogil:
    # in-place lower Cholesky of the r x r row-major matrix g, then solve g x = b
    # into b; returns 1 if a pivot falls below rtol * max(diag)
    cdef Py_ssize_t i, j, k
    cdef double s, scale = 0.0
    for i in range(r):
        if g[i * r + i] > scale:
            scale = g[i * r + i]
    if scale <= 0.0:
        return 1
    for j in range(r):
        s = g[j * r + j]
        for k in range(j):
            s -= g[j * r + k] * g[j * r + k]
        if s <= rtol * scale:
            return 1
        s = sqrt(s)
        g[j * r + j] = s
        for i in range(j + 1, r):
            s = g[i * r + j]
            for k in range(j):
                s -= g[i * r + k] * g[j * r + k]
            g[i * r + j] = s / g[j * r + j]
    for i in range(r):
        s = b[i]
        for k in range(i):
            s -= g[i * r + k] * b[k]
        b[i] = s / g[i * r + i]
    for i in range(r - 1, -1, -1):
        s = b[i]
        for k in range(i + 1, r):
            s -= g[k * r + i] * b[k]
        b[i] = s / g[i * r + i]
    return 0


def ridge_half_sweep(const cnp.int64_t[::1] indptr, const cnp.int64_t[::1] indices,
                     const double[::1] data, const double[:, ::1] fixed, double lam,
                     bint nonneg, Py_ssize_t start, Py_ssize_t stop, double[:, ::1] out):
    cdef Py_ssize_t r = fixed.shape[1]
    cdef Py_ssize_t u, s, e, t, i, j, c
    cdef double x, fi
    cdef double* g = <double*> malloc(r * r * sizeof(double))
    cdef double* b = <double*> malloc(r * sizeof(double))
    cdef cnp.int64_t[::1] flag = np.zeros(stop - start, dtype=np.int64)
    if g == NULL or b == NULL:
        free(g)
        free(b)
        raise MemoryError()
    try:
        with nogil:
            for u in range(start, stop):
                s = indptr[u]
                e = indptr[u + 1]
                if s == e:
                    for i in range(r):
                        out[u, i] = 0.0
                    continue
                for i in range(r * r):
                    g[i] = 0.0
                for i in range(r):
                    b[i] = 0.0
                for t in range(s, e):
                    c = indices[t]
                    x = data[t]
                    for i in range(r):
                        fi = fixed[c, i]
                        b[i] += fi * x
                        for j in range(i + 1):
                            g[i * r + j] += fi * fixed[c, j]
                for i in range(r):
                    g[i * r + i] += lam
                    for j in range(i + 1, r):
                        g[i * r + j] = g[j * r + i]
                if _cholesky_solve(g, b, r, SINGULAR_RTOL):
                    flag[u - start] = 1
                    continue
                for i in range(r):
                    if nonneg and b[i] < 0.0:
                        out[u, i] = 0.0
                    else:
                        out[u, i] = b[i]
    finally:
        free(g)
        free(b)
    return np.flatnonzero(np.asarray(flag)).astype(np.int64) + start


def lowrank_entries(const cnp.int64_t[::1] rows, const cnp.int64_t[::1] cols,
                    const double[:, ::1] left, const double[:, ::1] right):
    cdef Py_ssize_t m = rows.shape[0]
    cdef Py_ssize_t r = left.shape[1]
    cdef Py_ssize_t t, j, a, c
    cdef double acc
    out_arr = np.empty(m, dtype=np.float64)
    cdef double[::1] out = out_arr
    with nogil:
        for t in range(m):
            a = rows[t]
            c = cols[t]
            acc = 0.0
            for j in range(r):
                acc += left[a, j] * right[c, j]
            out[t] = acc
    return out_arr


def kmeans_partials(const double[:, ::1] points, const double[:, ::1] centroids):
    cdef Py_ssize_t n = points.shape[0]
    cdef Py_ssize_t d = points.shape[1]
    cdef Py_ssize_t k = centroids.shape[0]
    cdef Py_ssize_t i, j, q, best
    cdef double dist, bestd, diff, inertia = 0.0
    labels_arr = np.empty(n, dtype=np.int64)
    sums_arr = np.zeros((k, d), dtype=np.float64)
    counts_arr = np.zeros(k, dtype=np.int64)
    cdef cnp.int64_t[::1] labels = labels_arr
    cdef double[:, ::1] sums = sums_arr
    cdef cnp.int64_t[::1] counts = counts_arr
    with nogil:
        for i in range(n):
            best = 0
            bestd = 0.0
            for q in range(d):
                diff = points[i, q] - centroids[0, q]
                bestd += diff * diff
            for j in range(1, k):
                dist = 0.0
                for q in range(d):
                    diff = points[i, q] - centroids[j, q]
                    dist += diff * diff
                if dist < bestd:
                    bestd = dist
                    best = j
            labels[i] = best
            inertia += bestd
            counts[best] += 1
            for q in range(d):
                sums[best, q] += points[i, q]
    return labels_arr, sums_arr, counts_arr, inertia


cdef inline uint32_t _rotl32(uint32_t x, int r) noexcept nogil:
    return (x << r) | (x >> (32 - r))


cdef uint32_t _murmur3(const uint8_t* data, Py_ssize_t n, uint32_t seed) noexcept nogil:
    cdef uint32_t c1 = 0xcc9e2d51
    cdef uint32_t c2 = 0x1b873593
    cdef uint32_t c3 = 0xe6546b64
    cdef uint32_t f1 = 0x85ebca6b
    cdef uint32_t f2 = 0xc2b2ae35
    cdef uint32_t h = seed
    cdef uint32_t k
    cdef Py_ssize_t nblocks = n // 4
    cdef Py_ssize_t i, tail
    for i in range(nblocks):
        k = (<uint32_t> data[4 * i]) | ((<uint32_t> data[4 * i + 1]) << 8) \
            | ((<uint32_t> data[4 * i + 2]) << 16) | ((<uint32_t> data[4 * i + 3]) << 24)
        k *= c1
        k = _rotl32(k, 15)
        k *= c2
        h ^= k
        h = _rotl32(h, 13)
        h = h * 5 + c3
    tail = nblocks * 4
    k = 0
    if n & 3 >= 3:
        k ^= (<uint32_t> data[tail + 2]) << 16
    if n & 3 >= 2:
        k ^= (<uint32_t> data[tail + 1]) << 8
    if n & 3 >= 1:
        k ^= <uint32_t> data[tail]
        k *= c1
        k = _rotl32(k, 15)
        k *= c2
        h ^= k
    h ^= <uint32_t> n
    h ^= h >> 16
    h *= f1
    h ^= h >> 13
    h *= f2
    h ^= h >> 16
    return h


def murmurhash3_32(key, unsigned int seed=0):
    if isinstance(key, str):
        key = key.encode("utf-8")
    cdef const uint8_t[::1] buf = key
    if buf.shape[0] == 0:
        return int(_murmur3(<const uint8_t*> b"", 0, seed))
    return int(_murmur3(&buf[0], buf.shape[0], seed))


def hash_grams(grams, Py_ssize_t n_hash, bint signed):
    cdef Py_ssize_t m = len(grams)
    idx_arr = np.empty(m, dtype=np.int64)
    sign_arr = np.ones(m, dtype=np.int64)
    cdef cnp.int64_t[::1] idx = idx_arr
    cdef cnp.int64_t[::1] sign = sign_arr
    cdef Py_ssize_t i, n
    cdef bytes b
    cdef const uint8_t* p
    for i in range(m):
        b = (<str> grams[i]).encode("utf-8")
        n = len(b)
        p = <const uint8_t*> (<char*> b)
        idx[i] = _murmur3(p, n, 0) % <uint32_t> n_hash
        if signed and (_murmur3(p, n, 1) & 1):
            sign[i] = -1
    return idx_arr, sign_arr
