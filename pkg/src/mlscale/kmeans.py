"""Forgy/Lloyd k-means as explicit map, shuffle and reduce stages over partitions.

Each map task assigns the points of one partition to their nearest centroid
and emits per-cluster ``(sum, count)`` partials (a combiner). The shuffle
groups partials by cluster id and the reduce divides sums by counts.
"""

from __future__ import annotations

import csv
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .tracing import Trace

TRACE_COLUMNS = ("iteration", "inertia", "shift")


@dataclass(frozen=True)
class ClusterState:
    centroids: np.ndarray
    iteration: int = 0

    def __post_init__(self):
        if self.centroids.ndim != 2 or self.centroids.shape[0] < 1:
            raise ValueError("centroids must be a non-empty k x d array")

    @property
    def k(self):
        return self.centroids.shape[0]

    @property
    def dim(self):
        return self.centroids.shape[1]


@dataclass(frozen=True)
class PartialSum:
    key: int
    sum: np.ndarray
    count: int

    def __post_init__(self):
        if self.count < 1:
            raise ValueError("a partial sum covers at least one point")


@dataclass
class KMeansResult:
    state: ClusterState
    labels: np.ndarray
    inertia: float
    trace: Trace
    history: list = field(default_factory=list)
    converged: bool = False


def _check_points(points, state):
    points = np.ascontiguousarray(points, dtype=np.float64)
    if points.ndim != 2 or points.shape[0] == 0:
        raise ValueError("a partition must be a non-empty n x d array")
    if points.shape[1] != state.dim:
        raise ValueError(f"point dimension {points.shape[1]} != centroid dimension {state.dim}")
    return points


def map_assign(partition, state, backend=None):
    """Partials for the clusters present in ``partition``, sorted by key.

    Points go to the nearest centroid in squared Euclidean distance; ties go
    to the smallest cluster id.
    """
    return _map_task(partition, state, backend)[0]


def _map_task(partition, state, backend):
    # partials plus the partition's share of the inertia
    points = _check_points(partition, state)
    kern = kernels if backend is None else kernels.get_backend(backend)
    _, sums, counts, inertia = kern.kmeans_partials(points, np.ascontiguousarray(state.centroids))
    partials = [PartialSum(int(j), sums[j].copy(), int(counts[j])) for j in np.flatnonzero(counts)]
    return partials, float(inertia)


def shuffle_reduce(partials, previous):
    """New centroids from all partials; a cluster with no points keeps its previous centroid."""
    sums = np.zeros_like(previous.centroids, dtype=np.float64)
    counts = np.zeros(previous.k, dtype=np.int64)
    # deterministic fold order regardless of how partials arrived
    for p in sorted(partials, key=lambda p: p.key):
        sums[p.key] += p.sum
        counts[p.key] += p.count
    centroids = previous.centroids.astype(np.float64, copy=True)
    hit = counts > 0
    centroids[hit] = sums[hit] / counts[hit, None]
    return ClusterState(centroids, previous.iteration + 1)


def forgy_init(data, k, seed):
    """``k`` distinct data rows chosen uniformly at random."""
    rng = np.random.default_rng(seed)
    idx = rng.choice(data.shape[0], size=k, replace=False)
    return ClusterState(data[np.sort(idx)].copy(), 0)


def assign(data, state, backend=None):
    """Labels and inertia of every row under ``state``."""
    kern = kernels if backend is None else kernels.get_backend(backend)
    labels, _, _, inertia = kern.kmeans_partials(np.ascontiguousarray(data, dtype=np.float64),
                                                 np.ascontiguousarray(state.centroids))
    return labels, float(inertia)


def kmeans_fit(data, k, n_partitions=1, seed=0, max_iter=100, tol=1e-8, workers=1, init=None,
               backend=None):
    """Iterate map / shuffle / reduce until the largest centroid move is below ``tol``.

    ``data`` is split into ``n_partitions`` contiguous row blocks; with
    ``workers > 1`` map tasks run concurrently. The final labels and inertia
    are recomputed once against the returned centroids.
    """
    data = np.ascontiguousarray(data, dtype=np.float64)
    if data.ndim != 2:
        raise ValueError("data must be an n x d array")
    n = data.shape[0]
    if k < 1 or k > n:
        raise ValueError(f"k={k} must lie in [1, {n}]")
    if n_partitions < 1:
        raise ValueError("n_partitions must be at least 1")
    if not np.all(np.isfinite(data)):
        raise ValueError("data has non-finite values")
    state = init if init is not None else forgy_init(data, k, seed)
    if state.k != k or state.dim != data.shape[1]:
        raise ValueError("initial state does not match k and the data dimension")

    parts = [p for p in np.array_split(data, min(n_partitions, n)) if p.shape[0]]
    trace = Trace(TRACE_COLUMNS)
    history = [state.centroids.copy()]
    pool = ThreadPoolExecutor(workers) if workers > 1 else None
    converged = False
    try:
        for _ in range(max_iter):
            if pool is None:
                mapped = [_map_task(p, state, backend) for p in parts]
            else:
                mapped = list(pool.map(lambda p: _map_task(p, state, backend), parts))
            partials = [ps for chunk, _ in mapped for ps in chunk]
            # inertia of the assignment that produced this update
            inertia = sum(i for _, i in mapped)
            new = shuffle_reduce(partials, state)
            shift = float(np.max(np.linalg.norm(new.centroids - state.centroids, axis=1)))
            trace.record(iteration=new.iteration, inertia=inertia, shift=shift)
            state = new
            history.append(state.centroids.copy())
            if shift < tol:
                converged = True
                break
    finally:
        if pool is not None:
            pool.shutdown()
    labels, inertia = assign(data, state, backend)
    return KMeansResult(state, labels, inertia, trace, history, converged)


def read_points(path):
    """Numeric CSV, one vector per row; a non-numeric first row is treated as a header."""
    rows = []
    with open(path, newline="") as fh:
        for lineno, rec in enumerate(csv.reader(fh), start=1):
            if not rec or all(not f.strip() for f in rec):
                continue
            try:
                rows.append([float(f) for f in rec])
            except ValueError:
                if lineno == 1:
                    continue
                raise ValueError(f"{path}:{lineno}: non-numeric field") from None
    if not rows:
        raise ValueError(f"{path}: no data rows")
    if len({len(r) for r in rows}) != 1:
        raise ValueError(f"{path}: rows have different lengths")
    return np.array(rows)


def write_centroids(path, state):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        for c in state.centroids:
            w.writerow([repr(float(v)) for v in c])


def write_assignments(path, labels):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["index", "cluster"])
        for i, lab in enumerate(labels):
            w.writerow([i, int(lab)])
