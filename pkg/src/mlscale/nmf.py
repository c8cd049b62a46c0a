"""Nonnegative matrix factorization ``X ~ W H`` of fully observed matrices."""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .svt import truncated_svd
from .tracing import Trace

ALGORITHMS = ("multiplicative_ls", "als_clamp")
INITS = ("random_multistart", "nndsvd")
TRACE_COLUMNS = ("start_id", "iter", "objective")

# keeps the multiplicative ratio defined when numerator and denominator vanish
_MU_EPS = 1e-12


@dataclass(frozen=True)
class NmfConfig:
    r: int
    algorithm: str = "multiplicative_ls"
    init: str = "random_multistart"
    n_starts: int = 1
    max_iter: int = 200
    tol: float = 1e-6
    seed: int = 0
    l2: float = 0.0

    def __post_init__(self):
        if self.r < 1:
            raise ValueError("rank must be at least 1")
        if self.n_starts < 1:
            raise ValueError("n_starts must be at least 1")
        if self.algorithm not in ALGORITHMS:
            raise ValueError(f"algorithm must be one of {ALGORITHMS}")
        if self.init not in INITS:
            raise ValueError(f"init must be one of {INITS}")
        if self.l2 < 0:
            raise ValueError("l2 penalty must be non-negative")


@dataclass
class NmfResult:
    W: np.ndarray
    H: np.ndarray
    objective: float
    start_id: int
    start_objectives: list
    trace: Trace
    n_iter: int
    converged: bool


def nmf_objective(X, W, H, l2=0.0):
    """``1/2 ||X - WH||_F^2 + l2/2 (||W||_F^2 + ||H||_F^2)``."""
    R = X - W @ H
    obj = 0.5 * float((R * R).sum())
    if l2:
        obj += 0.5 * l2 * (float((W * W).sum()) + float((H * H).sum()))
    return obj


def check_nmf_input(X, r):
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2:
        raise ValueError("X must be a 2-d matrix")
    if not np.all(np.isfinite(X)):
        raise ValueError("X has non-finite entries")
    if np.any(X < 0):
        raise ValueError("X has negative entries")
    if np.any(X.sum(axis=1) == 0) or np.any(X.sum(axis=0) == 0):
        raise ValueError("X has an all-zero row or column")
    if not 1 <= r <= min(X.shape):
        raise ValueError(f"rank {r} must lie in [1, {min(X.shape)}]")
    return X


def nndsvd_init(X, r, seed=0):
    """Nonnegative double SVD start built from the leading ``r`` singular triplets.

    Each triplet contributes the dominant sign-part of its singular vectors
    scaled by the singular value. Exact zeros are replaced by
    ``1e-6 * mean(X)`` so multiplicative updates can move every entry.
    """
    X = check_nmf_input(X, r)
    n, p = X.shape
    svd = truncated_svd(X, r, tol=1e-12, max_iter=500, seed=seed)
    U, s, V = svd.U, svd.d, svd.V
    W = np.zeros((n, r))
    H = np.zeros((r, p))
    W[:, 0] = np.sqrt(s[0]) * np.abs(U[:, 0])
    H[0, :] = np.sqrt(s[0]) * np.abs(V[:, 0])
    for j in range(1, r):
        x, y = U[:, j], V[:, j]
        xp, xn = np.maximum(x, 0), np.maximum(-x, 0)
        yp, yn = np.maximum(y, 0), np.maximum(-y, 0)
        nxp, nyp = np.linalg.norm(xp), np.linalg.norm(yp)
        nxn, nyn = np.linalg.norm(xn), np.linalg.norm(yn)
        mp, mn = nxp * nyp, nxn * nyn
        if mp >= mn:
            u, v, sigma = xp / nxp if nxp else xp, yp / nyp if nyp else yp, mp
        else:
            u, v, sigma = xn / nxn if nxn else xn, yn / nyn if nyn else yn, mn
        W[:, j] = np.sqrt(s[j] * sigma) * u
        H[j, :] = np.sqrt(s[j] * sigma) * v
    eps = 1e-6 * float(X.mean())
    W[W <= 0] = eps
    H[H <= 0] = eps
    return W, H


def _random_init(X, r, rng):
    scale = np.sqrt(float(X.mean()) / r)
    return rng.uniform(0, 2 * scale, (X.shape[0], r)), rng.uniform(0, 2 * scale, (r, X.shape[1]))


def _mu_step(X, W, H, l2):
    # Lee-Seung majorize-minimize steps; eps on both sides keeps them descent steps
    H = H * (W.T @ X + _MU_EPS) / (W.T @ W @ H + l2 * H + _MU_EPS)
    W = W * (X @ H.T + _MU_EPS) / (W @ (H @ H.T) + l2 * W + _MU_EPS)
    return W, H


def _ridge_solve(G, rhs, l2):
    G = G + l2 * np.eye(G.shape[0])
    try:
        return np.linalg.solve(G, rhs)
    except np.linalg.LinAlgError:
        return np.linalg.lstsq(G, rhs, rcond=None)[0]


def _als_step(X, W, H, l2):
    # solve W'W H = W'X, clamp; then H H' W' = H X', clamp
    H = np.maximum(_ridge_solve(W.T @ W, W.T @ X, l2), 0.0)
    W = np.maximum(_ridge_solve(H @ H.T, H @ X.T, l2).T, 0.0)
    return W, H


def _run_start(X, W, H, config, start_id):
    step = _mu_step if config.algorithm == "multiplicative_ls" else _als_step
    trace = Trace(TRACE_COLUMNS)
    obj = nmf_objective(X, W, H, config.l2)
    trace.record(start_id=start_id, iter=0, objective=obj)
    converged = False
    # objectives this small relative to the data are a numerically exact fit
    floor = 1e-24 * 0.5 * float((X * X).sum())
    it = 0
    for it in range(1, config.max_iter + 1):
        W, H = step(X, W, H, config.l2)
        new_obj = nmf_objective(X, W, H, config.l2)
        trace.record(start_id=start_id, iter=it, objective=new_obj)
        change = abs(obj - new_obj) / max(abs(obj), np.finfo(float).tiny)
        obj = new_obj
        if change < config.tol or obj <= floor:
            converged = True
            break
    return W, H, obj, trace, it, converged


def nmf_fit(X, config, workers=1):
    """Factorize a nonnegative matrix without all-zero rows or columns.

    ``random_multistart`` runs ``n_starts`` independent seeded starts (in
    parallel with ``workers > 1``) and keeps the lowest final objective;
    ``nndsvd`` runs one deterministic start.
    """
    X = check_nmf_input(X, config.r)
    if config.init == "nndsvd":
        starts = [nndsvd_init(X, config.r, config.seed)]
    else:
        seeds = np.random.SeedSequence(config.seed).spawn(config.n_starts)
        starts = [_random_init(X, config.r, np.random.default_rng(s)) for s in seeds]

    def run(item):
        i, (W0, H0) = item
        return _run_start(X, W0, H0, config, i)

    if workers > 1 and len(starts) > 1:
        with ThreadPoolExecutor(workers) as pool:
            runs = list(pool.map(run, enumerate(starts)))
    else:
        runs = [run(item) for item in enumerate(starts)]

    trace = Trace(TRACE_COLUMNS)
    for r in runs:
        trace.extend(r[3])
    objs = [r[2] for r in runs]
    best = int(np.argmin(objs))
    W, H, obj, _, n_iter, converged = runs[best]
    return NmfResult(W, H, obj, best, objs, trace, n_iter, converged)


def scale_ambiguity_normalize(W, H):
    """Rescale so every column of ``W`` has unit L2 norm; ``H`` absorbs the scale.

    Returns ``(W', H', zero_columns)``; zero columns of ``W`` are left as they are.
    """
    norms = np.linalg.norm(W, axis=0)
    zero = np.flatnonzero(norms == 0)
    scale = np.where(norms == 0, 1.0, norms)
    return W / scale, H * scale[:, None], zero
