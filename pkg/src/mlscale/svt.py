"""Nuclear-norm regularized completion by iterated soft-thresholded SVD.

Solves ``min_M 1/2 ||P_Omega(X - M)||_F^2 + lam ||M||_*`` with the
soft-impute iteration ``M <- S_lam(P_Omega(X - M) + M)``. The matrix inside
the SVD is never formed: it is a sparse residual plus the current low-rank
iterate, so every product costs ``O(|Omega| + (n + p) k)``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import LinearOperator, aslinearoperator

from .sparse import lowrank_predict
from .tracing import Trace

TRACE_COLUMNS = ("iter", "objective", "rank", "seconds")


@dataclass(frozen=True)
class LowRankTriple:
    """``M = U diag(d) V'`` with orthonormal columns and non-increasing ``d >= 0``."""

    U: np.ndarray
    d: np.ndarray
    V: np.ndarray
    converged: bool = True
    n_iter: int = 0

    @property
    def rank(self):
        return int(self.d.shape[0])

    @property
    def shape(self):
        return (self.U.shape[0], self.V.shape[0])

    @property
    def nuclear_norm(self):
        return float(self.d.sum())

    def predict_entries(self, rows, cols):
        if self.rank == 0:
            return np.zeros(np.shape(rows))
        return lowrank_predict(rows, cols, self.U * self.d, self.V)

    def predict(self, row, col):
        return float(self.predict_entries(np.array([row]), np.array([col]))[0])

    def to_dense(self):
        return (self.U * self.d) @ self.V.T

    @classmethod
    def zeros(cls, n, p):
        return cls(np.zeros((n, 0)), np.zeros(0), np.zeros((p, 0)))


class SparsePlusLowRank(LinearOperator):
    """Linear operator ``S + U diag(d) V'`` with ``S`` sparse."""

    def __init__(self, S, U, d, V):
        self.S = S.tocsr()
        self.St = self.S.T.tocsr()
        self.U, self.d, self.V = U, d, V
        super().__init__(dtype=np.float64, shape=S.shape)

    def _matvec(self, x):
        return self._matmat(x.reshape(-1, 1)).ravel()

    def _rmatvec(self, y):
        return self._rmatmat(y.reshape(-1, 1)).ravel()

    def _matmat(self, X):
        out = self.S @ X
        if self.d.size:
            out = out + self.U @ (self.d[:, None] * (self.V.T @ X))
        return np.asarray(out)

    def _rmatmat(self, Y):
        out = self.St @ Y
        if self.d.size:
            out = out + self.V @ (self.d[:, None] * (self.U.T @ Y))
        return np.asarray(out)

    def _adjoint(self):
        return _Adjoint(self)


class _Adjoint(LinearOperator):
    def __init__(self, op):
        self.op = op
        super().__init__(dtype=np.float64, shape=(op.shape[1], op.shape[0]))

    def _matvec(self, x):
        return self.op._rmatvec(x)

    def _matmat(self, X):
        return self.op._rmatmat(X)

    def _rmatmat(self, Y):
        return self.op._matmat(Y)

    def _adjoint(self):
        return self.op


def _as_operator(op):
    if isinstance(op, LinearOperator):
        return op
    if isinstance(op, np.ndarray) or sp.issparse(op):
        return aslinearoperator(op)
    return aslinearoperator(np.asarray(op, dtype=np.float64))


def truncated_svd(op, k, tol=1e-10, max_iter=300, seed=0, oversample=10, init=None):
    """Leading ``k`` singular triplets by block power iteration.

    The block (``k + oversample`` columns, capped at ``min(n, p)``) is
    re-orthonormalized after every product and the singular values are read
    from a Rayleigh-Ritz projection. Iteration stops when the leading ``k``
    values change by less than ``tol`` relative to the largest one. ``init``
    (``p x j``) seeds the right subspace, e.g. with a previous solution.
    On hitting ``max_iter`` the best iterate is returned with ``converged=False``.
    """
    A = _as_operator(op)
    n, p = A.shape
    if not 0 <= k <= min(n, p):
        raise ValueError(f"k={k} must lie in [0, min(n, p)={min(n, p)}]")
    if k == 0:
        return LowRankTriple(np.zeros((n, 0)), np.zeros(0), np.zeros((p, 0)))
    width = min(k + oversample, n, p)
    rng = np.random.default_rng(seed)
    block = rng.standard_normal((p, width))
    if init is not None and init.shape[1]:
        j = min(init.shape[1], width)
        block[:, :j] = init[:, :j]
    Vq, _ = np.linalg.qr(block)
    prev = None
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        Q, R = np.linalg.qr(A.matmat(Vq))
        # Rayleigh-Ritz on span(Vq): Q' A Vq = R
        Ur, s, Wt = np.linalg.svd(R)
        U = Q @ Ur[:, :k]
        V = Vq @ Wt.T[:, :k]
        d = s[:k]
        if prev is not None:
            scale = max(float(d[0]), np.finfo(float).tiny)
            if float(np.max(np.abs(d - prev))) <= tol * scale or d[0] == 0.0:
                converged = True
                break
        if width == p or (width == n and it >= 2):
            # the block spans the whole row space, so the projection is exact
            converged = True
            break
        prev = d
        Vq, _ = np.linalg.qr(A.rmatmat(Q @ Ur))
    d = np.maximum(d, 0.0)
    return LowRankTriple(U, d, V, converged=converged, n_iter=it)


def soft_threshold(triple, lam):
    """Shrink singular values by ``lam`` and drop the ones that reach zero."""
    if lam < 0:
        raise ValueError("lambda must be non-negative")
    if lam == 0:
        keep = triple.d > 0
        if keep.all():
            return triple
        return LowRankTriple(triple.U[:, keep], triple.d[keep], triple.V[:, keep],
                             triple.converged, triple.n_iter)
    d = triple.d - lam
    keep = d > 0
    return LowRankTriple(triple.U[:, keep], d[keep], triple.V[:, keep],
                         triple.converged, triple.n_iter)


@dataclass
class SoftImputeResult:
    triple: LowRankTriple
    trace: Trace
    converged: bool
    rank_ceiling_hit: bool
    n_iter: int

    @property
    def objective(self):
        return self.trace[-1]["objective"]


def completion_objective(train, triple, lam):
    resid = train.values - triple.predict_entries(train.rows, train.cols)
    return 0.5 * float(resid @ resid) + lam * triple.nuclear_norm


def _check_coverage(train):
    er, ec = train.empty_rows(), train.empty_cols()
    if er.size or ec.size:
        raise ValueError(f"training matrix has {er.size} empty rows and {ec.size} empty columns")


def soft_impute(train, lam, rank_max, tol=1e-5, max_iter=100, warm=None, seed=0,
                mode="svd", svd_tol=1e-10, svd_max_iter=100, oversample=10):
    """Complete ``train`` by iterated soft-thresholded SVD.

    ``mode="svd"`` runs the plain soft-impute iteration and traces
    ``1/2 ||P_Omega(X - M)||^2 + lam ||M||_*``. ``mode="als"`` runs the
    hybrid that alternates one ridge (ALS) update of each factor of
    ``M = A B'`` with an SVD re-balancing, tracing
    ``1/2 ||P_Omega(X - AB')||^2 + lam/2 (||A||^2 + ||B||^2)``, and finishes
    with one soft-threshold step. Both objectives are non-increasing.
    """
    if lam < 0:
        raise ValueError("lambda must be non-negative")
    n, p = train.shape
    if not 1 <= rank_max <= min(n, p):
        raise ValueError(f"rank_max must lie in [1, {min(n, p)}]")
    _check_coverage(train)
    if mode == "svd":
        return _soft_impute_svd(train, lam, rank_max, tol, max_iter, warm, seed,
                                svd_tol, svd_max_iter, oversample)
    if mode == "als":
        return _soft_impute_als(train, lam, rank_max, tol, max_iter, warm, seed)
    raise ValueError(f"unknown mode {mode!r}")


def _residual_matrix(train, triple):
    resid = train.values - triple.predict_entries(train.rows, train.cols)
    S = sp.csr_matrix((resid, train.cols, train.row_ptr), shape=train.shape)
    return S, resid


def _soft_impute_svd(train, lam, rank_max, tol, max_iter, warm, seed, svd_tol,
                     svd_max_iter, oversample):
    n, p = train.shape
    z = warm if warm is not None else LowRankTriple.zeros(n, p)
    trace = Trace(TRACE_COLUMNS)
    _, resid = _residual_matrix(train, z)
    obj = 0.5 * float(resid @ resid) + lam * z.nuclear_norm
    trace.record(iter=0, objective=obj, rank=z.rank)
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        S, _ = _residual_matrix(train, z)
        op = SparsePlusLowRank(S, z.U, z.d, z.V)
        svd = truncated_svd(op, rank_max, tol=svd_tol, max_iter=svd_max_iter,
                            seed=seed + it, oversample=oversample, init=z.V)
        cand = soft_threshold(svd, lam)
        new_obj = completion_objective(train, cand, lam)
        if new_obj > obj and not svd.converged:
            # an inexact SVD can break descent; retry once with a wider, longer run
            svd = truncated_svd(op, rank_max, tol=svd_tol * 1e-3, max_iter=svd_max_iter * 4,
                                seed=seed + it, oversample=2 * oversample + 5, init=svd.V)
            cand = soft_threshold(svd, lam)
            new_obj = completion_objective(train, cand, lam)
        z = cand
        trace.record(iter=it, objective=new_obj, rank=z.rank)
        change = (obj - new_obj) / max(abs(obj), np.finfo(float).tiny)
        obj = new_obj
        if abs(change) < tol:
            converged = True
            break
    z = LowRankTriple(z.U, z.d, z.V, converged, it)
    ceiling = z.rank == rank_max and z.rank > 0 and float(z.d[-1]) > 0.0
    return SoftImputeResult(z, trace, converged, ceiling, it)


def _soft_impute_als(train, lam, rank_max, tol, max_iter, warm, seed):
    n, p = train.shape
    r = rank_max
    rng = np.random.default_rng(seed)
    if warm is not None and warm.rank:
        j = min(warm.rank, r)
        U = np.linalg.qr(np.hstack([warm.U[:, :j], rng.standard_normal((n, r - j))]))[0]
        Dsq = np.concatenate([warm.d[:j], np.ones(r - j)])
        V = np.hstack([warm.V[:, :j], np.zeros((p, r - j))])
    else:
        U = np.linalg.qr(rng.standard_normal((n, r)))[0]
        Dsq = np.ones(r)
        V = np.zeros((p, r))
    trace = Trace(TRACE_COLUMNS)

    def factor_objective(U, Dsq, V):
        resid = train.values - lowrank_predict(train.rows, train.cols, U * Dsq, V)
        penalty = float((Dsq * (U * U).sum(axis=0)).sum() + (Dsq * (V * V).sum(axis=0)).sum())
        return 0.5 * float(resid @ resid) + 0.5 * lam * penalty

    def ridge_coef(Dsq):
        # (D^2 + lam)^-1 D, zero where both vanish
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.where(Dsq + lam > 0, np.sqrt(Dsq) / (Dsq + lam), 0.0)

    obj = factor_objective(U, Dsq, V)
    trace.record(iter=0, objective=obj, rank=int(np.count_nonzero(Dsq)))
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        # A = U D, B = V D with D = diag(sqrt(Dsq)); ABt = U Dsq V'
        D = np.sqrt(Dsq)
        S, _ = _residual_matrix(train, LowRankTriple(U, Dsq, V))
        # B-step: Bt = (D^2 + lam)^-1 D U' X*, X* = S + U Dsq V'
        UtX = (S.T @ U).T + Dsq[:, None] * V.T
        Bt = ridge_coef(Dsq)[:, None] * UtX
        Vn, s, Rt = np.linalg.svd(Bt.T * D, full_matrices=False)
        V, Dsq, U = Vn, s, U @ Rt.T

        D = np.sqrt(Dsq)
        S, _ = _residual_matrix(train, LowRankTriple(U, Dsq, V))
        # A-step: At = (D^2 + lam)^-1 D V' X*'
        VtXt = (S @ V).T + Dsq[:, None] * U.T
        At = ridge_coef(Dsq)[:, None] * VtXt
        Un, s, Rt = np.linalg.svd(At.T * D, full_matrices=False)
        U, Dsq, V = Un, s, V @ Rt.T

        new_obj = factor_objective(U, Dsq, V)
        trace.record(iter=it, objective=new_obj, rank=int(np.count_nonzero(Dsq > 0)))
        change = (obj - new_obj) / max(abs(obj), np.finfo(float).tiny)
        obj = new_obj
        if abs(change) < tol:
            converged = True
            break
    # final soft-threshold step on X* V
    S, _ = _residual_matrix(train, LowRankTriple(U, Dsq, V))
    M = S @ V + U * Dsq
    Uf, sf, Rt = np.linalg.svd(M, full_matrices=False)
    z = soft_threshold(LowRankTriple(Uf, sf, V @ Rt.T), lam)
    z = LowRankTriple(z.U, z.d, z.V, converged, it)
    ceiling = z.rank == rank_max and float(z.d[-1]) > 0.0 if z.rank else False
    return SoftImputeResult(z, trace, converged, ceiling, it)
