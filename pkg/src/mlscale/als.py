"""Regularized alternating least squares over observed entries only.

Minimizes ``||P_Omega(X - A B')||_F^2 + lam (||A||_F^2 + ||B||_F^2)`` by
alternating exact ridge regressions: with ``B`` frozen, each row ``u`` of ``A``
solves ``(B_u' B_u + lam I) a_u = B_u' x_u`` using only the columns observed in
row ``u``; then symmetrically for ``B``. With ``nonneg`` each solution is
clamped at zero, which gives a nonnegative factorization usable for completion.
"""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import kernels
from .sparse import holdout_split, lowrank_predict, rmse
from .tracing import Trace

log = logging.getLogger(__name__)

TRACE_COLUMNS = ("sweep", "objective", "train_rmse", "seconds")


@dataclass(frozen=True)
class FactorModel:
    """Factors ``A`` (n x r) and ``B`` (p x r) with the metadata used to fit them."""

    A: np.ndarray
    B: np.ndarray
    lam: float = 0.0
    nonneg: bool = False
    rating_bounds: tuple | None = None

    def __post_init__(self):
        if self.A.ndim != 2 or self.B.ndim != 2 or self.A.shape[1] != self.B.shape[1]:
            raise ValueError("A and B must be 2-d with the same number of columns")
        if self.A.shape[1] < 1:
            raise ValueError("rank must be at least 1")
        if self.lam < 0:
            raise ValueError("lambda must be non-negative")
        if self.nonneg and (np.any(self.A < 0) or np.any(self.B < 0)):
            raise ValueError("nonneg model with negative factor entries")

    @property
    def rank(self):
        return self.A.shape[1]

    @property
    def shape(self):
        return (self.A.shape[0], self.B.shape[0])

    def predict_entries(self, rows, cols, clip=True):
        rows = np.asarray(rows, dtype=np.int64)
        cols = np.asarray(cols, dtype=np.int64)
        if rows.size and (rows.min() < 0 or rows.max() >= self.shape[0]
                          or cols.min() < 0 or cols.max() >= self.shape[1]):
            raise IndexError("index out of range")
        out = lowrank_predict(rows, cols, self.A, self.B)
        if clip and self.rating_bounds is not None:
            lo, hi = self.rating_bounds
            np.clip(out, lo, hi, out=out)
        return out

    def predict(self, row, col):
        """``A[row] . B[col]``, clipped to ``rating_bounds`` when set."""
        n, p = self.shape
        if not (0 <= row < n and 0 <= col < p):
            raise IndexError(f"({row}, {col}) outside {self.shape}")
        return float(self.predict_entries(np.array([row]), np.array([col]))[0])

    def with_bounds(self, bounds):
        return FactorModel(self.A, self.B, self.lam, self.nonneg, bounds)

    def save(self, path):
        save_factors(path, self.A, self.B, lam=self.lam, nonneg=self.nonneg)

    @classmethod
    def load(cls, path):
        A, B, meta = load_factors(path)
        return cls(A, B, meta["lambda"], meta["nonneg"])


def save_factors(path, A, B, lam=0.0, nonneg=False):
    """Text dump: a header line ``n p r lambda nonneg`` then the rows of A and B."""
    n, r = A.shape
    p = B.shape[0]
    with open(path, "w") as fh:
        fh.write(f"{n} {p} {r} {float(lam)!r} {int(bool(nonneg))}\n")
        np.savetxt(fh, A, fmt="%.17g")
        np.savetxt(fh, B, fmt="%.17g")


def load_factors(path):
    with open(path) as fh:
        header = fh.readline().split()
        if len(header) != 5:
            raise ValueError(f"{path}: bad factor header")
        n, p, r = (int(x) for x in header[:3])
        meta = {"lambda": float(header[3]), "nonneg": bool(int(header[4]))}
        body = np.loadtxt(fh, ndmin=2) if n + p else np.zeros((0, r))
    if body.shape != (n + p, r):
        raise ValueError(f"{path}: expected {(n + p, r)} values, found {body.shape}")
    return body[:n].copy(), body[n:].copy(), meta


@dataclass
class AlsResult:
    model: FactorModel
    trace: Trace
    converged: bool
    n_sweeps: int
    singular_rows: int = 0
    nonmonotone_sweeps: list = field(default_factory=list)


def mmmf_objective(train, A, B, lam):
    resid = train.values - lowrank_predict(train.rows, train.cols, A, B)
    return float(resid @ resid) + lam * (float((A * A).sum()) + float((B * B).sum()))


def half_sweep(indptr, indices, data, fixed, lam, nonneg, out, workers=1, backend=None):
    """One ALS half-sweep writing every row of ``out`` from the frozen ``fixed`` factor.

    Rows are solved in ``workers`` independent blocks. Numerically singular
    normal matrices (only possible with ``lam == 0``) get the least-norm
    least-squares solution. Returns the number of such rows.
    """
    kern = kernels if backend is None else kernels.get_backend(backend)
    n = out.shape[0]
    fixed = np.ascontiguousarray(fixed)
    if workers <= 1 or n < 2 * workers:
        singular = kern.ridge_half_sweep(indptr, indices, data, fixed, lam, nonneg, 0, n, out)
    else:
        bounds = np.linspace(0, n, workers + 1).astype(int)
        with ThreadPoolExecutor(workers) as pool:
            parts = list(pool.map(
                lambda se: kern.ridge_half_sweep(indptr, indices, data, fixed, lam, nonneg,
                                                 int(se[0]), int(se[1]), out),
                zip(bounds[:-1], bounds[1:])))
        singular = np.concatenate(parts)
    for u in singular:
        s, e = indptr[u], indptr[u + 1]
        sol = np.linalg.lstsq(fixed[indices[s:e]], data[s:e], rcond=None)[0]
        if nonneg:
            np.maximum(sol, 0.0, out=sol)
        out[u] = sol
    return len(singular)


def _check_trainable(train, r):
    n, p = train.shape
    if not 1 <= r <= min(n, p):
        raise ValueError(f"rank {r} must lie in [1, min(n, p) = {min(n, p)}]")
    er, ec = train.empty_rows(), train.empty_cols()
    if er.size or ec.size:
        raise ValueError(f"training matrix has {er.size} empty rows and {ec.size} empty columns")


def als_fit(train, r, lam, nonneg=False, max_iter=30, tol=1e-6, seed=0, workers=1,
            rating_bounds=None, backend=None):
    """Fit ``X ~ A B'`` on the observed entries of ``train``.

    ``B`` starts i.i.d. uniform on ``(0, 1/sqrt(r))`` and ``A`` is solved
    first. Stops after ``max_iter`` sweeps or when the relative objective change
    drops below ``tol``.
    """
    if lam < 0:
        raise ValueError("lambda must be non-negative")
    _check_trainable(train, r)
    n, p = train.shape
    rng = np.random.default_rng(seed)
    B = rng.uniform(0.0, 1.0 / np.sqrt(r), size=(p, r))
    A = np.zeros((n, r))
    row = (train.row_ptr, train.cols, train.values)
    col = (train.col_ptr, np.ascontiguousarray(train.col_rows),
           np.ascontiguousarray(train.col_vals))

    trace = Trace(TRACE_COLUMNS)
    obj = None
    converged = False
    n_singular = 0
    flagged = []
    sweep = 0
    for sweep in range(1, max_iter + 1):
        n_singular += half_sweep(*row, B, lam, nonneg, A, workers, backend)
        n_singular += half_sweep(*col, A, lam, nonneg, B, workers, backend)
        new_obj = mmmf_objective(train, A, B, lam)
        resid = train.values - lowrank_predict(train.rows, train.cols, A, B)
        trace.record(sweep=sweep, objective=new_obj, train_rmse=rmse(resid))
        if obj is not None:
            if new_obj > obj + 1e-9 * max(1.0, abs(obj)):
                flagged.append(sweep)
            if abs(obj - new_obj) / max(abs(obj), np.finfo(float).tiny) < tol:
                obj = new_obj
                converged = True
                break
        obj = new_obj
    if n_singular:
        log.warning("%d singular ridge systems solved by least norm", n_singular)
    if nonneg:
        # clamping can leave -0.0 entries
        np.maximum(A, 0.0, out=A)
        np.maximum(B, 0.0, out=B)
    model = FactorModel(A, B, lam, nonneg, rating_bounds)
    return AlsResult(model, trace, converged, sweep, n_singular, flagged)


@dataclass
class CrossValidation:
    table: list
    best: tuple | None

    def to_rows(self):
        return [(c["r"], c["lam"], c["rmse"]) for c in self.table]


def cross_validate(train, grid, validation_fraction=0.1, seed=0, nonneg=False, max_iter=30,
                   tol=1e-6, rating_bounds=None, folds=None):
    """Validation RMSE for every ``(r, lam)`` cell of ``grid``.

    With ``folds=None`` a single held-out validation sample (``validation_fraction``
    of the entries, coverage kept) is used; otherwise a ``folds``-fold split of
    the entries and the mean fold RMSE. Cells whose fit fails are recorded with
    ``rmse=None`` and an ``error`` message. The argmin breaks ties by smallest
    ``r`` then smallest ``lam``.
    """
    if not grid:
        raise ValueError("empty grid")
    splits = _validation_splits(train, validation_fraction, seed, folds)
    table = []
    for r, lam in grid:
        cell = {"r": r, "lam": lam, "rmse": None, "error": None}
        try:
            scores = []
            for fit_part, val_part in splits:
                res = als_fit(fit_part, r, lam, nonneg=nonneg, max_iter=max_iter, tol=tol,
                              seed=seed, rating_bounds=rating_bounds)
                pred = res.model.predict_entries(val_part.rows, val_part.cols)
                scores.append(rmse(val_part.values - pred))
            cell["rmse"] = float(np.mean(scores))
        except (ValueError, np.linalg.LinAlgError) as exc:
            cell["error"] = str(exc)
        table.append(cell)
    ok = [c for c in table if c["rmse"] is not None]
    best = None
    if ok:
        c = min(ok, key=lambda c: (c["rmse"], c["r"], c["lam"]))
        best = (c["r"], c["lam"], c["rmse"])
    return CrossValidation(table, best)


def _validation_splits(train, fraction, seed, folds):
    if folds is None:
        split = holdout_split(train, fraction, seed, keep_coverage=True)
        return [(split.train, split.test)]
    if folds < 2:
        raise ValueError("folds must be at least 2")
    perm = np.random.default_rng(seed).permutation(train.nnz)
    out = []
    for chunk in np.array_split(perm, folds):
        mask = np.zeros(train.nnz, dtype=bool)
        mask[chunk] = True
        out.append((train.subset(~mask), train.subset(mask)))
    return out
