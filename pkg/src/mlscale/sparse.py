"""Sparse rating matrices, MovieLens ingestion, holdout splits and error metrics."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import kernels

log = logging.getLogger(__name__)

DELIMITERS = {"tab": "\t", "comma": ",", "double-colon": "::"}


class ParseError(ValueError):
    """A ratings file could not be parsed."""


@dataclass(frozen=True, eq=False)
class SparseRatings:
    """Observed entries of an ``n_rows x n_cols`` rating matrix.

    Entries are kept in row-major order (sorted by row, then column). The
    per-row and per-column indexes are CSR / CSC arrays over the same entries:
    ``row_ptr, row_cols, row_vals`` and ``col_ptr, col_rows, col_vals``.
    """

    n_rows: int
    n_cols: int
    rows: np.ndarray
    cols: np.ndarray
    values: np.ndarray
    row_ids: np.ndarray | None = None
    col_ids: np.ndarray | None = None
    row_ptr: np.ndarray = field(init=False, repr=False)
    col_ptr: np.ndarray = field(init=False, repr=False)
    col_rows: np.ndarray = field(init=False, repr=False)
    col_vals: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        rows = np.ascontiguousarray(self.rows, dtype=np.int64)
        cols = np.ascontiguousarray(self.cols, dtype=np.int64)
        vals = np.ascontiguousarray(self.values, dtype=np.float64)
        if not (rows.shape == cols.shape == vals.shape) or rows.ndim != 1:
            raise ValueError("rows, cols and values must be 1-d arrays of equal length")
        if self.n_rows < 0 or self.n_cols < 0:
            raise ValueError("negative dimensions")
        if rows.size:
            if rows.min() < 0 or rows.max() >= self.n_rows:
                raise ValueError("row index out of range")
            if cols.min() < 0 or cols.max() >= self.n_cols:
                raise ValueError("column index out of range")
        if not np.all(np.isfinite(vals)):
            raise ValueError("non-finite rating value")
        order = np.lexsort((cols, rows))
        rows, cols, vals = rows[order], cols[order], vals[order]
        if rows.size > 1:
            dup = (rows[1:] == rows[:-1]) & (cols[1:] == cols[:-1])
            if dup.any():
                k = int(np.flatnonzero(dup)[0])
                raise ValueError(f"duplicate entry ({rows[k]}, {cols[k]})")
        for name, arr in (("rows", rows), ("cols", cols), ("values", vals)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

        row_ptr = np.zeros(self.n_rows + 1, dtype=np.int64)
        np.cumsum(np.bincount(rows, minlength=self.n_rows), out=row_ptr[1:])
        corder = np.lexsort((rows, cols))
        col_ptr = np.zeros(self.n_cols + 1, dtype=np.int64)
        np.cumsum(np.bincount(cols, minlength=self.n_cols), out=col_ptr[1:])
        derived = {
            "row_ptr": row_ptr,
            "col_ptr": col_ptr,
            "col_rows": np.ascontiguousarray(rows[corder]),
            "col_vals": np.ascontiguousarray(vals[corder]),
        }
        for name, arr in derived.items():
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def row_cols(self):
        return self.cols

    @property
    def row_vals(self):
        return self.values

    @property
    def nnz(self):
        return int(self.values.shape[0])

    @property
    def shape(self):
        return (self.n_rows, self.n_cols)

    def __len__(self):
        return self.nnz

    def row(self, i):
        """``(cols, values)`` observed in row ``i``."""
        s, e = self.row_ptr[i], self.row_ptr[i + 1]
        return self.cols[s:e], self.values[s:e]

    def col(self, j):
        """``(rows, values)`` observed in column ``j``."""
        s, e = self.col_ptr[j], self.col_ptr[j + 1]
        return self.col_rows[s:e], self.col_vals[s:e]

    def row_counts(self):
        return np.diff(self.row_ptr)

    def col_counts(self):
        return np.diff(self.col_ptr)

    def empty_rows(self):
        return np.flatnonzero(self.row_counts() == 0)

    def empty_cols(self):
        return np.flatnonzero(self.col_counts() == 0)

    def entry_set(self):
        return set(zip(self.rows.tolist(), self.cols.tolist(), self.values.tolist()))

    def subset(self, mask_or_index):
        """New matrix with the selected entries, same shape and id maps."""
        sel = np.asarray(mask_or_index)
        return SparseRatings(self.n_rows, self.n_cols, self.rows[sel], self.cols[sel],
                             self.values[sel], self.row_ids, self.col_ids)

    def transpose(self):
        return SparseRatings(self.n_cols, self.n_rows, self.cols, self.rows, self.values,
                             self.col_ids, self.row_ids)

    def to_scipy(self):
        import scipy.sparse as sp
        return sp.csr_matrix((self.values, self.cols, self.row_ptr), shape=self.shape)

    def to_dense(self, fill=0.0):
        out = np.full(self.shape, fill, dtype=np.float64)
        out[self.rows, self.cols] = self.values
        return out

    @classmethod
    def from_dense(cls, matrix, mask=None):
        """Entries of ``matrix`` where ``mask`` is true (all entries if no mask)."""
        matrix = np.asarray(matrix, dtype=np.float64)
        if mask is None:
            mask = np.ones(matrix.shape, dtype=bool)
        r, c = np.nonzero(mask)
        return cls(matrix.shape[0], matrix.shape[1], r, c, matrix[r, c])

    def save(self, path):
        """Write a lossless ``.npz`` snapshot (entries plus id maps)."""
        arrays = {"shape": np.array(self.shape, dtype=np.int64), "rows": self.rows,
                  "cols": self.cols, "values": self.values}
        if self.row_ids is not None:
            arrays["row_ids"] = self.row_ids
        if self.col_ids is not None:
            arrays["col_ids"] = self.col_ids
        with open(path, "wb") as fh:
            np.savez(fh, **arrays)

    @classmethod
    def load(cls, path):
        with np.load(path) as z:
            n, p = (int(x) for x in z["shape"])
            return cls(n, p, z["rows"], z["cols"], z["values"],
                       z["row_ids"] if "row_ids" in z else None,
                       z["col_ids"] if "col_ids" in z else None)


def _detect_delimiter(line):
    if "::" in line:
        return "::"
    if "\t" in line:
        return "\t"
    if "," in line:
        return ","
    raise ParseError(f"cannot detect delimiter from first line {line!r}")


def load_movielens(path, delimiter=None):
    """Load a MovieLens ratings file into a :class:`SparseRatings`.

    ``delimiter`` is one of ``"tab"``, ``"comma"``, ``"double-colon"`` (or the
    literal separator); ``None`` detects it from the first line. A non-numeric
    first line is treated as a header. User and item ids are remapped to dense
    0-based indices in increasing id order; the original ids are kept in
    ``row_ids`` / ``col_ids``. Duplicate (user, item) pairs keep the last rating.
    """
    path = Path(path)
    sep = DELIMITERS.get(delimiter, delimiter)
    users, items, ratings = [], [], []
    with path.open("r", encoding="utf-8", errors="replace") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            if sep is None:
                sep = _detect_delimiter(line)
            fields = line.split(sep)
            if len(fields) < 3:
                raise ParseError(f"line {lineno}: expected at least 3 fields, got {len(fields)}")
            try:
                u, i, r = int(fields[0]), int(fields[1]), float(fields[2])
            except ValueError:
                if lineno == 1:
                    continue  # header
                raise ParseError(f"line {lineno}: cannot parse {line!r}") from None
            if u <= 0 or i <= 0:
                raise ParseError(f"line {lineno}: ids must be positive integers")
            if not math.isfinite(r):
                raise ParseError(f"line {lineno}: non-finite rating")
            users.append(u)
            items.append(i)
            ratings.append(r)
    if not ratings:
        raise ParseError(f"{path}: no entries")
    users = np.asarray(users, dtype=np.int64)
    items = np.asarray(items, dtype=np.int64)
    vals = np.asarray(ratings, dtype=np.float64)
    row_ids, rows = np.unique(users, return_inverse=True)
    col_ids, cols = np.unique(items, return_inverse=True)

    # keep-last: among equal (row, col) keys keep the highest file position
    key = rows * len(col_ids) + cols
    rev = key[::-1]
    _, first_in_rev = np.unique(rev, return_index=True)
    keep = len(key) - 1 - first_in_rev
    n_dup = len(key) - len(keep)
    if n_dup:
        log.warning("%s: %d duplicate (user, item) ratings, kept the last occurrence", path, n_dup)
    keep.sort()
    return SparseRatings(len(row_ids), len(col_ids), rows[keep], cols[keep], vals[keep],
                         row_ids, col_ids)


@dataclass(frozen=True)
class HoldoutSplit:
    train: SparseRatings
    test: SparseRatings
    seed: int
    fraction: float
    empty_rows: np.ndarray
    empty_cols: np.ndarray

    @property
    def has_empty(self):
        return bool(self.empty_rows.size or self.empty_cols.size)


def holdout_split(ratings, fraction, seed, keep_coverage=False):
    """Draw ``round(fraction * nnz)`` entries uniformly without replacement as the test set.

    With ``keep_coverage`` the draw walks the same random permutation but skips
    any entry whose removal would leave a training row or column empty, so
    factorization models can be fit on the result. The split flags the rows and
    columns that end up empty in the training part.
    """
    if not 0.0 < fraction < 1.0:
        raise ValueError("fraction must lie in (0, 1)")
    n = ratings.nnz
    if n == 0:
        raise ValueError("cannot split an empty rating matrix")
    n_test = int(round(fraction * n))
    rng = np.random.default_rng(seed)
    perm = rng.permutation(n)
    if keep_coverage:
        rc = ratings.row_counts().copy()
        cc = ratings.col_counts().copy()
        chosen = []
        for e in perm:
            if len(chosen) == n_test:
                break
            r, c = ratings.rows[e], ratings.cols[e]
            if rc[r] > 1 and cc[c] > 1:
                rc[r] -= 1
                cc[c] -= 1
                chosen.append(e)
        test_idx = np.asarray(chosen, dtype=np.int64)
    else:
        test_idx = perm[:n_test]
    mask = np.zeros(n, dtype=bool)
    mask[test_idx] = True
    train = ratings.subset(~mask)
    test = ratings.subset(mask)
    return HoldoutSplit(train, test, seed, fraction, train.empty_rows(), train.empty_cols())


def project_residual(ratings, model):
    """Residuals ``value - model(row, col)`` on the observed entries only.

    ``model`` must expose ``shape`` and ``predict_entries(rows, cols)``.
    Returns ``(rows, cols, residuals)`` aligned with the entries of ``ratings``.
    """
    if tuple(model.shape) != ratings.shape:
        raise ValueError(f"model shape {tuple(model.shape)} does not match ratings {ratings.shape}")
    pred = model.predict_entries(ratings.rows, ratings.cols)
    return ratings.rows, ratings.cols, ratings.values - pred


def rmse(residuals):
    r = np.asarray(residuals, dtype=np.float64)
    if r.size == 0:
        raise ValueError("rmse of an empty residual list")
    return float(np.sqrt(np.mean(r * r)))


@dataclass(frozen=True)
class BaselineModel:
    """Global, per-row and per-column mean predictors."""

    global_mean: float
    row_means: np.ndarray
    col_means: np.ndarray
    kind: str = "global"

    @property
    def shape(self):
        return (self.row_means.shape[0], self.col_means.shape[0])

    def with_kind(self, kind):
        if kind not in ("global", "row", "col"):
            raise ValueError(f"unknown baseline kind {kind!r}")
        return BaselineModel(self.global_mean, self.row_means, self.col_means, kind)

    def predict_entries(self, rows, cols):
        rows = np.asarray(rows, dtype=np.int64)
        if self.kind == "row":
            return self.row_means[rows]
        if self.kind == "col":
            return self.col_means[np.asarray(cols, dtype=np.int64)]
        return np.full(rows.shape, self.global_mean)

    def predict(self, row, col):
        return float(self.predict_entries(np.array([row]), np.array([col]))[0])


def baseline_predictors(train):
    if train.nnz == 0:
        raise ValueError("baseline of an empty rating matrix")
    g = float(train.values.mean())
    rc, cc = train.row_counts(), train.col_counts()
    rs = np.bincount(train.rows, weights=train.values, minlength=train.n_rows)
    cs = np.bincount(train.cols, weights=train.values, minlength=train.n_cols)
    with np.errstate(invalid="ignore", divide="ignore"):
        row_means = np.where(rc > 0, rs / np.maximum(rc, 1), g)
        col_means = np.where(cc > 0, cs / np.maximum(cc, 1), g)
    return BaselineModel(g, row_means, col_means)


def lowrank_predict(rows, cols, left, right):
    """Entrywise ``left @ right.T`` at the given coordinates (compiled when available)."""
    return kernels.lowrank_entries(np.ascontiguousarray(rows, dtype=np.int64),
                                   np.ascontiguousarray(cols, dtype=np.int64),
                                   np.ascontiguousarray(left, dtype=np.float64),
                                   np.ascontiguousarray(right, dtype=np.float64))


def compact(ratings):
    """Drop empty rows and columns.

    Returns ``(compacted, row_map, col_map)`` where ``row_map[i]`` is the new
    index of original row ``i`` or ``-1`` if it was dropped (same for columns).
    """
    keep_r = ratings.row_counts() > 0
    keep_c = ratings.col_counts() > 0
    row_map = np.full(ratings.n_rows, -1, dtype=np.int64)
    col_map = np.full(ratings.n_cols, -1, dtype=np.int64)
    row_map[keep_r] = np.arange(int(keep_r.sum()))
    col_map[keep_c] = np.arange(int(keep_c.sum()))
    rid = ratings.row_ids[keep_r] if ratings.row_ids is not None else None
    cid = ratings.col_ids[keep_c] if ratings.col_ids is not None else None
    out = SparseRatings(int(keep_r.sum()), int(keep_c.sum()), row_map[ratings.rows],
                        col_map[ratings.cols], ratings.values, rid, cid)
    return out, row_map, col_map
