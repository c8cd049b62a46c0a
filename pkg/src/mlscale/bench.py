"""Learning-curve experiment runner: fit on nested training subsamples, score on a fixed test set.

A config is a TOML file::

    task = "complete_als"
    dataset = "data/ml-100k/u.data"
    ladder = [30000, 60000, 90000]   # counts, or fractions of the training split
    test_fraction = 0.1
    seed = 0
    workers = 1
    out = "curve.csv"

    [grid]                           # cartesian product of the listed values
    r = [8]
    lam = [0.01]
    nonneg = [true]

``grid`` may instead be an array of tables, one per cell. For the completion
tasks ``dataset = "synthetic"`` draws an instance from a ``[synthetic]`` table
(``n``, ``p``, ``rank``, ``noise``, ``observed``, ``nonneg``, ``seed``).
"""

from __future__ import annotations

import csv
import io
import itertools
import json
import logging
import math
import sys
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

log = logging.getLogger(__name__)

TASKS = ("complete_als", "complete_svt", "nmf", "textclass", "kmeans")
COLUMNS = ("task", "method", "train_size", "params", "fit_seconds", "metric_name",
           "metric_value", "seed", "workers")
FAILED = "failed"


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ExperimentConfig:
    task: str
    dataset: str
    grid: tuple
    ladder: tuple
    seed: int = 0
    out: str | None = None
    workers: int = 1
    test_fraction: float = 0.1
    synthetic: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.task not in TASKS:
            raise ConfigError(f"task must be one of {TASKS}")
        if not self.grid:
            raise ConfigError("parameter grid is empty")
        if not self.ladder:
            raise ConfigError("train-size ladder is empty")
        if any(b <= a for a, b in zip(self.ladder, self.ladder[1:])):
            raise ConfigError("train-size ladder must be strictly increasing")
        if any(x <= 0 for x in self.ladder):
            raise ConfigError("train sizes must be positive")
        if self.workers < 1:
            raise ConfigError("workers must be at least 1")
        if not 0.0 < self.test_fraction < 1.0:
            raise ConfigError("test_fraction must lie in (0, 1)")

    @classmethod
    def from_dict(cls, d, base_dir=None):
        d = dict(d)
        missing = {"task", "dataset", "grid", "ladder"} - d.keys()
        if missing:
            raise ConfigError(f"config lacks {sorted(missing)}")
        grid = expand_grid(d.pop("grid"))
        dataset = str(d.pop("dataset"))
        if base_dir is not None and dataset != "synthetic" and not Path(dataset).is_absolute():
            dataset = str(Path(base_dir) / dataset)
        known = {"task", "ladder", "seed", "out", "workers", "test_fraction", "synthetic"}
        extra = set(d) - known
        if extra:
            raise ConfigError(f"unknown config keys {sorted(extra)}")
        d["ladder"] = tuple(d["ladder"])
        return cls(dataset=dataset, grid=grid, **d)

    @classmethod
    def from_toml(cls, path):
        with open(path, "rb") as fh:
            try:
                raw = tomllib.load(fh)
            except tomllib.TOMLDecodeError as exc:
                raise ConfigError(f"{path}: {exc}") from None
        return cls.from_dict(raw, base_dir=Path(path).resolve().parent)

    def override(self, **kw):
        return replace(self, **{k: v for k, v in kw.items() if v is not None})


def expand_grid(grid):
    """Cells of a grid given as a table of value lists (cartesian product) or a list of tables."""
    if isinstance(grid, dict):
        keys = sorted(grid)
        values = [v if isinstance(v, list) else [v] for v in (grid[k] for k in keys)]
        cells = [dict(zip(keys, combo)) for combo in itertools.product(*values)]
    elif isinstance(grid, list):
        cells = [dict(c) for c in grid]
    else:
        raise ConfigError("grid must be a table or an array of tables")
    return tuple(cells)


@dataclass(frozen=True)
class ResultRow:
    task: str
    method: str
    train_size: int
    params: str
    fit_seconds: float
    metric_name: str
    metric_value: float | str
    seed: int
    workers: int

    def as_dict(self):
        return {c: getattr(self, c) for c in COLUMNS}


def format_params(cell):
    return ";".join(f"{k}={cell[k]}" for k in sorted(cell))


def run_learning_curve(config, clock=time.perf_counter):
    """One row per (ladder point, grid cell), in ladder-major then grid order.

    Only the model fit is timed with ``clock``; loading, subsampling and
    scoring are not. A cell that raises gets ``metric_value = "failed"``.
    """
    task = _TASKS[config.task](config)
    sizes = [task.resolve_size(x) for x in config.ladder]
    if any(b <= a for a, b in zip(sizes, sizes[1:])):
        raise ConfigError(f"ladder resolves to non-increasing sizes {sizes}")
    jobs = [(i, j, size, cell) for i, size in enumerate(sizes)
            for j, cell in enumerate(config.grid)]

    def run(job):
        _, _, size, cell = job
        try:
            fit, score = task.prepare(size, cell)
            t0 = clock()
            model = fit()
            seconds = clock() - t0
            value = float(score(model))
            if not math.isfinite(value):
                raise FloatingPointError("non-finite metric")
        except (ValueError, ArithmeticError, np.linalg.LinAlgError) as exc:
            log.warning("cell %s at size %d failed: %s", format_params(cell), size, exc)
            return ResultRow(config.task, task.method(cell), size, format_params(cell), 0.0,
                             task.metric_name, FAILED, config.seed, config.workers)
        return ResultRow(config.task, task.method(cell), size, format_params(cell),
                         max(seconds, 0.0), task.metric_name, value, config.seed, config.workers)

    if config.workers > 1:
        with ThreadPoolExecutor(config.workers) as pool:
            rows = list(pool.map(run, jobs))
    else:
        rows = [run(job) for job in jobs]
    return rows


def emit_results(rows, path=None, fmt="csv"):
    """Write rows as CSV (fixed header) or JSON; returns the text. Empty input is an error."""
    if not rows:
        raise ValueError("no result rows to emit")
    if fmt == "csv":
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(COLUMNS)
        for r in rows:
            d = r.as_dict()
            w.writerow([_csv_value(d[c]) for c in COLUMNS])
        text = buf.getvalue()
    elif fmt == "json":
        text = json.dumps([r.as_dict() for r in rows], indent=1) + "\n"
    else:
        raise ValueError("format must be csv or json")
    if path is not None:
        with open(path, "w", newline="") as fh:
            fh.write(text)
    return text


def _csv_value(v):
    return repr(float(v)) if isinstance(v, float) else v


def read_results(path):
    """Rows back from a CSV or JSON results file (format chosen by extension)."""
    if str(path).endswith(".json"):
        with open(path) as fh:
            recs = json.load(fh)
    else:
        with open(path, newline="") as fh:
            recs = list(csv.DictReader(fh))
    out = []
    for d in recs:
        mv = d["metric_value"]
        out.append(ResultRow(d["task"], d["method"], int(d["train_size"]), d["params"],
                             float(d["fit_seconds"]), d["metric_name"],
                             mv if mv == FAILED else float(mv), int(d["seed"]), int(d["workers"])))
    return out


# --- tasks -----------------------------------------------------------------
# prepare(size, cell) returns (fit, score): fit() is the only timed call and
# score(model) evaluates on the fixed test set.

class _Task:
    metric_name = ""

    def __init__(self, config):
        self.config = config
        self.n_train = 0

    def resolve_size(self, x):
        if isinstance(x, float) and x <= 1.0:
            size = int(round(x * self.n_train))
        else:
            size = int(x)
        if size > self.n_train:
            raise ConfigError(f"ladder point {x} exceeds the {self.n_train} training items")
        return size

    def method(self, cell):
        return self.config.task


class _CompletionTask(_Task):
    metric_name = "test_rmse"

    def __init__(self, config):
        super().__init__(config)
        from .sparse import holdout_split, load_movielens
        from .synthetic import low_rank_instance

        if config.dataset == "synthetic":
            s = dict(config.synthetic)
            inst = low_rank_instance(s.get("n", 200), s.get("p", 150), s.get("rank", 5),
                                     s.get("noise", 0.05), s.get("observed", 0.3),
                                     s.get("seed", config.seed), s.get("nonneg", False))
            ratings = inst.observed
        else:
            ratings = load_movielens(config.dataset)
        split = holdout_split(ratings, config.test_fraction, config.seed)
        self.train, self.test = split.train, split.test
        self.n_train = self.train.nnz
        # nested subsamples: prefixes of one seeded permutation
        self.order = np.random.default_rng(config.seed + 1).permutation(self.n_train)

    def prepare(self, size, cell):
        from .sparse import compact
        sub, rmap, cmap = compact(self.train.subset(np.sort(self.order[:size])))
        fit = self.fitter(sub, cell)

        def score(model):
            r, c = rmap[self.test.rows], cmap[self.test.cols]
            seen = (r >= 0) & (c >= 0)
            # test entries in rows or columns absent from the subsample get its mean
            pred = np.full(self.test.nnz, float(sub.values.mean()))
            pred[seen] = self.predict(model, r[seen], c[seen])
            err = self.test.values - pred
            return float(np.sqrt(np.mean(err * err)))

        return fit, score


class _AlsTask(_CompletionTask):
    def method(self, cell):
        return "als_nonneg" if cell.get("nonneg", False) else "als"

    def fitter(self, sub, cell):
        from .als import als_fit
        # predictions are clipped to the observed rating range unless clip = false
        bounds = (float(sub.values.min()), float(sub.values.max())) if cell.get("clip", True) else None
        return lambda: als_fit(sub, int(cell.get("r", 8)), float(cell.get("lam", 0.01)),
                               nonneg=bool(cell.get("nonneg", False)),
                               max_iter=int(cell.get("max_iter", 30)), seed=self.config.seed,
                               workers=self.config.workers, rating_bounds=bounds)

    def predict(self, result, r, c):
        return result.model.predict_entries(r, c)


class _SvtTask(_CompletionTask):
    def method(self, cell):
        return f"soft_impute_{cell.get('mode', 'svd')}"

    def fitter(self, sub, cell):
        from .sparse import SparseRatings
        from .svt import soft_impute
        mu = float(sub.values.mean()) if cell.get("center", True) else 0.0
        shifted = SparseRatings(sub.n_rows, sub.n_cols, sub.rows, sub.cols, sub.values - mu)

        def fit():
            res = soft_impute(shifted, float(cell.get("lam", 1.0)), int(cell.get("rank_max", 10)),
                              max_iter=int(cell.get("max_iter", 100)), seed=self.config.seed,
                              mode=cell.get("mode", "svd"))
            return res, mu
        return fit

    def predict(self, model, r, c):
        res, mu = model
        return res.triple.predict_entries(r, c) + mu


class _NmfTask(_CompletionTask):
    def method(self, cell):
        return f"nmf_{cell.get('algorithm', 'multiplicative_ls')}_zero_fill"

    def fitter(self, sub, cell):
        from .nmf import NmfConfig, nmf_fit
        cfg = NmfConfig(int(cell.get("r", 8)), cell.get("algorithm", "multiplicative_ls"),
                        cell.get("init", "nndsvd"), int(cell.get("n_starts", 1)),
                        int(cell.get("max_iter", 200)), seed=self.config.seed)
        X = sub.to_dense()
        return lambda: nmf_fit(X, cfg)

    def predict(self, res, r, c):
        return np.einsum("ij,ji->i", res.W[r], res.H[:, c])


class _TextTask(_Task):
    metric_name = "test_error"

    def __init__(self, config):
        super().__init__(config)
        from .text import read_corpus
        labels, docs = read_corpus(config.dataset)
        n = len(docs)
        perm = np.random.default_rng(config.seed).permutation(n)
        n_test = int(round(config.test_fraction * n))
        if n_test < 1 or n_test >= n:
            raise ConfigError("corpus too small for the requested test fraction")
        self.test_idx = np.sort(perm[:n_test])
        self.train_idx = perm[n_test:]
        self.labels = np.asarray(labels)
        self.docs = docs
        self.n_train = self.train_idx.size
        self._features = {}
        self._lock = threading.Lock()

    def method(self, cell):
        return f"ovr_logreg_{cell.get('optimizer', 'batch_gradient')}"

    def _counts(self, cell):
        from .text import TextPipeline
        key = (int(cell.get("n_hash", 60000)), int(cell.get("ngram", 1)),
               bool(cell.get("signed", True)))
        with self._lock:
            if key not in self._features:
                self._features[key] = TextPipeline(*key).transform(self.docs)
            return self._features[key]

    def prepare(self, size, cell):
        from .logreg import error_rate, train_ovr
        from .text import HashedMatrix, tfidf_fit, tfidf_transform
        counts = self._counts(cell)
        tr = np.sort(self.train_idx[:size])
        train_counts = HashedMatrix(counts.matrix[tr], "counts")
        idf = tfidf_fit(train_counts)
        X = tfidf_transform(train_counts, idf)
        Xte = tfidf_transform(HashedMatrix(counts.matrix[self.test_idx], "counts"), idf)
        y = self.labels[tr]

        def fit():
            return train_ovr(X, y, float(cell.get("lam", 1e-4)),
                             cell.get("optimizer", "batch_gradient"),
                             int(cell.get("max_epochs", 100)), float(cell.get("tol", 1e-5)),
                             self.config.seed, workers=self.config.workers)

        def score(result):
            return error_rate(result.model.predict(Xte), self.labels[self.test_idx])

        return fit, score


class _KMeansTask(_Task):
    metric_name = "test_inertia_per_point"

    def __init__(self, config):
        super().__init__(config)
        from .kmeans import read_points
        data = read_points(config.dataset)
        perm = np.random.default_rng(config.seed).permutation(data.shape[0])
        n_test = int(round(config.test_fraction * data.shape[0]))
        if n_test < 1 or n_test >= data.shape[0]:
            raise ConfigError("data set too small for the requested test fraction")
        self.test = data[np.sort(perm[:n_test])]
        self.train_idx = perm[n_test:]
        self.data = data
        self.n_train = self.train_idx.size

    def method(self, cell):
        return f"kmeans_p{int(cell.get('n_partitions', 1))}"

    def prepare(self, size, cell):
        from .kmeans import assign, kmeans_fit
        X = self.data[np.sort(self.train_idx[:size])]

        def fit():
            return kmeans_fit(X, int(cell.get("k", 2)), int(cell.get("n_partitions", 1)),
                              self.config.seed, int(cell.get("max_iter", 100)),
                              float(cell.get("tol", 1e-8)), workers=self.config.workers)

        def score(result):
            return assign(self.test, result.state)[1] / self.test.shape[0]

        return fit, score


_TASKS = {"complete_als": _AlsTask, "complete_svt": _SvtTask, "nmf": _NmfTask,
          "textclass": _TextTask, "kmeans": _KMeansTask}
