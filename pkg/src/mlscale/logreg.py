"""One-vs-rest L2-regularized logistic regression on sparse hashed features.

Each class ``k`` gets an independent binary problem (class ``k`` against the
rest) minimizing ``mean_i log(1 + exp(-s_i (x_i . w + b))) + lam/2 ||w||^2``
with ``s_i = +-1``; the intercept ``b`` is not penalized.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .text import HashedMatrix
from .tracing import Trace

OPTIMIZERS = ("batch_gradient", "sgd")
TRACE_COLUMNS = ("class_id", "epoch", "loss")


@dataclass(frozen=True)
class LinearModel:
    """``K`` weight rows over ``n_hash`` features plus intercepts; ``labels[k]`` names class ``k``."""

    weights: np.ndarray
    intercepts: np.ndarray
    lam: float
    labels: tuple

    def __post_init__(self):
        K = self.weights.shape[0]
        if K < 2:
            raise ValueError("a model needs at least two classes")
        if self.intercepts.shape != (K,) or len(self.labels) != K:
            raise ValueError("weights, intercepts and labels disagree on the class count")
        if not (np.all(np.isfinite(self.weights)) and np.all(np.isfinite(self.intercepts))):
            raise ValueError("non-finite model parameters")

    @property
    def K(self):
        return self.weights.shape[0]

    @property
    def n_hash(self):
        return self.weights.shape[1]

    def scores(self, X):
        X = _as_csr(X)
        if X.shape[1] != self.n_hash:
            raise ValueError(f"feature width {X.shape[1]} does not match model width {self.n_hash}")
        return np.asarray(X @ self.weights.T) + self.intercepts

    def predict_ids(self, X):
        # np.argmax returns the first maximum: ties go to the smallest class id
        return np.argmax(self.scores(X), axis=1)

    def predict(self, X):
        return [self.labels[k] for k in self.predict_ids(X)]

    def dump(self, path, label_path=None):
        """Header ``K n_hash lambda`` then one row ``intercept w_0 ... w_{n-1}`` per class.

        The label map goes to ``label_path`` (default ``path + '.labels'``), one
        ``class_id<TAB>label`` line per class.
        """
        with open(path, "w") as fh:
            fh.write(f"{self.K} {self.n_hash} {float(self.lam)!r}\n")
            np.savetxt(fh, np.column_stack([self.intercepts, self.weights]), fmt="%.17g")
        with open(label_path or f"{path}.labels", "w", encoding="utf-8") as fh:
            for k, lab in enumerate(self.labels):
                fh.write(f"{k}\t{lab}\n")

    @classmethod
    def load(cls, path, label_path=None):
        with open(path) as fh:
            header = fh.readline().split()
            if len(header) != 3:
                raise ValueError(f"{path}: bad model header")
            K, n_hash, lam = int(header[0]), int(header[1]), float(header[2])
            body = np.loadtxt(fh, ndmin=2)
        if body.shape != (K, n_hash + 1):
            raise ValueError(f"{path}: expected {(K, n_hash + 1)} values, found {body.shape}")
        labels = [None] * K
        with open(label_path or f"{path}.labels", encoding="utf-8") as fh:
            for line in fh:
                k, lab = line.rstrip("\n").split("\t", 1)
                labels[int(k)] = lab
        if any(lab is None for lab in labels):
            raise ValueError("label map does not cover every class")
        return cls(body[:, 1:].copy(), body[:, 0].copy(), lam, tuple(labels))


@dataclass
class TrainResult:
    model: LinearModel
    trace: Trace
    epochs: list
    converged: list


def _as_csr(X):
    if isinstance(X, HashedMatrix):
        X = X.matrix
    X = sp.csr_matrix(X, dtype=np.float64)
    return X


def binary_loss_and_grad(w, b, X, s, lam):
    """Regularized mean logistic loss and its gradient ``(loss, grad_w, grad_b)``.

    ``s`` holds the binary targets as +1 / -1.
    """
    z = X @ w + b
    m = -s * z
    loss = float(np.mean(np.logaddexp(0.0, m))) + 0.5 * lam * float(w @ w)
    # d/dz log(1 + exp(-s z)) = -s * sigmoid(-s z)
    coef = -s * _sigmoid(m) / X.shape[0]
    grad_w = X.T @ coef + lam * w
    return loss, np.asarray(grad_w).ravel(), float(coef.sum())


def _sigmoid(x):
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    e = np.exp(x[~pos])
    out[~pos] = e / (1.0 + e)
    return out


def _loss(w, b, X, s, lam):
    z = X @ w + b
    return float(np.mean(np.logaddexp(0.0, -s * z))) + 0.5 * lam * float(w @ w)


def _fit_batch(X, s, lam, max_epochs, tol, trace_rows, shrink=0.5, armijo=1e-4):
    w = np.zeros(X.shape[1])
    b = 0.0
    loss, gw, gb = binary_loss_and_grad(w, b, X, s, lam)
    trace_rows.append((0, loss))
    step = 1.0
    converged = False
    epoch = 0
    for epoch in range(1, max_epochs + 1):
        gnorm2 = float(gw @ gw) + gb * gb
        if gnorm2 == 0.0:
            converged = True
            break
        step *= 2.0
        while True:
            w_new, b_new = w - step * gw, b - step * gb
            new_loss = _loss(w_new, b_new, X, s, lam)
            if new_loss <= loss - armijo * step * gnorm2:
                break
            step *= shrink
            if step < 1e-20:
                # no decrease representable in floating point
                w_new, b_new, new_loss = w, b, loss
                break
        w, b = w_new, b_new
        prev = loss
        loss, gw, gb = binary_loss_and_grad(w, b, X, s, lam)
        trace_rows.append((epoch, loss))
        if abs(prev - loss) / max(abs(prev), np.finfo(float).tiny) < tol:
            converged = True
            break
    return w, b, epoch, converged


def _fit_sgd(X, s, lam, max_epochs, tol, seed, trace_rows, eta0=1.0, batch_size=64):
    n = X.shape[0]
    rng = np.random.default_rng(seed)
    w = np.zeros(X.shape[1])
    b = 0.0
    loss = _loss(w, b, X, s, lam)
    trace_rows.append((0, loss))
    t = 0
    converged = False
    epoch = 0
    for epoch in range(1, max_epochs + 1):
        order = rng.permutation(n)
        for start in range(0, n, batch_size):
            idx = order[start:start + batch_size]
            t += 1
            _, gw, gb = binary_loss_and_grad(w, b, X[idx], s[idx], lam)
            eta = eta0 / np.sqrt(t)
            w -= eta * gw
            b -= eta * gb
        prev = loss
        loss = _loss(w, b, X, s, lam)
        trace_rows.append((epoch, loss))
        if abs(prev - loss) / max(abs(prev), np.finfo(float).tiny) < tol:
            converged = True
            break
    return w, b, epoch, converged


def train_binary(X, target, lam, optimizer="batch_gradient", max_epochs=100, tol=1e-6, seed=0,
                 eta0=1.0, batch_size=64):
    """Fit one binary problem; ``target`` is boolean (True = positive class).

    Returns ``(w, b, epochs, converged, [(epoch, loss), ...])``.
    """
    X = _as_csr(X)
    s = np.where(np.asarray(target, dtype=bool), 1.0, -1.0)
    rows = []
    if optimizer == "batch_gradient":
        w, b, ep, conv = _fit_batch(X, s, lam, max_epochs, tol, rows)
    elif optimizer == "sgd":
        w, b, ep, conv = _fit_sgd(X, s, lam, max_epochs, tol, seed, rows, eta0, batch_size)
    else:
        raise ValueError(f"optimizer must be one of {OPTIMIZERS}")
    return w, b, ep, conv, rows


def train_ovr(X, y, lam=1e-4, optimizer="batch_gradient", max_epochs=100, tol=1e-6, seed=0,
              workers=1, eta0=1.0, batch_size=64):
    """Train one binary model per class.

    Class ids follow the sorted order of the distinct labels in ``y``. Every
    binary problem uses the same ``seed``, so class ``k`` trained alone with
    :func:`train_binary` gives exactly row ``k`` of the joint model.
    """
    if lam < 0:
        raise ValueError("lambda must be non-negative")
    if optimizer not in OPTIMIZERS:
        raise ValueError(f"optimizer must be one of {OPTIMIZERS}")
    X = _as_csr(X)
    y = np.asarray(y)
    if y.shape[0] != X.shape[0]:
        raise ValueError(f"{y.shape[0]} labels for {X.shape[0]} documents")
    if not np.all(np.isfinite(X.data)):
        raise ValueError("non-finite feature value")
    labels, y_ids = np.unique(y, return_inverse=True)
    if labels.size < 2:
        raise ValueError("training labels contain a single class")

    def fit(k):
        return train_binary(X, y_ids == k, lam, optimizer, max_epochs, tol, seed, eta0, batch_size)

    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            fits = list(pool.map(fit, range(labels.size)))
    else:
        fits = [fit(k) for k in range(labels.size)]

    trace = Trace(TRACE_COLUMNS)
    for k, f in enumerate(fits):
        for epoch, loss in f[4]:
            trace.record(class_id=k, epoch=epoch, loss=loss)
    W = np.vstack([f[0] for f in fits])
    b = np.array([f[1] for f in fits])
    model = LinearModel(W, b, lam, tuple(labels.tolist()))
    return TrainResult(model, trace, [f[2] for f in fits], [f[3] for f in fits])


def error_rate(pred, truth):
    pred, truth = np.asarray(pred), np.asarray(truth)
    if pred.shape != truth.shape:
        raise ValueError("prediction and truth lengths differ")
    if pred.size == 0:
        raise ValueError("empty prediction")
    return float(np.mean(pred != truth))
