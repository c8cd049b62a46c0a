"""Synthetic low-rank completion instances with a known ground truth."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .sparse import SparseRatings


@dataclass(frozen=True)
class CompletionInstance:
    truth: np.ndarray
    noisy: np.ndarray
    mask: np.ndarray
    observed: SparseRatings

    def heldout(self):
        """The unobserved cells of the noisy matrix."""
        return SparseRatings.from_dense(self.noisy, ~self.mask)


def low_rank_instance(n, p, rank, noise=0.05, observed=0.2, seed=0, nonneg=False):
    """``U V'`` plus Gaussian noise, observed on a uniform random subset of cells.

    Factors are standard normal, or uniform on [0, 1) with ``nonneg``. The
    noise standard deviation is ``noise`` times the standard deviation of the
    noiseless entries. Exactly ``round(observed * n * p)`` cells are drawn,
    then one extra cell is added to any row or column left empty.
    """
    if not 0.0 < observed <= 1.0:
        raise ValueError("observed fraction must lie in (0, 1]")
    rng = np.random.default_rng(seed)
    draw = rng.uniform if nonneg else rng.standard_normal
    U = draw(size=(n, rank))
    V = draw(size=(p, rank))
    truth = U @ V.T
    noisy = truth + noise * truth.std() * rng.standard_normal((n, p))
    mask = np.zeros(n * p, dtype=bool)
    mask[rng.choice(n * p, size=int(round(observed * n * p)), replace=False)] = True
    mask = mask.reshape(n, p)
    for i in np.flatnonzero(~mask.any(axis=1)):
        mask[i, rng.integers(p)] = True
    for j in np.flatnonzero(~mask.any(axis=0)):
        mask[rng.integers(n), j] = True
    return CompletionInstance(truth, noisy, mask, SparseRatings.from_dense(noisy, mask))
