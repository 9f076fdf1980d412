"""Minority oversampling by interpolation towards the nearest of a few random peers.

For each minority vector ``x`` (cycled in index order) ``n_candidates``
distinct other minority vectors are drawn, the closest one ``x_nn`` is
kept, and ``x + u * (x_nn - x)`` with ``u ~ U(0, 1)`` is emitted. This
differs from the k-nearest-neighbour SMOTE found in most libraries.
"""

from dataclasses import dataclass

import numpy as np

from .errors import InsufficientMinority
from .numerics import make_rng


@dataclass(frozen=True)
class SmoteConfig:
    n_candidates: int = 5
    target_ratio: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.n_candidates < 1:
            raise ValueError("n_candidates must be >= 1")
        if not 0.0 < self.target_ratio <= 1.0:
            raise ValueError("target_ratio must lie in (0, 1]")


@dataclass(frozen=True, eq=False)
class SmoteResult:
    synthetic: np.ndarray  # (n_synthetic, dim)
    parents: np.ndarray    # (n_synthetic, 2) minority indices of x and x_nn
    weights: np.ndarray    # (n_synthetic,) interpolation factors u

    def __len__(self):
        return self.synthetic.shape[0]


def n_synthetic(n_minority, majority_count, target_ratio=1.0):
    return max(0, int(round(majority_count * target_ratio)) - n_minority)


def smote_with_parents(minority, majority_count, config=SmoteConfig()):
    x = np.atleast_2d(np.asarray(minority, dtype=np.float64))
    m = x.shape[0]
    if m < 2:
        raise InsufficientMinority(f"need at least 2 minority samples, got {m}")
    if majority_count < m:
        raise ValueError(f"majority_count {majority_count} is smaller than minority size {m}")
    total = n_synthetic(m, majority_count, config.target_ratio)
    rng = make_rng(config.seed)
    k = min(config.n_candidates, m - 1)
    out = np.empty((total, x.shape[1]))
    parents = np.empty((total, 2), dtype=np.intp)
    weights = np.empty(total)
    for j in range(total):
        i = j % m
        others = rng.choice(m - 1, size=k, replace=False)
        others = np.sort(others + (others >= i))  # skip i itself; sorted so argmin ties pick lowest index
        dist = np.sum((x[others] - x[i]) ** 2, axis=1)
        nn = others[np.argmin(dist)]
        u = rng.random()
        out[j] = x[i] + u * (x[nn] - x[i])
        parents[j] = (i, nn)
        weights[j] = u
    return SmoteResult(out, parents, weights)


def smote(minority, majority_count, config=SmoteConfig()):
    """Synthetic minority vectors bringing the minority up to ``target_ratio * majority_count``."""
    return smote_with_parents(minority, majority_count, config).synthetic
