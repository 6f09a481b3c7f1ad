"""Classical rankers used as reference points: ReliefF, binned mutual
information and random-forest impurity importance (Genie3 style)."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Union

import numpy as np
from sklearn.tree import DecisionTreeClassifier

from .importance import ImportanceVector
from .tabular import Dataset

# reference rows per distance block in ReliefF
_BLOCK = 64


@dataclass(frozen=True)
class ReliefFParams:
    n_neighbors: int = 10
    sample_size: Union[int, str] = "all"
    seed: int = 0

    def __post_init__(self):
        if self.n_neighbors < 1:
            raise ValueError("n_neighbors must be at least 1")
        if self.sample_size != "all" and int(self.sample_size) < 1:
            raise ValueError("sample_size must be positive or 'all'")


@dataclass(frozen=True)
class ForestParams:
    n_trees: int = 100
    max_features_per_split: Union[int, str] = "sqrt"
    min_leaf_size: int = 1
    seed: int = 0

    def __post_init__(self):
        if self.n_trees < 1:
            raise ValueError("n_trees must be at least 1")
        if self.min_leaf_size < 1:
            raise ValueError("min_leaf_size must be at least 1")
        if self.max_features_per_split != "sqrt" and int(self.max_features_per_split) < 1:
            raise ValueError("max_features_per_split must be 'sqrt' or a positive int")

    def max_features(self, n_features: int) -> int:
        if self.max_features_per_split == "sqrt":
            return max(1, int(math.sqrt(n_features)))
        return min(int(self.max_features_per_split), n_features)


# ---------------------------------------------------------------------------
# ReliefF
# ---------------------------------------------------------------------------


def relieff(data: Dataset, params: ReliefFParams = ReliefFParams()) -> ImportanceVector:
    """Multi-class ReliefF with k nearest hits and k nearest misses per class.

    Neighbours use Euclidean distance over all features; per-feature
    differences are divided by the feature's range. Misses from class ``c``
    are weighted by ``P(c) / (1 - P(class_i))``. Raw weights can be negative,
    so they are shifted up by ``-min`` when needed; the offset is kept in
    ``metadata["offset"]``.
    """
    X = np.asarray(data.features, dtype=np.float64)
    y = data.labels
    n, n_feat = X.shape
    classes = np.unique(y)
    counts = np.bincount(y, minlength=data.n_classes)
    priors = counts / n
    span = X.max(axis=0) - X.min(axis=0) if n else np.zeros(n_feat)
    scale = np.where(span > 0, span, 1.0)
    Xn = X / scale
    Xn[:, span == 0] = 0.0

    if params.sample_size == "all" or int(params.sample_size) >= n:
        refs = np.arange(n)
    else:
        rng = np.random.default_rng(params.seed)
        refs = np.sort(rng.choice(n, size=int(params.sample_size), replace=False))
    m = refs.size

    k = params.n_neighbors
    short = [int(c) for c in classes if counts[c] < k + 1]
    if short:
        warnings.warn(
            f"classes {short} have fewer than n_neighbors+1={k + 1} members; "
            "using fewer neighbours for them",
            RuntimeWarning,
            stacklevel=2,
        )
    members = {int(c): np.flatnonzero(y == c) for c in classes}

    weights = np.zeros(n_feat)
    for start in range(0, m, _BLOCK):
        block = refs[start:start + _BLOCK]
        dist = ((X[block, None, :] - X[None, :, :]) ** 2).sum(axis=-1)
        for row, i in enumerate(block):
            ci = int(y[i])
            d_i = dist[row]
            for c, idx in members.items():
                if c == ci:
                    idx = idx[idx != i]
                kc = min(k, idx.size)
                if kc == 0:
                    continue
                # stable sort: equal distances resolved by instance index
                near = idx[np.argsort(d_i[idx], kind="stable")[:kc]]
                diff = np.abs(Xn[near] - Xn[i]).sum(axis=0) / (m * kc)
                if c == ci:
                    weights -= diff
                else:
                    weights += priors[c] / (1.0 - priors[ci]) * diff
    offset = max(0.0, -float(weights.min())) if n_feat else 0.0
    return ImportanceVector(
        weights + offset, "relieff", data.feature_names,
        {"offset": offset, "n_neighbors": k, "n_reference": int(m)},
    )


# ---------------------------------------------------------------------------
# Mutual information
# ---------------------------------------------------------------------------


def equal_frequency_bins(x: np.ndarray, n_bins: int) -> np.ndarray:
    """Bin ids from quantile cut points; tied values always share a bin, so
    heavily tied columns end up with fewer than ``n_bins`` bins."""
    cuts = np.unique(np.quantile(x, np.linspace(0.0, 1.0, n_bins + 1)[1:-1]))
    return np.searchsorted(cuts, x, side="right")


def _mi_bits(a: np.ndarray, b: np.ndarray) -> float:
    _, a = np.unique(a, return_inverse=True)
    _, b = np.unique(b, return_inverse=True)
    table = np.zeros((a.max() + 1, b.max() + 1))
    np.add.at(table, (a, b), 1.0)
    n = table.sum()
    pa = table.sum(axis=1, keepdims=True) / n
    pb = table.sum(axis=0, keepdims=True) / n
    pab = table / n
    nz = pab > 0
    mi = float(np.sum(pab[nz] * np.log2(pab[nz] / (pa @ pb)[nz])))
    return max(mi, 0.0)


def mutual_information(data: Dataset, n_bins: int = 10) -> ImportanceVector:
    """Plug-in I(binned feature; label) in bits, one feature at a time."""
    if n_bins < 2:
        raise ValueError("n_bins must be at least 2")
    X = np.asarray(data.features)
    scores = [_mi_bits(equal_frequency_bins(X[:, j], n_bins), data.labels)
              for j in range(data.n_features)]
    return ImportanceVector(np.array(scores), "mutual_info", data.feature_names,
                            {"n_bins": n_bins})


# ---------------------------------------------------------------------------
# Random forest
# ---------------------------------------------------------------------------


def fit_forest(data: Dataset, params: ForestParams = ForestParams()) -> list:
    """Bootstrap CART trees (Gini, midpoint thresholds).

    Tree ``t`` draws its bootstrap and split randomness from
    ``(params.seed, t)``, so trees can be grown in any order.
    """
    X = np.asarray(data.features)
    n = X.shape[0]
    mf = params.max_features(data.n_features)
    trees = []
    for t in range(params.n_trees):
        rng = np.random.default_rng([params.seed, t])
        boot = rng.integers(0, n, size=n)
        tree = DecisionTreeClassifier(
            criterion="gini",
            max_features=mf,
            min_samples_leaf=params.min_leaf_size,
            random_state=int(rng.integers(2**31 - 1)),
        )
        tree.fit(X[boot], data.labels[boot])
        trees.append(tree)
    return trees


def forest_importance(trees: list, feature_names) -> ImportanceVector:
    total = np.zeros(len(feature_names))
    for tree in trees:
        # unnormalised: sum over splits of the sample-fraction-weighted Gini decrease
        total += tree.tree_.compute_feature_importances(normalize=False)
    return ImportanceVector(np.maximum(total / len(trees), 0.0), "random_forest",
                            feature_names, {"n_trees": len(trees)})


def random_forest_importance(data: Dataset,
                             params: ForestParams = ForestParams()) -> ImportanceVector:
    """Mean over trees of each feature's total impurity decrease."""
    return forest_importance(fit_forest(data, params), data.feature_names)


def forest_vote(trees: list, X: np.ndarray, n_classes: int) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    votes = np.zeros((X.shape[0], n_classes), dtype=np.int64)
    rows = np.arange(X.shape[0])
    for tree in trees:
        if tree.n_features_in_ != X.shape[1]:
            raise ValueError(
                f"forest expects {tree.n_features_in_} features, got {X.shape[1]}"
            )
        votes[rows, tree.predict(X).astype(np.int64)] += 1
    return np.argmax(votes, axis=1)


def predict_forest(data: Dataset, params: ForestParams, test: Dataset) -> np.ndarray:
    """Grow a forest on ``data`` and majority-vote ``test`` (ties to the lowest
    class id)."""
    if test.n_features != data.n_features:
        raise ValueError(
            f"test has {test.n_features} features, training data {data.n_features}"
        )
    return forest_vote(fit_forest(data, params), test.features, data.n_classes)
