import math
from collections import Counter

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from san_importance.baselines import (
    ForestParams,
    ReliefFParams,
    equal_frequency_bins,
    fit_forest,
    forest_vote,
    mutual_information,
    predict_forest,
    random_forest_importance,
    relieff,
)
from san_importance.tabular import Dataset

from conftest import blobs, label_copy_dataset, three_class


def relieff_bruteforce(X, y, k):
    """Textbook multi-class ReliefF written with plain loops."""
    n, f = len(X), len(X[0])
    lo = [min(r[j] for r in X) for j in range(f)]
    hi = [max(r[j] for r in X) for j in range(f)]
    prior = {c: v / n for c, v in Counter(y).items()}

    def diff(j, a, b):
        span = hi[j] - lo[j]
        return 0.0 if span == 0 else abs(X[a][j] - X[b][j]) / span

    def dist(a, b):
        return math.sqrt(sum((X[a][j] - X[b][j]) ** 2 for j in range(f)))

    w = [0.0] * f
    for i in range(n):
        for c in prior:
            pool = [t for t in range(n) if y[t] == c and t != i]
            pool.sort(key=lambda t: (dist(i, t), t))
            near = pool[:k]
            if not near:
                continue
            for j in range(f):
                s = sum(diff(j, i, t) for t in near) / (n * len(near))
                if c == y[i]:
                    w[j] -= s
                else:
                    w[j] += prior[c] / (1 - prior[y[i]]) * s
    return w


def mi_bruteforce(a, b):
    n = len(a)
    pa, pb, pab = Counter(a), Counter(b), Counter(zip(a, b))
    return sum(c / n * math.log2((c / n) / (pa[x] / n * pb[y] / n)) for (x, y), c in pab.items())


# -- ReliefF -----------------------------------------------------------------


def test_relieff_matches_bruteforce():
    ds = three_class(45, 4, seed=2)
    fast = relieff(ds, ReliefFParams(n_neighbors=4))
    slow = np.array(relieff_bruteforce(ds.features.tolist(), ds.labels.tolist(), 4))
    offset = fast.metadata["offset"]
    assert offset == pytest.approx(max(0.0, -slow.min()), abs=1e-12)
    assert np.allclose(fast.scores - offset, slow, atol=1e-12)


def test_relieff_label_copy_ranks_first():
    ds = label_copy_dataset(40, 4, seed=1)
    r = relieff(ds, ReliefFParams())
    assert r.order()[0] == 0
    assert r.scores[0] > np.max(r.scores[1:])
    assert np.all(r.scores >= 0)
    assert r.method == "relieff"


def test_relieff_duplicate_columns_equal():
    ds = three_class(60, 4, seed=3)
    dup = Dataset(np.column_stack([ds.features, ds.features[:, 1]]), ds.labels,
                  list(ds.feature_names) + ["dup"], ds.class_names)
    r = relieff(dup)
    assert abs(r.scores[1] - r.scores[-1]) < 1e-9


def test_relieff_noise_does_not_displace_relevant():
    base = label_copy_dataset(60, 0, seed=4)
    rng = np.random.default_rng(0)
    more = Dataset(np.column_stack([base.features, rng.standard_normal((60, 6))]),
                   base.labels, [f"f{j}" for j in range(7)], base.class_names)
    assert relieff(base).order()[0] == 0
    assert relieff(more).order()[0] == 0


def test_relieff_small_class_warns():
    X = np.random.default_rng(0).normal(size=(14, 3))
    y = np.array([0] * 11 + [1] * 3)
    ds = Dataset(X, y, ["a", "b", "c"], ["x", "y"])
    with pytest.warns(RuntimeWarning, match="fewer neighbours"):
        r = relieff(ds, ReliefFParams(n_neighbors=10))
    assert np.all(np.isfinite(r.scores))


def test_relieff_sampling_deterministic():
    ds = three_class(60, 4)
    p = ReliefFParams(n_neighbors=3, sample_size=20, seed=5)
    assert np.array_equal(relieff(ds, p).scores, relieff(ds, p).scores)
    assert relieff(ds, p).metadata["n_reference"] == 20


# -- mutual information ------------------------------------------------------


def test_mi_label_copy_is_one_bit():
    ds = label_copy_dataset(60, 3, seed=0)
    mi = mutual_information(ds, 10)
    assert abs(mi.scores[0] - 1.0) < 1e-9
    assert mi.order()[0] == 0


def test_mi_matches_bruteforce():
    ds = three_class(90, 5, seed=6)
    mi = mutual_information(ds, 6)
    for j in range(ds.n_features):
        bins = equal_frequency_bins(ds.features[:, j], 6).tolist()
        assert mi.scores[j] == pytest.approx(mi_bruteforce(bins, ds.labels.tolist()), abs=1e-12)


def test_mi_constant_feature_zero():
    ds = Dataset(np.column_stack([np.full(20, 3.0), np.arange(20.0)]), np.arange(20) % 2,
                 ["c", "v"], ["x", "y"])
    assert mutual_information(ds).scores[0] == 0.0


def test_mi_independent_noise_small():
    for seed in range(20):
        rng = np.random.default_rng(seed)
        ds = Dataset(rng.standard_normal((1000, 1)), rng.permutation(np.arange(1000) % 2),
                     ["n"], ["x", "y"])
        assert mutual_information(ds, 10).scores[0] < 0.05


def test_mi_binning_collapses_ties():
    x = np.array([0.0] * 5 + [1.0] * 5)
    assert np.unique(equal_frequency_bins(x, 10)).size == 2
    with pytest.raises(ValueError):
        mutual_information(label_copy_dataset(), 1)


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), bins=st.integers(2, 12))
def test_mi_permutation_invariant_and_duplicate_exact(seed, bins):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(50, 3))
    X = np.column_stack([X, X[:, 0]])
    y = np.arange(50) % 3
    ds = Dataset(X, y, list("abcd"), ["p", "q", "r"])
    perm = rng.permutation(50)
    mi = mutual_information(ds, bins).scores
    mi_perm = mutual_information(ds.subset(perm), bins).scores
    assert np.array_equal(mi, mi_perm)
    assert mi[0] == mi[3]


# -- random forest -----------------------------------------------------------


def test_forest_label_copy_ranks_first():
    ds = label_copy_dataset(60, 4, seed=2)
    r = random_forest_importance(ds, ForestParams(n_trees=50, seed=0))
    assert r.order()[0] == 0
    assert r.scores[0] > np.max(r.scores[1:])
    assert r.method == "random_forest"


def test_forest_impurity_definition_single_stump():
    # one split on a pure 2-class problem removes the root Gini of 0.5 entirely
    X = np.array([[0.0], [0.0], [1.0], [1.0]])
    ds = Dataset(X, [0, 0, 1, 1], ["a"], ["x", "y"])
    trees = fit_forest(ds, ForestParams(n_trees=1, seed=3))
    boot_labels = trees[0].tree_.value[0]
    r = random_forest_importance(ds, ForestParams(n_trees=1, seed=3))
    p = boot_labels[0] / boot_labels[0].sum()
    assert r.scores[0] == pytest.approx(1.0 - np.sum(p * p), abs=1e-12)


def test_forest_constant_feature_zero():
    ds = Dataset(np.full((10, 1), 2.0), np.arange(10) % 2, ["c"], ["x", "y"])
    assert np.all(random_forest_importance(ds, ForestParams(n_trees=5)).scores == 0)


def test_forest_deterministic():
    ds = three_class(60, 5)
    p = ForestParams(n_trees=10, seed=4)
    assert np.array_equal(random_forest_importance(ds, p).scores,
                          random_forest_importance(ds, p).scores)


def test_forest_duplicate_columns_equal_in_expectation():
    base = three_class(80, 3, seed=1)
    X = np.column_stack([base.features, base.features[:, 0]])
    ds = Dataset(X, base.labels, ["a", "b", "c", "dup"], base.class_names)
    a, d = [], []
    for seed in range(20):
        s = random_forest_importance(ds, ForestParams(n_trees=20, seed=seed)).scores
        a.append(s[0])
        d.append(s[3])
    assert abs(np.mean(a) - np.mean(d)) < 0.1 * np.mean(a + d)


def test_predict_forest_contracts():
    ds = blobs(100, seed=3)
    assert np.mean(predict_forest(ds, ForestParams(n_trees=15), ds) == ds.labels) > 0.95
    one = fit_forest(ds, ForestParams(n_trees=1, seed=2))
    assert np.array_equal(forest_vote(one, ds.features, 2), one[0].predict(ds.features))
    single = ds.subset(np.flatnonzero(ds.labels == 1))
    preds = predict_forest(single, ForestParams(n_trees=3), ds)
    assert np.all(preds == 1)
    with pytest.raises(ValueError):
        predict_forest(ds, ForestParams(n_trees=2), three_class())


def test_forest_params_validation():
    with pytest.raises(ValueError):
        ForestParams(n_trees=0)
    assert ForestParams().max_features(100) == 10
    assert ForestParams(max_features_per_split=3).max_features(2) == 2
