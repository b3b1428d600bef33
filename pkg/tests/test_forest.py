import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from voxtex.classifiers.forest import (ForestHyperparams, best_split, features_per_split,
                                       gini_impurity, train_trees)
from voxtex.classifiers.forest import MAX_DEPTH, forest_proba, grow_tree


def exhaustive_split(rows, labels, candidates):
    """Oracle: try every midpoint of every candidate feature in a plain loop."""
    n = len(labels)
    parent = gini_impurity(np.bincount(labels))
    best = None
    for f in sorted(candidates):
        vals = np.unique(rows[:, f])
        for lo, hi in zip(vals[:-1], vals[1:]):
            thr = (lo + hi) / 2
            left, right = labels[rows[:, f] <= thr], labels[rows[:, f] > thr]
            child = (len(left) * gini_impurity(np.bincount(left)) +
                     len(right) * gini_impurity(np.bincount(right))) / n
            d = parent - child
            if d > 1e-12 and (best is None or d > best[2] + 1e-12):
                best = (f, thr, d)
    return best


class TestGini:
    @pytest.mark.parametrize("counts,expected", [((10, 0), 0.0), ((5, 5), 0.5),
                                                 ((1, 2, 3), 11 / 18)])
    def test_values(self, counts, expected):
        assert gini_impurity(counts) == pytest.approx(expected, abs=1e-15)

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            gini_impurity((0, 0))


class TestBestSplit:
    def test_simple(self):
        s = best_split(np.array([[0.0], [0.0], [1.0], [1.0]]), np.array([0, 0, 1, 1]), [0])
        assert s.feature == 0 and s.threshold == 0.5 and s.decrease == pytest.approx(0.5)

    def test_pure_node(self):
        assert best_split(np.array([[0.0], [1.0], [2.0]]), np.array([1, 1, 1]), [0]) is None

    def test_constant_column_never_chosen(self, rng):
        rows = np.column_stack([np.full(30, 3.0), rng.random(30)])
        labels = (rows[:, 1] > 0.5).astype(np.int64)
        assert best_split(rows, labels, [0, 1]).feature == 1
        assert best_split(rows, labels, [0]) is None

    def test_ties_prefer_lowest_feature(self):
        rows = np.array([[0.0, 0.0], [1.0, 1.0]])
        assert best_split(rows, np.array([0, 1]), [1, 0]).feature == 0

    @settings(max_examples=60, deadline=None)
    @given(st.integers(0, 2 ** 32 - 1), st.integers(2, 25), st.integers(1, 4), st.integers(2, 3))
    def test_matches_exhaustive_oracle(self, seed, n, nf, nc):
        rng = np.random.default_rng(seed)
        rows = rng.integers(0, 5, size=(n, nf)).astype(np.float64)
        labels = rng.integers(0, nc, n)
        got = best_split(rows, labels, range(nf), nc)
        ref = exhaustive_split(rows, labels, range(nf))
        if ref is None:
            assert got is None
        else:
            assert (got.feature, got.threshold) == ref[:2]
            assert got.decrease == pytest.approx(ref[2], abs=1e-12)


def blobs(rng, n=200, d=5, gap=4.0):
    y = np.repeat([0, 1], n // 2)
    X = rng.normal(size=(n, d)) + gap * y[:, None]
    return X, y


class TestForest:
    def test_hyperparams(self):
        with pytest.raises(ValueError):
            ForestHyperparams(n_trees=10)
        with pytest.raises(ValueError):
            ForestHyperparams(max_depth=8)
        assert features_per_split(47) == 6 and features_per_split(95) == 9

    def test_separable_blobs(self, rng):
        X, y = blobs(rng)
        Xt, yt = blobs(np.random.default_rng(99))
        trees = train_trees(X, y, 2, ForestHyperparams(16, rng_seed=1))
        acc = np.mean(np.argmax(forest_proba(trees, Xt), axis=1) == yt)
        assert acc >= 0.95

    def test_depth_bounded(self, rng):
        X = rng.random((600, 3))
        y = rng.integers(0, 4, 600)  # noise labels force deep trees
        for t in train_trees(X, y, 4, ForestHyperparams(16)):
            assert t.depth.max() <= MAX_DEPTH
        assert max(t.depth.max() for t in train_trees(X, y, 4, ForestHyperparams(16))) == MAX_DEPTH

    def test_deterministic_and_thread_independent(self, rng):
        X, y = blobs(rng, 120)
        a = train_trees(X, y, 2, ForestHyperparams(16, rng_seed=5))
        b = train_trees(X, y, 2, ForestHyperparams(16, rng_seed=5), threads=4)
        for ta, tb in zip(a, b):
            assert np.array_equal(ta.feature, tb.feature)
            assert np.array_equal(ta.threshold, tb.threshold)

    def test_leaves_normalised(self, rng):
        X, y = blobs(rng, 60)
        for t in train_trees(X, y, 2, ForestHyperparams(16)):
            assert np.allclose(t.value.sum(axis=1), 1)

    def test_single_tree_pure_leaf(self, rng):
        # Grown on the full set (no bootstrap), every distinct training point
        # ends in a pure leaf of its own label.
        X = rng.random((40, 3))
        y = rng.integers(0, 3, 40)
        t = grow_tree(X, y, 3, 1, MAX_DEPTH, np.random.default_rng(0))
        probs = forest_proba([t], X)
        assert np.array_equal(probs, np.eye(3)[y])

    def test_rejects_bad_training_sets(self):
        with pytest.raises(ValueError):
            train_trees(np.zeros((0, 2)), np.zeros(0, np.int64), 2, ForestHyperparams(16))
        with pytest.raises(ValueError):
            train_trees(np.zeros((3, 2)), np.zeros(3, np.int64), 2, ForestHyperparams(16))

    def test_uses_sqrt_feature_sampling(self, rng):
        # One informative column among 16: some roots must pick other features
        # first only if sampling is restricted, so the root feature varies.
        X = rng.random((200, 16))
        y = (X[:, 0] + 0.3 * X[:, 5] > 0.6).astype(np.int64)
        roots = {int(t.feature[0]) for t in train_trees(X, y, 2, ForestHyperparams(32))}
        assert len(roots) > 1
