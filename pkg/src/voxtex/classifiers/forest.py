"""Random forest of Gini CART trees with bootstrap resampling."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

FOREST_TREES = (16, 32, 64)
MAX_DEPTH = 16
# Impurity decreases at or below this are treated as no decrease.
MIN_DECREASE = 1e-12
TIE_TOLERANCE = 1e-12


@dataclass(frozen=True)
class ForestHyperparams:
    n_trees: int = 64
    rng_seed: int = 0
    max_depth: int = MAX_DEPTH

    def __post_init__(self):
        if self.n_trees not in FOREST_TREES:
            raise ValueError(f"n_trees must be one of {FOREST_TREES}, got {self.n_trees}")
        if self.max_depth != MAX_DEPTH:
            raise ValueError(f"max_depth is fixed at {MAX_DEPTH}")


def features_per_split(n_features: int) -> int:
    return max(1, math.isqrt(n_features))


def gini_impurity(class_counts) -> float:
    c = np.asarray(class_counts, dtype=np.float64)
    total = c.sum()
    if total <= 0:
        raise ValueError("gini impurity of an empty node is undefined")
    p = c / total
    return float(1.0 - np.dot(p, p))


@dataclass(frozen=True)
class Split:
    feature: int
    threshold: float
    decrease: float


def best_split(rows: np.ndarray, labels: np.ndarray, candidate_features,
               n_classes: int | None = None) -> Split | None:
    """Best midpoint split by weighted Gini decrease over ``candidate_features``.

    Ties go to the lowest feature index, then the lowest threshold. Returns
    ``None`` when no split lowers the impurity.
    """
    n = len(labels)
    if n < 2:
        return None
    n_classes = n_classes or int(labels.max()) + 1
    parent = np.bincount(labels, minlength=n_classes).astype(np.float64)
    parent_gini = 1.0 - np.dot(parent, parent) / (n * n)
    if parent_gini <= 0.0:
        return None
    onehot = np.eye(n_classes, dtype=np.float64)
    n_left = np.arange(1, n, dtype=np.float64)
    n_right = n - n_left
    best = None
    for f in sorted(int(c) for c in candidate_features):
        col = rows[:, f]
        order = np.argsort(col, kind="stable")
        xs = col[order]
        valid = xs[1:] > xs[:-1]
        if not valid.any():
            continue
        left = np.cumsum(onehot[labels[order]], axis=0)[:-1]
        right = parent - left
        sq_l = np.einsum("ij,ij->i", left, left) / n_left
        sq_r = np.einsum("ij,ij->i", right, right) / n_right
        # n * weighted child impurity = n - sq_l - sq_r
        decrease = parent_gini - (n - sq_l - sq_r) / n
        decrease[~valid] = -np.inf
        # equal decreases can differ by rounding; take the first within tolerance
        i = int(np.argmax(decrease >= decrease.max() - TIE_TOLERANCE))
        d = float(decrease[i])
        if d <= MIN_DECREASE:
            continue
        if best is None or d > best.decrease + TIE_TOLERANCE:
            lo, hi = float(xs[i]), float(xs[i + 1])
            thr = lo + (hi - lo) / 2.0
            if not lo <= thr < hi:
                thr = lo
            best = Split(f, thr, d)
    return best


@dataclass
class Tree:
    """Flat arrays; ``feature[i] == -1`` marks a leaf, rows go left when ``x <= threshold``."""

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray
    depth: np.ndarray

    @property
    def n_nodes(self) -> int:
        return len(self.feature)

    def apply(self, X: np.ndarray) -> np.ndarray:
        node = np.zeros(len(X), dtype=np.int64)
        active = np.nonzero(self.feature[node] >= 0)[0]
        while len(active):
            nd = node[active]
            f = self.feature[nd]
            go_left = X[active, f] <= self.threshold[nd]
            node[active] = np.where(go_left, self.left[nd], self.right[nd])
            active = active[self.feature[node[active]] >= 0]
        return node

    def predict_proba(self, X: np.ndarray) -> np.ndarray:
        return self.value[self.apply(X)]


def grow_tree(X: np.ndarray, y: np.ndarray, n_classes: int, max_features: int,
              max_depth: int, rng: np.random.Generator) -> Tree:
    n_features = X.shape[1]
    feature, threshold, left, right, value, depth = [], [], [], [], [], []

    def new_node(idx, d):
        counts = np.bincount(y[idx], minlength=n_classes).astype(np.float64)
        feature.append(-1)
        threshold.append(0.0)
        left.append(-1)
        right.append(-1)
        value.append(counts / counts.sum())
        depth.append(d)
        return len(feature) - 1

    stack = [(np.arange(len(y)), 0, new_node(np.arange(len(y)), 0))]
    while stack:
        idx, d, node = stack.pop()
        if d >= max_depth or len(idx) < 2:
            continue
        sub_X, sub_y = X[idx], y[idx]
        perm = rng.permutation(n_features)
        split = best_split(sub_X, sub_y, perm[:max_features], n_classes)
        if split is None and max_features < n_features:
            # keep looking past the sampled features before giving up on the node
            split = best_split(sub_X, sub_y, perm[max_features:], n_classes)
        if split is None:
            continue
        go_left = sub_X[:, split.feature] <= split.threshold
        li, ri = idx[go_left], idx[~go_left]
        feature[node] = split.feature
        threshold[node] = split.threshold
        left[node] = new_node(li, d + 1)
        right[node] = new_node(ri, d + 1)
        stack.append((ri, d + 1, right[node]))
        stack.append((li, d + 1, left[node]))
    return Tree(np.array(feature, dtype=np.int64), np.array(threshold, dtype=np.float64),
                np.array(left, dtype=np.int64), np.array(right, dtype=np.int64),
                np.array(value, dtype=np.float64).reshape(-1, n_classes),
                np.array(depth, dtype=np.int64))


def train_trees(X: np.ndarray, y: np.ndarray, n_classes: int, hp: ForestHyperparams,
                threads: int = 1) -> list[Tree]:
    """Grow ``hp.n_trees`` trees, each on its own bootstrap resample.

    Each tree draws from an independent child of the seed sequence, so the
    result does not depend on ``threads``.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    if len(y) == 0:
        raise ValueError("training set is empty")
    if len(np.unique(y)) < 2:
        raise ValueError("training set holds a single class")
    m = features_per_split(X.shape[1])
    seeds = np.random.SeedSequence(hp.rng_seed).spawn(hp.n_trees)

    def one(seed):
        rng = np.random.default_rng(seed)
        boot = rng.integers(0, len(y), len(y))
        return grow_tree(X[boot], y[boot], n_classes, m, hp.max_depth, rng)

    if threads > 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(threads) as pool:
            return list(pool.map(one, seeds))
    return [one(s) for s in seeds]


def forest_proba(trees: list[Tree], X: np.ndarray) -> np.ndarray:
    acc = trees[0].predict_proba(X).copy()
    for t in trees[1:]:
        acc += t.predict_proba(X)
    return acc / len(trees)
