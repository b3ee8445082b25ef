"""Random forest of unpruned CART trees with Gini splits."""
from __future__ import annotations

import numpy as np
from numba import njit

from ..validation import check_matrix
from ._base import FallClassifier

LEAF = -1


@njit(cache=True)
def _grow_tree(X, y, mtry, seed, feature, threshold, left, right, value):
    """Grow one tree on a bootstrap sample; returns the node count.

    Node arrays are written in place. ``value`` holds the tree's vote for a
    leaf: 1 (faller majority), 0, or 0.5 on an exact tie.
    """
    np.random.seed(seed)
    n, p = X.shape
    samples = np.empty(n, dtype=np.int64)
    for k in range(n):
        samples[k] = np.random.randint(0, n)

    # explicit stack of (start, end, node)
    stack_start = np.empty(2 * n + 1, dtype=np.int64)
    stack_end = np.empty(2 * n + 1, dtype=np.int64)
    stack_node = np.empty(2 * n + 1, dtype=np.int64)
    top = 0
    stack_start[0] = 0
    stack_end[0] = n
    stack_node[0] = 0
    top = 1
    n_nodes = 1
    order = np.arange(p)
    vals = np.empty(n)
    labs = np.empty(n, dtype=np.int64)

    while top > 0:
        top -= 1
        s = stack_start[top]
        e = stack_end[top]
        node = stack_node[top]
        m = e - s
        pos = 0
        for k in range(s, e):
            pos += y[samples[k]]
        feature[node] = LEAF
        left[node] = LEAF
        right[node] = LEAF
        if 2 * pos > m:
            value[node] = 1.0
        elif 2 * pos < m:
            value[node] = 0.0
        else:
            value[node] = 0.5
        if pos == 0 or pos == m:
            continue

        # shuffle feature order, inspect until mtry non-constant features seen
        for k in range(p - 1, 0, -1):
            r = np.random.randint(0, k + 1)
            tmp = order[k]
            order[k] = order[r]
            order[r] = tmp
        best_imp = np.inf
        best_f = -1
        best_thr = 0.0
        usable = 0
        for oi in range(p):
            if usable >= mtry:
                break
            f = order[oi]
            for k in range(m):
                vals[k] = X[samples[s + k], f]
            idx = np.argsort(vals[:m], kind="mergesort")
            if vals[idx[0]] == vals[idx[m - 1]]:
                continue
            usable += 1
            for k in range(m):
                labs[k] = y[samples[s + idx[k]]]
            left_pos = 0
            for k in range(m - 1):
                left_pos += labs[k]
                a = vals[idx[k]]
                b = vals[idx[k + 1]]
                if a == b:
                    continue
                nl = k + 1
                nr = m - nl
                right_pos = pos - left_pos
                # weighted Gini: n_l * gini_l + n_r * gini_r
                imp = (
                    nl - (left_pos * left_pos + (nl - left_pos) * (nl - left_pos)) / nl
                    + nr - (right_pos * right_pos + (nr - right_pos) * (nr - right_pos)) / nr
                )
                if imp < best_imp:
                    best_imp = imp
                    best_f = f
                    thr = 0.5 * (a + b)
                    if thr >= b:
                        thr = a
                    best_thr = thr
        if best_f < 0:
            continue

        # partition samples[s:e] by x <= thr
        i = s
        j = e - 1
        while i <= j:
            if X[samples[i], best_f] <= best_thr:
                i += 1
            else:
                tmp = samples[i]
                samples[i] = samples[j]
                samples[j] = tmp
                j -= 1
        feature[node] = best_f
        threshold[node] = best_thr
        lnode = n_nodes
        rnode = n_nodes + 1
        n_nodes += 2
        left[node] = lnode
        right[node] = rnode
        stack_start[top] = s
        stack_end[top] = i
        stack_node[top] = lnode
        top += 1
        stack_start[top] = i
        stack_end[top] = e
        stack_node[top] = rnode
        top += 1
    return n_nodes


@njit(cache=True)
def _grow_forest(X, y, mtry, seeds):
    n = X.shape[0]
    ntree = seeds.shape[0]
    max_nodes = 2 * n + 1
    feature = np.full((ntree, max_nodes), LEAF, dtype=np.int64)
    threshold = np.zeros((ntree, max_nodes))
    left = np.zeros((ntree, max_nodes), dtype=np.int64)
    right = np.zeros((ntree, max_nodes), dtype=np.int64)
    value = np.zeros((ntree, max_nodes))
    sizes = np.empty(ntree, dtype=np.int64)
    for t in range(ntree):
        sizes[t] = _grow_tree(
            X, y, mtry, seeds[t], feature[t], threshold[t], left[t], right[t], value[t]
        )
    return feature, threshold, left, right, value, sizes


@njit(cache=True)
def _tree_votes(X, feature, threshold, left, right, value):
    n = X.shape[0]
    ntree = feature.shape[0]
    votes = np.empty((n, ntree))
    for t in range(ntree):
        for r in range(n):
            node = 0
            while feature[t, node] != LEAF:
                if X[r, feature[t, node]] <= threshold[t, node]:
                    node = left[t, node]
                else:
                    node = right[t, node]
            votes[r, t] = value[t, node]
    return votes


def tree_seeds(seed: int, ntree: int) -> np.ndarray:
    """Per-tree seeds; the first k seeds do not depend on ``ntree``."""
    state = np.random.SeedSequence(int(seed)).generate_state(int(ntree))
    return state.astype(np.int64)


class RandomForest(FallClassifier):
    """Bagged CART trees grown to purity; the score is the faller vote share.

    ``max_features`` defaults to floor(sqrt(p)). Tree ``t`` depends only on
    ``(random_state, t)``, so a forest of k trees is exactly the first k
    trees of any larger forest with the same seed.
    """

    def __init__(self, ntree=500, max_features=None, random_state=0):
        self.ntree = ntree
        self.max_features = max_features
        self.random_state = random_state

    def _fit(self, X, y):
        p = X.shape[1]
        mtry = self.max_features or max(1, int(np.floor(np.sqrt(p))))
        seeds = tree_seeds(self.random_state, self.ntree)
        arrays = _grow_forest(np.ascontiguousarray(X), y.astype(np.int64), int(mtry), seeds)
        feature, threshold, left, right, value, sizes = arrays
        width = int(sizes.max())
        self.tree_feature_ = feature[:, :width]
        self.tree_threshold_ = threshold[:, :width]
        self.tree_left_ = left[:, :width]
        self.tree_right_ = right[:, :width]
        self.tree_value_ = value[:, :width]
        self.tree_sizes_ = sizes
        self.max_features_ = int(mtry)
        return self

    def tree_votes(self, X) -> np.ndarray:
        """(n_samples, ntree) matrix of per-tree votes."""
        X = check_matrix(X, self.n_features_in_)
        return _tree_votes(
            np.ascontiguousarray(X),
            self.tree_feature_,
            self.tree_threshold_,
            self.tree_left_,
            self.tree_right_,
            self.tree_value_,
        )

    def prefix_scores(self, X, ntrees) -> dict[int, np.ndarray]:
        """Scores of the sub-forests made of the first k trees, for each k."""
        votes = self.tree_votes(X)
        csum = np.cumsum(votes, axis=1)
        return {int(k): csum[:, int(k) - 1] / int(k) for k in ntrees}

    def _fall_score(self, X):
        return self.tree_votes(X).mean(axis=1)
