"""Second-order gradient-boosted regression trees for squared error.

With squared loss every hessian is 1, so a node's hessian sum is its sample
count. Splits are exact greedy over midpoints between consecutive distinct
feature values. A sample goes left when ``x[feature] < threshold``.

Row subsampling picks the rows that shape each tree; leaf weights are then
recomputed from every training row that lands in the leaf. That keeps the
full training loss non-increasing from one round to the next.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils import check_random_state
from sklearn.utils.validation import check_array, check_is_fitted


@dataclass
class Tree:
    """Pre-order node arrays. ``feature == -1`` marks a leaf."""

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray
    gain: np.ndarray

    @property
    def depth(self) -> int:
        depth = np.zeros(len(self.feature), dtype=int)
        for i in range(len(self.feature)):
            if self.feature[i] >= 0:
                depth[self.left[i]] = depth[self.right[i]] = depth[i] + 1
        return int(depth.max())

    @property
    def n_leaves(self) -> int:
        return int(np.sum(self.feature < 0))

    def apply(self, X: np.ndarray) -> np.ndarray:
        node = np.zeros(len(X), dtype=np.intp)
        rows = np.arange(len(X))
        while True:
            feat = self.feature[node]
            inner = feat >= 0
            if not inner.any():
                return node
            go_left = X[rows, np.where(inner, feat, 0)] < self.threshold[node]
            nxt = np.where(go_left, self.left[node], self.right[node])
            node = np.where(inner, nxt, node)


@njit(cache=True)
def _scan_splits(X, g, ST, cols, lam, gamma, mcw):
    """Best (column, position, gain) over all split points of a node.

    ``ST[j]`` lists the node's rows sorted by feature ``cols[j]``. Ties keep
    the lowest column, then the lowest position.
    """
    fc, n = ST.shape
    g_tot = 0.0
    for p in range(n):
        g_tot += g[ST[0, p]]
    parent = g_tot * g_tot / (n + lam)
    best_j, best_p, best_gain = -1, -1, 0.0
    for j in range(fc):
        c = cols[j]
        g_left = 0.0
        for p in range(n - 1):
            r = ST[j, p]
            g_left += g[r]
            h_left = p + 1.0
            h_right = n - h_left
            if h_left < mcw or h_right < mcw:
                continue
            if X[r, c] < X[ST[j, p + 1], c]:
                g_right = g_tot - g_left
                gain = 0.5 * (g_left * g_left / (h_left + lam)
                              + g_right * g_right / (h_right + lam) - parent) - gamma
                if gain > best_gain:
                    best_j, best_p, best_gain = j, p, gain
    return best_j, best_p, best_gain


@njit(cache=True)
def _partition(ST, go_left):
    """Stable split of every sorted row list by the per-row ``go_left`` flag."""
    fc, n = ST.shape
    n_left = 0
    for p in range(n):
        if go_left[ST[0, p]]:
            n_left += 1
    left = np.empty((fc, n_left), dtype=ST.dtype)
    right = np.empty((fc, n - n_left), dtype=ST.dtype)
    for j in range(fc):
        a = 0
        b = 0
        for p in range(n):
            r = ST[j, p]
            if go_left[r]:
                left[j, a] = r
                a += 1
            else:
                right[j, b] = r
                b += 1
    return left, right


@njit(cache=True)
def _gather_rows(order, cols, keep, n_keep):
    """Sorted row lists of the chosen columns restricted to rows with ``keep``."""
    out = np.empty((len(cols), n_keep), dtype=order.dtype)
    for j in range(len(cols)):
        c = cols[j]
        a = 0
        for p in range(order.shape[0]):
            r = order[p, c]
            if keep[r]:
                out[j, a] = r
                a += 1
    return out


class _Builder:
    """Grows one tree on presorted row lists; nodes are emitted in pre-order."""

    def __init__(self, X, g, cols, max_depth, reg_lambda, gamma, min_child_weight):
        self.X, self.g, self.cols = X, g, cols
        self.max_depth = max_depth
        self.lam, self.gamma, self.mcw = float(reg_lambda), float(gamma), float(min_child_weight)
        self.go_left = np.zeros(len(X), dtype=np.bool_)
        self.nodes = []

    def grow(self, ST, depth):
        idx = len(self.nodes)
        j = -1
        if depth < self.max_depth and ST.shape[1] >= 2:
            j, p, gain = _scan_splits(self.X, self.g, ST, self.cols, self.lam, self.gamma, self.mcw)
        if j < 0:
            self.nodes.append([-1, 0.0, -1, -1, 0.0, 0.0])
            return idx
        c = self.cols[j]
        lo, hi = self.X[ST[j, p], c], self.X[ST[j, p + 1], c]
        thr = 0.5 * (lo + hi)
        if not lo < thr:
            thr = hi
        self.nodes.append([c, thr, -1, -1, 0.0, gain])
        rows = ST[0]
        self.go_left[rows] = self.X[rows, c] < thr
        left, right = _partition(ST, self.go_left)
        self.nodes[idx][2] = self.grow(left, depth + 1)
        self.nodes[idx][3] = self.grow(right, depth + 1)
        return idx

    def tree(self) -> Tree:
        a = np.array(self.nodes, dtype=float).reshape(-1, 6)
        return Tree(a[:, 0].astype(np.intp), a[:, 1], a[:, 2].astype(np.intp),
                    a[:, 3].astype(np.intp), a[:, 4], a[:, 5])


class GBDTRegressor(RegressorMixin, BaseEstimator):
    """Boosted regression trees with second-order split gain.

    Parameters
    ----------
    n_estimators : int
        Boosting rounds.
    max_depth : int
        Maximum tree depth (0 gives single-leaf trees).
    learning_rate : float
        Shrinkage applied to every tree's output.
    reg_lambda, gamma : float
        L2 penalty on leaf weights and minimum gain per split.
    subsample, colsample : float
        Fraction of rows / features drawn (without replacement) per tree.
    """

    def __init__(self, n_estimators=200, max_depth=4, learning_rate=0.1, reg_lambda=1.0, gamma=0.0,
                 subsample=0.8, colsample=0.8, min_child_weight=1.0, random_state=0):
        self.n_estimators = n_estimators
        self.max_depth = max_depth
        self.learning_rate = learning_rate
        self.reg_lambda = reg_lambda
        self.gamma = gamma
        self.subsample = subsample
        self.colsample = colsample
        self.min_child_weight = min_child_weight
        self.random_state = random_state

    def fit(self, X, y, order=None):
        """Fit on ``X``; ``order`` may pass a precomputed ``argsort(X, axis=0)``."""
        X = np.ascontiguousarray(check_array(X, dtype=float))
        y = np.asarray(y, dtype=float).ravel()
        if len(y) != len(X):
            raise ValueError("X and y have different lengths")
        if len(y) < 2:
            raise ValueError("need at least 2 samples")
        if not np.all(np.isfinite(y)):
            raise ValueError("target contains non-finite values")
        n, F = X.shape
        rng = check_random_state(self.random_state)
        if order is None:
            order = np.argsort(X, axis=0, kind="stable")
        order = np.asarray(order, dtype=np.intp)
        n_rows = max(2, int(round(self.subsample * n)))
        n_cols = max(1, int(round(self.colsample * F)))

        self.base_score_ = float(np.mean(y))
        pred = np.full(n, self.base_score_)
        self.trees_ = []
        self.train_loss_ = [float(np.mean((pred - y) ** 2))]
        for _ in range(self.n_estimators):
            g = pred - y
            if n_rows < n:
                inbag = np.zeros(n, dtype=bool)
                inbag[rng.choice(n, n_rows, replace=False)] = True
            else:
                inbag = np.ones(n, dtype=bool)
            cols = np.sort(rng.choice(F, n_cols, replace=False)) if n_cols < F else np.arange(F)
            cols = cols.astype(np.intp)
            ST = _gather_rows(order, cols, inbag, n_rows)
            builder = _Builder(X, g, cols, self.max_depth, self.reg_lambda, self.gamma,
                               self.min_child_weight)
            builder.grow(ST, 0)
            tree = builder.tree()
            leaf = tree.apply(X)
            G = np.bincount(leaf, weights=g, minlength=len(tree.feature))
            H = np.bincount(leaf, minlength=len(tree.feature)).astype(float)
            denom = H + self.reg_lambda
            # a leaf reached by no row keeps weight 0
            value = np.divide(-G, denom, out=np.zeros_like(G), where=(tree.feature < 0) & (denom > 0))
            tree.value = value
            pred = pred + self.learning_rate * value[leaf]
            self.trees_.append(tree)
            self.train_loss_.append(float(np.mean((pred - y) ** 2)))
        self.n_features_in_ = F
        self._fit_pred = pred
        return self

    def predict(self, X):
        check_is_fitted(self, "trees_")
        X = check_array(X, dtype=float)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(f"expected {self.n_features_in_} features, got {X.shape[1]}")
        pred = np.full(len(X), self.base_score_)
        for tree in self.trees_:
            pred = pred + self.learning_rate * tree.value[tree.apply(X)]
        return pred

    def predict_one(self, x) -> float:
        """Single-sample traversal; same arithmetic order as :meth:`predict`."""
        check_is_fitted(self, "trees_")
        x = np.asarray(x, dtype=float)
        if x.shape != (self.n_features_in_,):
            raise ValueError(f"expected a vector of {self.n_features_in_} features, got shape {x.shape}")
        out = self.base_score_
        for tree in self.trees_:
            i = 0
            while tree.feature[i] >= 0:
                i = tree.left[i] if x[tree.feature[i]] < tree.threshold[i] else tree.right[i]
            out = out + self.learning_rate * tree.value[i]
        return float(out)

    def flops(self) -> int:
        check_is_fitted(self, "trees_")
        return gbdt_flops(len(self.trees_), self.max_depth)


def gbdt_flops(n_trees: int, max_depth: int) -> int:
    """Worst-case FLOPs per prediction: one comparison per level per tree,
    one multiply-add (2 FLOPs) per tree and one add for the base score."""
    return n_trees * max_depth + 2 * n_trees + 1
