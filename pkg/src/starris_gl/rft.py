"""Relevant feature test: rank features by their best single-threshold split of a regression target."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted


@dataclass(frozen=True)
class RftScore:
    feature: int
    loss: float
    threshold: float
    unsplittable: bool = False


def _unit_positions(z: np.ndarray):
    """Feature rescaled to [0, 1]; comparisons there make the score affine invariant."""
    lo, hi = z.min(axis=0), z.max(axis=0)
    span = hi - lo
    safe = np.where(span > 0, span, 1.0)
    return (z - lo) / safe, lo, span


def split_losses(Z: np.ndarray, Y: np.ndarray, n_thresholds: int = 16):
    """Weighted MSE of every (feature, threshold, target) split.

    Thresholds sit at ``lo + span * b / (B + 1)`` for ``b = 1..B``; a sample
    goes left when its value is below the threshold. Returns ``loss`` with
    shape ``(F, B, D)`` (NaN where one side is empty) plus ``lo`` and ``span``
    per feature.
    """
    n = Z.shape[0]
    U, lo, span = _unit_positions(Z)
    cuts = np.arange(1, n_thresholds + 1) / (n_thresholds + 1)
    y1, y2 = Y, Y**2
    tot1, tot2 = y1.sum(axis=0), y2.sum(axis=0)
    out = np.empty((Z.shape[1], n_thresholds, Y.shape[1]))
    for f in range(Z.shape[1]):
        left = (U[:, f][:, None] < cuts[None, :]).astype(float)  # n x B
        n_l = left.sum(axis=0)[:, None]
        n_r = n - n_l
        s1, s2 = left.T @ y1, left.T @ y2
        with np.errstate(invalid="ignore", divide="ignore"):
            sse_l = s2 - s1**2 / n_l
            sse_r = (tot2 - s2) - (tot1 - s1) ** 2 / n_r
        loss = (np.clip(sse_l, 0, None) + np.clip(sse_r, 0, None)) / n
        loss[(n_l[:, 0] == 0) | (n_r[:, 0] == 0)] = np.nan
        out[f] = loss
    return out, lo, span


def rft_score(z, y, n_thresholds: int = 16, feature: int = 0) -> RftScore:
    z = np.asarray(z, dtype=float)
    y = np.asarray(y, dtype=float)
    if z.shape != y.shape or z.ndim != 1 or len(z) < 2:
        raise ValueError("z and y must be 1-D of equal length >= 2")
    if n_thresholds < 1:
        raise ValueError("n_thresholds must be >= 1")
    var = float(np.mean((y - y.mean()) ** 2))
    if z.max() == z.min():
        return RftScore(feature, var, float(z[0]), unsplittable=True)
    losses, lo, span = split_losses(z[:, None], y[:, None], n_thresholds)
    losses = losses[0, :, 0]
    if np.all(np.isnan(losses)):
        return RftScore(feature, var, float(z[0]), unsplittable=True)
    b = int(np.nanargmin(losses))
    t = lo[0] + span[0] * (b + 1) / (n_thresholds + 1)
    return RftScore(feature, min(float(losses[b]), var), float(t))


def rft_losses(X: np.ndarray, Y: np.ndarray, n_thresholds: int = 16) -> np.ndarray:
    """Minimal split loss per (feature, target); constant features score the target variance."""
    losses, _, span = split_losses(X, Y, n_thresholds)
    var = np.mean((Y - Y.mean(axis=0)) ** 2, axis=0)
    with np.errstate(invalid="ignore"):
        best = np.nanmin(np.where(np.isnan(losses), np.inf, losses), axis=1)
    best = np.minimum(best, var[None, :])
    best[span == 0] = var
    return best  # F x D


class RFTSelector(TransformerMixin, BaseEstimator):
    """Keep the ``n_select`` lowest-loss features for every target column.

    After fitting, ``selected_[d]`` lists the chosen feature indices for
    target ``d`` in ascending loss order (ties by feature index).
    ``transform`` returns the gathered features with shape
    ``(n_samples, n_targets, n_select)``.
    """

    def __init__(self, n_thresholds=16, n_select=256, shared=False):
        self.n_thresholds = n_thresholds
        self.n_select = n_select
        self.shared = shared

    def fit(self, X, Y):
        X = check_array(X, dtype=float)
        Y = np.asarray(Y, dtype=float)
        if Y.ndim == 1:
            Y = Y[:, None]
        if len(Y) != len(X):
            raise ValueError("X and Y have different sample counts")
        n_feat = X.shape[1]
        k = min(self.n_select, n_feat)
        self.losses_ = rft_losses(X, Y, self.n_thresholds)
        if self.shared:
            ranks = np.argsort(np.argsort(self.losses_, axis=0, kind="stable"), axis=0, kind="stable")
            order = np.lexsort((np.arange(n_feat), ranks.mean(axis=1)))[:k]
            self.selected_ = np.tile(order, (Y.shape[1], 1))
        else:
            # stable sort on loss keeps lower feature indices first on ties
            self.selected_ = np.argsort(self.losses_, axis=0, kind="stable")[:k].T.copy()
        self.n_features_in_ = n_feat
        return self

    def transform(self, X):
        check_is_fitted(self, "selected_")
        X = check_array(X, dtype=float)
        return X[:, self.selected_]
