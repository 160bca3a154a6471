"""Four-stage Saab transform over the received pilot tensor.

Each stage works on 1-D fibres along one tensor axis and projects them onto
a DC anchor (the normalised all-ones vector) and AC anchors obtained by PCA
of the DC-removed fibres. Stages run antenna -> amplitude -> phase -> pilot.
The antenna stage sees real and imaginary parts stacked, so its fibres have
length ``2M``.

The output feature of a sample is the coefficient tensor with axes
``(pilot comp., phase comp., amplitude comp., antenna comp.)`` flattened in
C order, i.e. the stage-4 component index varies slowest.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

# axis of the real tensor (2M, N_p, N, K) handled by each stage
STAGE_AXES = (("antenna", 0), ("amplitude", 3), ("phase", 2), ("pilot", 1))


@dataclass
class SaabStage:
    axis: str
    patch_len: int
    ac_anchors: np.ndarray  # patch_len x n_ac, orthonormal, orthogonal to DC
    energies: np.ndarray  # variance of each kept AC coefficient, non-increasing
    all_energies: np.ndarray  # every AC eigenvalue at fit time
    bias: float
    threshold: float
    degenerate: bool = False

    @property
    def dc_anchor(self) -> np.ndarray:
        return np.full(self.patch_len, 1.0 / np.sqrt(self.patch_len))

    @property
    def anchors(self) -> np.ndarray:
        """DC anchor followed by the AC anchors, as columns."""
        return np.column_stack([self.dc_anchor, self.ac_anchors])

    @property
    def n_out(self) -> int:
        return 1 + self.ac_anchors.shape[1]

    def project(self, patches: np.ndarray) -> np.ndarray:
        return patches @ self.anchors


def _dc_complement(d: int) -> np.ndarray:
    """Orthonormal basis (d x d-1) of the subspace orthogonal to the all-ones vector."""
    ones = np.ones((d, 1)) / np.sqrt(d)
    q, _ = np.linalg.qr(np.hstack([ones, np.eye(d)[:, : d - 1]]))
    return q[:, 1:]


def _fix_signs(vecs: np.ndarray) -> np.ndarray:
    idx = np.argmax(np.abs(vecs), axis=0)
    signs = np.sign(vecs[idx, np.arange(vecs.shape[1])])
    signs[signs == 0] = 1.0
    return vecs * signs


def fit_stage(patches: np.ndarray, threshold: float, axis: str) -> SaabStage:
    """Fit one stage on a ``(n_patches, d)`` matrix of fibres."""
    n, d = patches.shape
    bias = float(np.max(np.linalg.norm(patches, axis=1))) if n else 0.0
    if d == 1:
        return SaabStage(axis, d, np.zeros((1, 0)), np.zeros(0), np.zeros(0), bias, threshold)
    Q = _dc_complement(d)
    resid = patches @ Q  # DC removed, expressed in the complement basis
    resid = resid - resid.mean(axis=0)
    cov = resid.T @ resid / n
    vals, vecs = np.linalg.eigh(cov)
    order = np.argsort(vals)[::-1]
    vals = np.clip(vals[order], 0.0, None)
    vecs = vecs[:, order]
    total = vals.sum()
    scale = float(np.mean(np.sum(patches**2, axis=1)))
    # AC energy at round-off level relative to the patch energy counts as none
    if not total > 1e-20 * scale:
        return SaabStage(axis, d, np.zeros((d, 0)), np.zeros(0), vals, bias, threshold, degenerate=True)
    ratio = np.cumsum(vals) / total
    # tolerance guards tau = 1.0 against round-off in the cumulative sum
    m = int(np.searchsorted(ratio, threshold - 1e-12) + 1)
    m = min(m, d - 1)
    anchors = _fix_signs(Q @ vecs[:, :m])
    return SaabStage(axis, d, anchors, vals[:m], vals, bias, threshold)


def _fibres(x: np.ndarray, axis: int) -> tuple[np.ndarray, tuple]:
    """Move ``axis`` (counted after the sample axis) last and flatten the rest."""
    moved = np.moveaxis(x, axis + 1, -1)
    return moved.reshape(-1, moved.shape[-1]), moved.shape


def _unfibres(coef: np.ndarray, moved_shape: tuple, axis: int) -> np.ndarray:
    out = coef.reshape(moved_shape[:-1] + (coef.shape[-1],))
    return np.moveaxis(out, -1, axis + 1)


def to_real(tensors) -> np.ndarray:
    """Stack complex ``(n, M, N_p, N, K)`` tensors into real ``(n, 2M, N_p, N, K)``."""
    X = np.asarray(tensors)
    if np.iscomplexobj(X):
        X = np.concatenate([X.real, X.imag], axis=1)
    return np.asarray(X, dtype=float)


class SaabTransform(TransformerMixin, BaseEstimator):
    """Unsupervised subspace features for a batch of pilot tensors.

    Parameters
    ----------
    energy_threshold : float
        Fraction of AC energy each stage must keep, in (0, 1].
    bias_mode : {"none", "nonneg"}
        With ``"nonneg"`` each stage adds its bias to the DC coefficient so
        every DC output is non-negative. The default leaves coefficients
        linear in the input.
    """

    def __init__(self, energy_threshold=0.995, bias_mode="none"):
        self.energy_threshold = energy_threshold
        self.bias_mode = bias_mode

    def fit(self, X, y=None):
        X = to_real(X)
        if X.ndim != 5:
            raise ValueError(f"expected tensors of shape (n, M, N_p, N, K), got {X.shape}")
        if X.shape[0] < 2:
            raise ValueError("Saab needs at least 2 training tensors")
        if not 0 < self.energy_threshold <= 1:
            raise ValueError("energy_threshold must be in (0, 1]")
        self.input_shape_ = X.shape[1:]
        self.stages_ = []
        for name, axis in STAGE_AXES:
            patches, moved = _fibres(X, axis)
            stage = fit_stage(patches, self.energy_threshold, name)
            self.stages_.append(stage)
            X = _unfibres(self._project(stage, patches), moved, axis)
        self.n_features_out_ = int(np.prod(X.shape[1:]))
        self.degenerate_ = any(s.degenerate for s in self.stages_)
        return self

    def _project(self, stage: SaabStage, patches):
        coef = stage.project(patches)
        if self.bias_mode == "nonneg":
            coef[:, 0] += stage.bias
        return coef

    def transform_cube(self, X) -> np.ndarray:
        """Coefficient tensors ``(n, c_antenna, c_pilot, c_phase, c_amplitude)``."""
        check_is_fitted(self, "stages_")
        X = to_real(X)
        if X.shape[1:] != self.input_shape_:
            raise ValueError(f"tensor shape {X.shape[1:]} does not match fitted shape {self.input_shape_}")
        for stage, (_, axis) in zip(self.stages_, STAGE_AXES):
            patches, moved = _fibres(X, axis)
            X = _unfibres(self._project(stage, patches), moved, axis)
        return X

    def transform(self, X) -> np.ndarray:
        cube = self.transform_cube(X)
        # (n, ant, pilot, phase, amp) -> (n, pilot, phase, amp, ant)
        return np.ascontiguousarray(cube.transpose(0, 2, 3, 4, 1)).reshape(len(cube), -1)

    def inverse_transform(self, Z) -> np.ndarray:
        """Map features back to real tensors (exact when every AC component was kept)."""
        check_is_fitted(self, "stages_")
        c = [s.n_out for s in self.stages_]
        cube = np.asarray(Z, dtype=float).reshape(-1, c[3], c[2], c[1], c[0]).transpose(0, 4, 1, 2, 3)
        X = cube
        for stage, (_, axis) in reversed(list(zip(self.stages_, STAGE_AXES))):
            patches, moved = _fibres(X, axis)
            if self.bias_mode == "nonneg":
                patches = patches.copy()
                patches[:, 0] -= stage.bias
            X = _unfibres(patches @ stage.anchors.T, moved, axis)
        return X

    def stage_shapes(self) -> list[tuple[str, int, int]]:
        """``(axis, patch length, kept components)`` per stage."""
        check_is_fitted(self, "stages_")
        return [(s.axis, s.patch_len, s.n_out) for s in self.stages_]
