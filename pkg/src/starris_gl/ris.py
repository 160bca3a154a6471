"""STAR-RIS element responses under energy splitting, DFT phase codebooks and amplitude grids."""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

TWO_PI = 2.0 * np.pi


class ConstraintError(ValueError):
    """A STAR-RIS configuration violates the amplitude/phase constraints."""


def wrap_phase(theta) -> np.ndarray:
    """Map phases into ``[0, 2*pi)``."""
    out = np.mod(np.asarray(theta, dtype=float), TWO_PI)
    # mod can return exactly 2*pi for tiny negative inputs
    return np.where(out >= TWO_PI, 0.0, out)


@dataclass(frozen=True)
class StarRisConfig:
    """Per-element phases (radians) and amplitudes of both sides of the surface."""

    theta_r: np.ndarray
    theta_t: np.ndarray
    alpha_r: np.ndarray
    alpha_t: np.ndarray

    @classmethod
    def from_split(cls, theta_r, theta_t, alpha_r) -> "StarRisConfig":
        """Build a config whose transmit amplitudes follow ``alpha_t = sqrt(1 - alpha_r**2)``."""
        alpha_r = np.asarray(alpha_r, dtype=float)
        alpha_t = np.sqrt(np.clip(1.0 - alpha_r**2, 0.0, None))
        return cls(wrap_phase(theta_r), wrap_phase(theta_t), alpha_r, alpha_t)

    @property
    def n_elements(self) -> int:
        return len(self.theta_r)

    def side(self, side: str) -> tuple[np.ndarray, np.ndarray]:
        if side == "r":
            return self.alpha_r, self.theta_r
        if side == "t":
            return self.alpha_t, self.theta_t
        raise ValueError(f"side must be 'r' or 't', got {side!r}")

    def coefficients(self, side: str) -> np.ndarray:
        """Diagonal of the side's response matrix, ``alpha * exp(j theta)``."""
        alpha, theta = self.side(side)
        return alpha * np.exp(1j * theta)

    def validate(self, side: str | None = None, tol: float = 1e-9) -> None:
        sides = ("r", "t") if side is None else (side,)
        split = self.alpha_r**2 + self.alpha_t**2
        bad = np.flatnonzero(np.abs(split - 1.0) > tol)
        if bad.size:
            n = int(bad[0])
            raise ConstraintError(
                f"element {n}: alpha_r^2 + alpha_t^2 = {split[n]:.12g}, expected 1"
            )
        for s in sides:
            alpha, theta = self.side(s)
            bad = np.flatnonzero(~((alpha > 0) & (alpha <= 1.0 + tol)))
            if bad.size:
                n = int(bad[0])
                raise ConstraintError(f"element {n}: alpha_{s} = {alpha[n]!r} outside (0, 1]")
            bad = np.flatnonzero(~((theta >= 0) & (theta < TWO_PI)))
            if bad.size:
                n = int(bad[0])
                raise ConstraintError(f"element {n}: theta_{s} = {theta[n]!r} outside [0, 2pi)")


def phi_matrix(config: StarRisConfig, side: str) -> np.ndarray:
    config.validate(side)
    return np.diag(config.coefficients(side))


def config_from_phi(phi_r: np.ndarray, phi_t: np.ndarray) -> StarRisConfig:
    """Recover amplitudes and phases from the two diagonal response matrices."""
    d_r, d_t = np.diag(phi_r), np.diag(phi_t)
    return StarRisConfig(wrap_phase(np.angle(d_r)), wrap_phase(np.angle(d_t)), np.abs(d_r), np.abs(d_t))


def _dft_vector(n: int, theta: float) -> np.ndarray:
    return np.exp(-1j * theta * np.arange(n))


@dataclass(frozen=True)
class PhaseCodebook:
    """DFT codewords for a ``ris_h x ris_v`` surface.

    ``codewords[j]`` is indexed like :func:`steering_ris` (element
    ``v * ris_h + h``). Codeword ``j`` corresponds to
    ``(n_h, n_v) = index_map[j]`` with ``j = n_h * ris_v + n_v``.
    """

    codewords: np.ndarray
    index_map: tuple

    def __len__(self) -> int:
        return len(self.codewords)

    def phases(self, j: int) -> np.ndarray:
        return wrap_phase(np.angle(self.codewords[j]))

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["index", "n_h", "n_v", "phases"])
            for j, (n_h, n_v) in enumerate(self.index_map):
                phases = " ".join(f"{p:.12g}" for p in self.phases(j))
                writer.writerow([j, n_h, n_v, phases])


def dft_codebook(ris_h: int, ris_v: int) -> PhaseCodebook:
    words, index = [], []
    for n_h in range(ris_h):
        for n_v in range(ris_v):
            words.append(np.kron(
                _dft_vector(ris_v, TWO_PI * n_v / ris_v),
                _dft_vector(ris_h, TWO_PI * n_h / ris_h),
            ))
            index.append((n_h, n_v))
    return PhaseCodebook(np.array(words), tuple(index))


@dataclass(frozen=True)
class AmplitudeGrid:
    """Reflection amplitudes on a uniform grid in ``alpha_r**2`` (0 and 1 excluded)."""

    alpha_r: np.ndarray
    alpha_t: np.ndarray

    def __len__(self) -> int:
        return len(self.alpha_r)


def amplitude_grid(n_levels: int) -> AmplitudeGrid:
    if n_levels < 1:
        raise ValueError("n_levels must be >= 1")
    power_r = np.arange(1, n_levels + 1) / (n_levels + 1)
    return AmplitudeGrid(np.sqrt(power_r), np.sqrt(1.0 - power_r))


def phase_grid(n: int) -> np.ndarray:
    return TWO_PI * np.arange(n) / n
