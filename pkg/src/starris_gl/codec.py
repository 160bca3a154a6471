"""Real-valued regression targets for a precoding solution and their inverse.

Layout of one target vector (``D = 5N + 2M``)::

    [cos theta_r (N), sin theta_r (N), cos theta_t (N), sin theta_t (N),
     alpha_r (N), Re w (M), Im w (M)]
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .rates import PrecodingSolution
from .ris import StarRisConfig, wrap_phase

ALPHA_EPS = 1e-3
ZERO_NORM = 1e-9


@dataclass
class TargetCodec:
    n_elements: int
    n_bs_antennas: int
    # number of (cos, sin) pairs that decoded to theta = 0 because both were ~0
    zero_phase_count: int = field(default=0, compare=False)

    @property
    def dim(self) -> int:
        return 5 * self.n_elements + 2 * self.n_bs_antennas

    def blocks(self) -> dict[str, slice]:
        N, M = self.n_elements, self.n_bs_antennas
        names = ["cos_r", "sin_r", "cos_t", "sin_t", "alpha_r"]
        out = {name: slice(i * N, (i + 1) * N) for i, name in enumerate(names)}
        out["w_re"] = slice(5 * N, 5 * N + M)
        out["w_im"] = slice(5 * N + M, 5 * N + 2 * M)
        return out

    def labels(self) -> list[str]:
        """Human-readable name of every target dimension."""
        names = []
        for block, sl in self.blocks().items():
            names.extend(f"{block}[{i}]" for i in range(sl.stop - sl.start))
        return names

    def encode(self, sol: PrecodingSolution) -> np.ndarray:
        ris = sol.ris
        w = np.asarray(sol.w)
        if len(ris.theta_r) != self.n_elements or len(w) != self.n_bs_antennas:
            raise ValueError("solution shape does not match the codec")
        return np.concatenate([
            np.cos(ris.theta_r), np.sin(ris.theta_r),
            np.cos(ris.theta_t), np.sin(ris.theta_t),
            ris.alpha_r, w.real, w.imag,
        ])

    def _angle(self, c, s) -> np.ndarray:
        tiny = np.hypot(c, s) < ZERO_NORM
        self.zero_phase_count += int(tiny.sum())
        return np.where(tiny, 0.0, wrap_phase(np.arctan2(s, c)))

    def decode(self, u, tx_power: float) -> PrecodingSolution:
        u = np.asarray(u, dtype=float)
        if u.shape != (self.dim,):
            raise ValueError(f"target vector must have length {self.dim}, got shape {u.shape}")
        b = self.blocks()
        theta_r = self._angle(u[b["cos_r"]], u[b["sin_r"]])
        theta_t = self._angle(u[b["cos_t"]], u[b["sin_t"]])
        alpha_r = np.clip(u[b["alpha_r"]], ALPHA_EPS, np.sqrt(1.0 - ALPHA_EPS**2))
        w = u[b["w_re"]] + 1j * u[b["w_im"]]
        norm = np.linalg.norm(w)
        if norm < ZERO_NORM:
            w = np.ones(self.n_bs_antennas, dtype=complex)
            norm = np.sqrt(self.n_bs_antennas)
        w = w * (np.sqrt(tx_power) / norm)
        return PrecodingSolution(w, StarRisConfig.from_split(theta_r, theta_t, alpha_r))
