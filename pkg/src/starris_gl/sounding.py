"""Uplink pilot sounding: orthogonal pilots swept over RIS phase codewords and amplitude levels.

For pilot ``i``, codeword ``j`` and amplitude level ``k`` both RIS sides take
the phases of codeword ``j``; the reflection side uses ``alpha_r[k]`` and the
transmission side ``alpha_t[k]`` on every element. The received antenna
vector is stored in ``R[:, i, j, k]``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .channel import ChannelRealization, crandn
from .config import SystemConfig
from .ris import AmplitudeGrid, PhaseCodebook, StarRisConfig, amplitude_grid, dft_codebook


@dataclass(frozen=True)
class PilotPlan:
    """Pilot matrix ``P`` with one row per user antenna and one column per pilot slot.

    Rows ``[0, n_ant_r)`` belong to user r, the rest to user t.
    """

    P: np.ndarray
    n_ant_r: int
    n_ant_t: int
    power: float

    @property
    def n_pilots(self) -> int:
        return self.P.shape[1]

    def split(self, pilot: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        return pilot[: self.n_ant_r], pilot[self.n_ant_r:]


@dataclass
class ReceivedPilotTensor:
    """Complex sounding tensor of shape ``(M, n_pilots, N, n_amp_levels)``."""

    R: np.ndarray
    noise_seed: object = None

    @property
    def shape(self) -> tuple:
        return self.R.shape

    def real_view(self) -> np.ndarray:
        """Real/imag parts stacked along the antenna axis: ``(2M, n_pilots, N, K)``."""
        return np.concatenate([self.R.real, self.R.imag], axis=0)


def make_pilots(cfg: SystemConfig) -> PilotPlan:
    """Unnormalised DFT pilots: every entry has modulus ``sqrt(pilot_power)``."""
    n = cfg.n_pilots
    k = np.arange(n)
    P = np.exp(-2j * np.pi * np.outer(k, k) / n) * np.sqrt(cfg.pilot_power)
    return PilotPlan(P, cfg.n_ant_r, cfg.n_ant_t, cfg.pilot_power)


def sounding_schedule(n_pilots: int, n_codewords: int, n_levels: int) -> list[tuple[int, int, int]]:
    """Sweep order: pilot outermost, then codeword, then amplitude level."""
    return [
        (i, j, k)
        for i in range(n_pilots)
        for j in range(n_codewords)
        for k in range(n_levels)
    ]


def uplink_snapshot(
    ch: ChannelRealization,
    config: StarRisConfig,
    pilot: np.ndarray,
    noise_var: float,
    noise_seed=None,
) -> np.ndarray:
    """One received BS vector ``H^H Phi_r G_r p_r + H^H Phi_t G_t p_t + v``."""
    n_r, n_t = ch.G_r.shape[1], ch.G_t.shape[1]
    pilot = np.asarray(pilot)
    if pilot.shape != (n_r + n_t,):
        raise ValueError(f"pilot must have length {n_r + n_t}, got shape {pilot.shape}")
    if config.n_elements != ch.H.shape[0]:
        raise ValueError(f"RIS config has {config.n_elements} elements, channel has {ch.H.shape[0]}")
    p_r, p_t = pilot[:n_r], pilot[n_r:]
    y = ch.H.conj().T @ (config.coefficients("r") * (ch.G_r @ p_r))
    y = y + ch.H.conj().T @ (config.coefficients("t") * (ch.G_t @ p_t))
    if noise_var > 0:
        y = y + crandn(np.random.default_rng(noise_seed), y.shape, noise_var)
    return y


def noiseless_components(ch: ChannelRealization, plan: PilotPlan, codebook: PhaseCodebook):
    """Per-side noiseless responses ``Y_l[m, i, j]`` at unit amplitude."""
    unit = codebook.codewords / np.abs(codebook.codewords)
    out = []
    for G, rows in ((ch.G_r, slice(0, plan.n_ant_r)), (ch.G_t, slice(plan.n_ant_r, None))):
        incident = G @ plan.P[rows]  # N x n_pilots
        # Y[m, i, j] = sum_n conj(H[n, m]) * c_j[n] * incident[n, i]
        out.append(np.einsum("nm,ni,jn->mij", ch.H.conj(), incident, unit, optimize=True))
    return out


def sound(
    ch: ChannelRealization,
    plan: PilotPlan,
    codebook: PhaseCodebook,
    grid: AmplitudeGrid,
    noise_var: float,
    noise_seed=None,
) -> ReceivedPilotTensor:
    Y_r, Y_t = noiseless_components(ch, plan, codebook)
    R = (
        Y_r[..., None] * grid.alpha_r[None, None, None, :]
        + Y_t[..., None] * grid.alpha_t[None, None, None, :]
    )
    if noise_var > 0:
        # one draw over the whole tensor in canonical (m, i, j, k) order
        R = R + crandn(np.random.default_rng(noise_seed), R.shape, noise_var)
    return ReceivedPilotTensor(R, noise_seed)


def sound_channel(ch: ChannelRealization, cfg: SystemConfig, n_amp_levels: int, noise_seed=None):
    """Convenience wrapper building pilots, codebook and grid from ``cfg``."""
    return sound(
        ch, make_pilots(cfg), dft_codebook(cfg.ris_h, cfg.ris_v), amplitude_grid(n_amp_levels),
        cfg.pilot_noise_power, noise_seed,
    )
