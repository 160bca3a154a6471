"""Rician mmWave channels for the BS -> STAR-RIS -> {reflection, transmission} user links.

All arrays use half-wavelength spacing. A ULA response with ``n`` elements
and spatial argument ``psi`` is ``exp(j*pi*psi*k)``, ``k = 0..n-1``. Linear
arrays (BS, users) use ``psi = cos(angle)``; the RIS is a UPA whose response
is ``a_v(sin varphi) kron a_h(cos varphi * sin phi)``, so element
``v * ris_h + h`` carries phase ``pi * (v sin varphi + h cos varphi sin phi)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .config import ChannelParams, SystemConfig


def steering_ula(n_elems: int, psi: float) -> np.ndarray:
    return np.exp(1j * np.pi * psi * np.arange(n_elems))


def steering_ris(cfg: SystemConfig, phi: float, varphi: float) -> np.ndarray:
    return np.kron(
        steering_ula(cfg.ris_v, np.sin(varphi)),
        steering_ula(cfg.ris_h, np.cos(varphi) * np.sin(phi)),
    )


def path_loss(params: ChannelParams, d: float) -> float:
    """Large-scale gain ``ref_gain * (d / ref_distance) ** -pathloss_exp``."""
    if not d > 0:
        raise ValueError(f"distance must be positive, got {d}")
    return params.ref_gain * (d / params.ref_distance) ** (-params.pathloss_exp)


def crandn(rng: np.random.Generator, size, var: float = 1.0) -> np.ndarray:
    """Circularly-symmetric complex Gaussian samples with variance ``var``."""
    scale = np.sqrt(var / 2.0)
    return scale * (rng.standard_normal(size) + 1j * rng.standard_normal(size))


@dataclass
class LinkAngles:
    """Angles and gains of one link. Path 0 is the LOS path (gain fixed to 1)."""

    ris_phi: np.ndarray
    ris_varphi: np.ndarray
    end_angle: np.ndarray
    nlos_gains: np.ndarray


@dataclass
class AngleSet:
    bs: LinkAngles
    r: LinkAngles
    t: LinkAngles


@dataclass
class ChannelRealization:
    """One draw of the three links.

    ``H`` is ``N x M`` (BS -> RIS). ``G_r``/``G_t`` are stored ``N x N_l`` so
    that the downlink RIS -> user matrix is ``G_l.conj().T``.
    """

    H: np.ndarray
    G_r: np.ndarray
    G_t: np.ndarray
    beta_q: float
    beta_r: float
    beta_t: float
    angles: AngleSet | None = field(default=None, repr=False)

    def G(self, side: str) -> np.ndarray:
        if side == "r":
            return self.G_r
        if side == "t":
            return self.G_t
        raise ValueError(f"side must be 'r' or 't', got {side!r}")


def _draw_angles(rng: np.random.Generator, n_paths: int) -> LinkAngles:
    n = n_paths + 1
    return LinkAngles(
        ris_phi=rng.uniform(0.0, np.pi, n),
        ris_varphi=rng.uniform(0.0, np.pi, n),
        end_angle=rng.uniform(0.0, np.pi, n),
        nlos_gains=crandn(rng, n_paths, 1.0 / n_paths),
    )


def _link_components(cfg: SystemConfig, ang: LinkAngles, n_end: int, ris_first: bool):
    """LOS and NLOS matrices of a link before Rician weighting.

    With ``ris_first`` the result is ``N x n_end`` built as
    ``conj(a_ris) outer a_end``; otherwise ``n_end x N`` as
    ``conj(a_end) outer a_ris``.
    """

    def term(p):
        a_ris = steering_ris(cfg, ang.ris_phi[p], ang.ris_varphi[p])
        a_end = steering_ula(n_end, np.cos(ang.end_angle[p]))
        if ris_first:
            return np.outer(a_ris.conj(), a_end)
        return np.outer(a_end.conj(), a_ris)

    los = term(0)
    nlos = sum(ang.nlos_gains[p - 1] * term(p) for p in range(1, len(ang.end_angle)))
    return los, nlos


def _distance(a, b) -> float:
    return float(np.linalg.norm(np.asarray(a) - np.asarray(b)))


def draw_channel(cfg: SystemConfig, params: ChannelParams, seed) -> ChannelRealization:
    """Draw ``(H, G_r, G_t)``; every random quantity comes from ``seed``."""
    rng = np.random.default_rng(seed)
    k = params.rician_k
    w_los = np.sqrt(k / (k + 1.0))
    w_nlos = np.sqrt(1.0 / (k + 1.0))

    ang_q = _draw_angles(rng, params.n_paths_bs)
    ang_r = _draw_angles(rng, params.n_paths_r)
    ang_t = _draw_angles(rng, params.n_paths_t)

    beta_q = path_loss(params, _distance(cfg.bs_pos, cfg.ris_pos))
    beta_r = path_loss(params, _distance(cfg.user_r_pos, cfg.ris_pos))
    beta_t = path_loss(params, _distance(cfg.user_t_pos, cfg.ris_pos))

    los, nlos = _link_components(cfg, ang_q, cfg.n_bs_antennas, ris_first=True)
    H = np.sqrt(beta_q) * (w_los * los + w_nlos * nlos)

    def user_link(ang, n_ant, beta):
        los, nlos = _link_components(cfg, ang, n_ant, ris_first=False)
        G_h = np.sqrt(beta) * (w_los * los + w_nlos * nlos)
        return np.ascontiguousarray(G_h.conj().T)

    G_r = user_link(ang_r, cfg.n_ant_r, beta_r)
    G_t = user_link(ang_t, cfg.n_ant_t, beta_t)
    return ChannelRealization(H, G_r, G_t, beta_q, beta_r, beta_t, AngleSet(ang_q, ang_r, ang_t))


def los_matrix(cfg: SystemConfig, ch: ChannelRealization) -> np.ndarray:
    """Unit-gain LOS part of ``H`` for the angles stored in ``ch``."""
    los, _ = _link_components(cfg, ch.angles.bs, cfg.n_bs_antennas, ris_first=True)
    return los
