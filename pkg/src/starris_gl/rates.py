"""Broadcast rate evaluation and precoding optimisers that use full CSI.

The BCD optimiser alternates two blocks, each accepted only if it does not
lower the objective:

* precoder block: projected gradient ascent on ``{w : ||w||^2 <= P_t}`` with
  backtracking, started from the better of the current ``w`` and the
  dominant eigenvector of ``sum_l H_eff,l^H H_eff,l``;
* RIS block: one pass over the elements, each doing a joint grid search over
  ``(theta_r, theta_t, alpha_r**2)`` with the other elements fixed.

This is a plain block-coordinate scheme, not a WMMSE reformulation.
"""

from __future__ import annotations

import itertools
import warnings
from dataclasses import dataclass, field, replace

import numpy as np

from .channel import ChannelRealization, crandn
from .config import BcdSettings, SystemConfig
from .ris import (
    AmplitudeGrid, PhaseCodebook, StarRisConfig, amplitude_grid, dft_codebook,
    phase_grid, wrap_phase,
)

LN2 = np.log(2.0)
MAX_ORACLE_EVALS = 10**7


class NumericalError(ArithmeticError):
    def __init__(self, message, trace=None):
        super().__init__(message)
        self.trace = list(trace or [])


class GridTooLargeError(ValueError):
    def __init__(self, size):
        super().__init__(f"exhaustive grid needs {size:.3g} evaluations (limit {MAX_ORACLE_EVALS:.0e})")
        self.size = size


@dataclass
class PrecodingSolution:
    w: np.ndarray
    ris: StarRisConfig
    rate_r: float | None = None
    rate_t: float | None = None
    objective: float | None = None
    iterations: int = 0
    trace: list = field(default_factory=list)

    def check_power(self, tx_power: float, rtol: float = 1e-9) -> bool:
        return float(np.vdot(self.w, self.w).real) <= tx_power * (1.0 + rtol)


def effective_channel(ch: ChannelRealization, ris: StarRisConfig, side: str) -> np.ndarray:
    """Cascaded ``N_l x M`` channel ``G_l^H Phi_l H``."""
    return ch.G(side).conj().T @ (ris.coefficients(side)[:, None] * ch.H)


def _check_power(w, tx_power):
    if tx_power is None:
        return
    excess = float(np.vdot(w, w).real) / tx_power - 1.0
    if excess > 1e-9:
        raise ValueError(f"||w||^2 exceeds the power budget by {excess:.3g} (relative)")
    if excess > 1e-12:
        warnings.warn(f"||w||^2 exceeds the power budget by {excess:.3g} (relative)", stacklevel=3)


def rate(ch, ris, w, side, sigma2, tx_power=None) -> float:
    """Achievable rate ``log2(1 + ||H_eff w||^2 / sigma2)`` in bits/s/Hz."""
    if not sigma2 > 0:
        raise ValueError(f"noise power must be positive, got {sigma2}")
    _check_power(w, tx_power)
    y = effective_channel(ch, ris, side) @ w
    return float(np.log2(1.0 + np.vdot(y, y).real / sigma2))


def combine(rate_r, rate_t, objective: str):
    if objective == "sum_rate":
        return rate_r + rate_t
    if objective == "min_rate":
        return np.minimum(rate_r, rate_t)
    raise ValueError(f"unknown objective {objective!r}")


def evaluate(ch, cfg: SystemConfig, sol: PrecodingSolution, objective="sum_rate") -> PrecodingSolution:
    """Return ``sol`` with both user rates and the objective filled in."""
    r = rate(ch, sol.ris, sol.w, "r", cfg.noise_power, cfg.tx_power)
    t = rate(ch, sol.ris, sol.w, "t", cfg.noise_power, cfg.tx_power)
    return replace(sol, rate_r=r, rate_t=t, objective=float(combine(r, t, objective)))


def canonicalize(sol: PrecodingSolution) -> PrecodingSolution:
    """Fix the three phase ambiguities the rates are blind to.

    ``w`` is rotated so its first entry with at least half the peak magnitude
    is real and non-negative; each RIS side is rotated so element 0 has
    phase 0. Rates are unchanged.
    """
    w = np.asarray(sol.w, dtype=complex)
    mag = np.abs(w)
    if mag.max() > 0:
        ref = int(np.argmax(mag >= 0.5 * mag.max()))
        w = w * np.exp(-1j * np.angle(w[ref]))
        w[ref] = abs(w[ref])
    ris = StarRisConfig(
        wrap_phase(sol.ris.theta_r - sol.ris.theta_r[0]),
        wrap_phase(sol.ris.theta_t - sol.ris.theta_t[0]),
        sol.ris.alpha_r.copy(),
        sol.ris.alpha_t.copy(),
    )
    return replace(sol, w=w, ris=ris)


def _dominant_eigvec(A: np.ndarray) -> np.ndarray:
    vals, vecs = np.linalg.eigh(A)
    v = vecs[:, -1]
    return v / np.linalg.norm(v)


class _Problem:
    """Channel quantities that stay fixed during one BCD run."""

    def __init__(self, ch: ChannelRealization, sigma2: float, objective: str):
        self.H = ch.H
        self.Gh_r = ch.G_r.conj().T
        self.Gh_t = ch.G_t.conj().T
        self.sigma2 = sigma2
        self.objective = objective

    def snr(self, w, c_r, c_t):
        x = self.H @ w
        y_r = self.Gh_r @ (c_r * x)
        y_t = self.Gh_t @ (c_t * x)
        return np.vdot(y_r, y_r).real / self.sigma2, np.vdot(y_t, y_t).real / self.sigma2

    def value(self, w, c_r, c_t) -> float:
        s_r, s_t = self.snr(w, c_r, c_t)
        return float(combine(np.log2(1 + s_r), np.log2(1 + s_t), self.objective))

    def gram(self, c_r, c_t):
        """Normalised per-side Gram matrices ``H_eff^H H_eff / sigma2``."""
        A_r = self.Gh_r @ (c_r[:, None] * self.H)
        A_t = self.Gh_t @ (c_t[:, None] * self.H)
        return A_r.conj().T @ A_r / self.sigma2, A_t.conj().T @ A_t / self.sigma2


def _quad(B, w):
    return float(np.vdot(w, B @ w).real)


def _w_value(B_r, B_t, w, objective):
    return float(combine(np.log2(1 + _quad(B_r, w)), np.log2(1 + _quad(B_t, w)), objective))


def _w_step(B_r, B_t, w, tx_power, settings: BcdSettings):
    obj = settings.objective
    f = _w_value(B_r, B_t, w, obj)
    cand = _dominant_eigvec(B_r + B_t) * np.sqrt(tx_power)
    f_cand = _w_value(B_r, B_t, cand, obj)
    if f_cand > f:
        w, f = cand, f_cand
    radius = np.sqrt(tx_power)
    for _ in range(settings.w_inner_iters):
        q_r, q_t = _quad(B_r, w), _quad(B_t, w)
        if obj == "sum_rate":
            grad = B_r @ w / (1 + q_r) + B_t @ w / (1 + q_t)
        elif q_r <= q_t:
            grad = B_r @ w / (1 + q_r)
        else:
            grad = B_t @ w / (1 + q_t)
        gnorm = np.linalg.norm(grad)
        if gnorm == 0:
            break
        mu = settings.step_init * radius / gnorm
        accepted = False
        for _ in range(settings.max_backtracks):
            w_new = w + mu * grad
            norm = np.linalg.norm(w_new)
            if norm > radius:
                w_new = w_new * (radius / norm)
            f_new = _w_value(B_r, B_t, w_new, obj)
            if f_new > f:
                accepted = True
                break
            mu *= settings.shrink
        if not accepted:
            break
        gain = f_new - f
        w, f = w_new, f_new
        if gain <= settings.rel_tol * abs(f):
            break
    return w, f


def _ris_step(prob: _Problem, w, theta_r, theta_t, alpha_r, phases, amps: AmplitudeGrid, f):
    """One pass of per-element grid search; returns updated arrays and objective."""
    x = prob.H @ w
    b_r = prob.Gh_r * x[None, :]
    b_t = prob.Gh_t * x[None, :]
    alpha_t = np.sqrt(1.0 - alpha_r**2)
    c_r = alpha_r * np.exp(1j * theta_r)
    c_t = alpha_t * np.exp(1j * theta_t)
    s_r, s_t = b_r @ c_r, b_t @ c_t
    rot = np.exp(1j * phases)
    cand_r = rot[:, None] * amps.alpha_r[None, :]  # phase x level
    cand_t = rot[:, None] * amps.alpha_t[None, :]
    n_ph, n_amp = len(phases), len(amps)
    for n in range(len(theta_r)):
        base_r = s_r - b_r[:, n] * c_r[n]
        base_t = s_t - b_t[:, n] * c_t[n]
        y_r = base_r[None, None, :] + cand_r[:, :, None] * b_r[None, None, :, n]
        y_t = base_t[None, None, :] + cand_t[:, :, None] * b_t[None, None, :, n]
        rate_r = np.log2(1 + np.sum(np.abs(y_r) ** 2, axis=-1) / prob.sigma2)
        rate_t = np.log2(1 + np.sum(np.abs(y_t) ** 2, axis=-1) / prob.sigma2)
        total = combine(rate_r[:, None, :], rate_t[None, :, :], prob.objective)
        best = int(np.argmax(total))
        if total.flat[best] > f:
            i_r, rest = divmod(best, n_ph * n_amp)
            i_t, k = divmod(rest, n_amp)
            theta_r[n], theta_t[n] = phases[i_r], phases[i_t]
            alpha_r[n] = amps.alpha_r[k]
            c_r[n], c_t[n] = cand_r[i_r, k], cand_t[i_t, k]
            s_r = base_r + b_r[:, n] * c_r[n]
            s_t = base_t + b_t[:, n] * c_t[n]
            f = float(total.flat[best])
    return theta_r, theta_t, alpha_r


def _initial_point(prob: _Problem, codebook: PhaseCodebook, amps: AmplitudeGrid, tx_power: float):
    """Best shared DFT codeword with an even power split and the eigen precoder.

    The even split is snapped to the nearest amplitude-grid level (lowest
    index on ties) so every returned amplitude lies on the grid.
    """
    k = int(np.argmin(np.abs(amps.alpha_r**2 - 0.5)))
    a_r, a_t = amps.alpha_r[k], amps.alpha_t[k]
    best = None
    for j in range(len(codebook)):
        theta = codebook.phases(j)
        c_r, c_t = a_r * np.exp(1j * theta), a_t * np.exp(1j * theta)
        B_r, B_t = prob.gram(c_r, c_t)
        w = _dominant_eigvec(B_r + B_t) * np.sqrt(tx_power)
        f = prob.value(w, c_r, c_t)
        if best is None or f > best[0]:
            best = (f, w, theta)
    f, w, theta = best
    return w, theta.copy(), theta.copy(), np.full(len(theta), a_r)


def bcd_optimize(ch: ChannelRealization, cfg: SystemConfig, settings: BcdSettings | None = None,
                 seed=None) -> PrecodingSolution:
    """Block coordinate ascent on the broadcast objective with perfect CSI.

    The iteration is deterministic; ``seed`` is accepted for interface
    symmetry with the randomised schemes and is not used.
    """
    settings = settings or BcdSettings()
    prob = _Problem(ch, cfg.noise_power, settings.objective)
    P = cfg.tx_power
    phases = phase_grid(settings.phase_grid)
    amps = amplitude_grid(settings.amp_grid)
    codebook = dft_codebook(cfg.ris_h, cfg.ris_v)

    w, theta_r, theta_t, alpha_r = _initial_point(prob, codebook, amps, P)

    def coeffs():
        return alpha_r * np.exp(1j * theta_r), np.sqrt(1 - alpha_r**2) * np.exp(1j * theta_t)

    f = prob.value(w, *coeffs())
    trace = [f]
    it = 0
    for it in range(1, settings.max_iters + 1):
        f_start = f
        B_r, B_t = prob.gram(*coeffs())
        w, _ = _w_step(B_r, B_t, w, P, settings)
        f = prob.value(w, *coeffs())
        trace.append(f)
        theta_r, theta_t, alpha_r = _ris_step(prob, w, theta_r, theta_t, alpha_r, phases, amps, f)
        f = prob.value(w, *coeffs())
        trace.append(f)
        if not np.isfinite(f):
            raise NumericalError(f"non-finite objective at iteration {it}", trace)
        if f - f_start <= settings.rel_tol * abs(f_start):
            break

    ris = StarRisConfig.from_split(theta_r, theta_t, alpha_r)
    sol = PrecodingSolution(w, ris, iterations=it, trace=trace)
    return evaluate(ch, cfg, sol, settings.objective)


def w_candidates(ch: ChannelRealization, n_candidates: int) -> np.ndarray:
    """Unit-norm precoder set: oversampled DFT columns plus the dominant direction of ``H``.

    ``n_candidates - 1`` DFT columns are used; duplicates are dropped.
    """
    M = ch.H.shape[1]
    cands = [_dominant_eigvec(ch.H.conj().T @ ch.H)]
    n_dft = n_candidates - 1
    if n_dft > 0:
        m = np.arange(M)[:, None]
        cols = np.exp(2j * np.pi * m * np.arange(n_dft)[None, :] / n_dft) / np.sqrt(M)
        cands.extend(cols.T)
    out = []
    for c in cands:
        if not any(abs(abs(np.vdot(c, o)) - 1.0) < 1e-12 for o in out):
            out.append(c)
    return np.array(out)


def oracle_size(n_elements, n_w, n_phase, n_amp, objective="sum_rate") -> int:
    phase_work = 2 * n_phase**n_elements if objective == "sum_rate" else n_phase ** (2 * n_elements)
    return n_w * n_amp**n_elements * phase_work


def exhaustive_oracle(ch: ChannelRealization, cfg: SystemConfig, phase_grid_size: int,
                      amp_grid_size: int, w_codebook: int, objective="sum_rate") -> PrecodingSolution:
    """Exact maximiser over the finite grid of precoders, amplitudes and phases.

    Every element has its own phase (per side) and amplitude level. For the
    sum-rate objective the two sides separate once ``w`` and the amplitudes
    are fixed, so the phase vectors of each side are enumerated on their own;
    the optimum found is still the exact grid optimum.
    """
    N = ch.H.shape[0]
    W = w_candidates(ch, w_codebook) * np.sqrt(cfg.tx_power)
    size = oracle_size(N, len(W), phase_grid_size, amp_grid_size, objective)
    if size > MAX_ORACLE_EVALS:
        raise GridTooLargeError(size)

    phases = phase_grid(phase_grid_size)
    amps = amplitude_grid(amp_grid_size)
    ph_idx = np.array(list(itertools.product(range(phase_grid_size), repeat=N)))  # Pc x N
    amp_idx = np.array(list(itertools.product(range(amp_grid_size), repeat=N)))  # Ac x N
    rot = np.exp(1j * phases[ph_idx])
    ar = amps.alpha_r[amp_idx]
    at = amps.alpha_t[amp_idx]
    sigma2 = cfg.noise_power

    def side_rates(b, alpha):
        # y[a, p, :] = sum_n b[:, n] * alpha[a, n] * rot[p, n]
        y = np.einsum("ln,an,pn->apl", b, alpha, rot, optimize=True)
        return np.log2(1 + np.sum(np.abs(y) ** 2, axis=-1) / sigma2)

    best = None
    for wi, w in enumerate(W):
        x = ch.H @ w
        r_r = side_rates(ch.G_r.conj().T * x[None, :], ar)  # Ac x Pc
        r_t = side_rates(ch.G_t.conj().T * x[None, :], at)
        if objective == "sum_rate":
            pr, pt = np.argmax(r_r, axis=1), np.argmax(r_t, axis=1)
            rows = np.arange(len(amp_idx))
            totals = r_r[rows, pr] + r_t[rows, pt]
            a = int(np.argmax(totals))
            cand = (totals[a], wi, a, pr[a], pt[a])
        else:
            totals = np.minimum(r_r[:, :, None], r_t[:, None, :])
            flat = int(np.argmax(totals))
            a, rest = divmod(flat, totals.shape[1] * totals.shape[2])
            p_r, p_t = divmod(rest, totals.shape[2])
            cand = (totals.flat[flat], wi, a, p_r, p_t)
        if best is None or cand[0] > best[0]:
            best = cand

    _, wi, a, p_r, p_t = best
    ris = StarRisConfig.from_split(phases[ph_idx[p_r]], phases[ph_idx[p_t]], ar[a])
    return evaluate(ch, cfg, PrecodingSolution(W[wi], ris), objective)


def random_baseline(ch: ChannelRealization, cfg: SystemConfig, codebook: PhaseCodebook,
                    grid: AmplitudeGrid, seed, objective="sum_rate") -> PrecodingSolution:
    """Random codeword (shared by both sides), random amplitude level and random precoder."""
    rng = np.random.default_rng(seed)
    j = int(rng.integers(len(codebook)))
    k = int(rng.integers(len(grid)))
    w = crandn(rng, ch.H.shape[1])
    w = w / np.linalg.norm(w) * np.sqrt(cfg.tx_power)
    theta = codebook.phases(j)
    ris = StarRisConfig.from_split(theta, theta, np.full(len(theta), grid.alpha_r[k]))
    return evaluate(ch, cfg, PrecodingSolution(w, ris), objective)
