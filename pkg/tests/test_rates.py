import dataclasses
import itertools
import warnings

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from starris_gl.channel import ChannelRealization, draw_channel
from starris_gl.config import BcdSettings, ChannelParams, SystemConfig
from starris_gl.rates import (
    GridTooLargeError, PrecodingSolution, bcd_optimize, canonicalize, effective_channel, evaluate,
    exhaustive_oracle, oracle_size, random_baseline, rate, w_candidates,
)
from starris_gl.ris import StarRisConfig, amplitude_grid, dft_codebook, phase_grid


def _ris(n, rng):
    return StarRisConfig.from_split(rng.uniform(0, 2 * np.pi, n), rng.uniform(0, 2 * np.pi, n),
                                    rng.uniform(0.1, 0.9, n))


def test_effective_channel_scaled_identity(rng):
    ch = draw_channel(SystemConfig(), ChannelParams(), 0)
    ris = StarRisConfig.from_split(np.full(16, 0.4), np.full(16, 1.0), np.full(16, 0.6))
    expect = 0.6 * np.exp(0.4j) * ch.G_r.conj().T @ ch.H
    assert np.allclose(effective_channel(ch, ris, "r"), expect, rtol=1e-12)
    zero = dataclasses.replace(ch, H=np.zeros_like(ch.H))
    assert np.all(effective_channel(zero, ris, "t") == 0)


def test_effective_channel_scalar():
    h, g = np.array([[0.2 + 0.1j, -0.3j]]), np.array([[0.5 - 0.5j]])
    ch = ChannelRealization(h, g, g, 1, 1, 1)
    ris = StarRisConfig.from_split([0.9], [0.0], [0.8])
    assert np.allclose(effective_channel(ch, ris, "r"), np.conj(g[0, 0]) * 0.8 * np.exp(0.9j) * h)


def _unit_channel():
    one = np.array([[1.0 + 0j]])
    return ChannelRealization(one, one, one, 1, 1, 1), StarRisConfig.from_split([0.0], [0.0], [np.sqrt(0.5)])


@pytest.mark.parametrize("snr, bits", [(0.0, 0.0), (1.0, 1.0), (3.0, 2.0)])
def test_rate_examples(snr, bits):
    ch, ris = _unit_channel()
    w = np.array([np.sqrt(2 * snr) + 0j])
    assert rate(ch, ris, w, "r", 1.0) == pytest.approx(bits, abs=1e-12)


def test_rate_errors_and_power_check():
    ch, ris = _unit_channel()
    w = np.array([1.0 + 0j])
    for s2 in (0.0, -1.0):
        with pytest.raises(ValueError):
            rate(ch, ris, w, "r", s2)
    with pytest.raises(ValueError):
        rate(ch, ris, w * 1.001, "r", 1.0, tx_power=1.0)
    with pytest.warns(UserWarning):
        rate(ch, ris, w * (1 + 1e-10), "r", 1.0, tx_power=1.0)
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        rate(ch, ris, w, "r", 1.0, tx_power=1.0)


@given(st.integers(0, 10_000), st.floats(0, 2 * np.pi))
def test_rate_global_phase_invariance(seed, phi):
    rng = np.random.default_rng(seed)
    s = SystemConfig(n_bs_antennas=4, ris_h=2, ris_v=2)
    ch = draw_channel(s, ChannelParams(), seed)
    ris = _ris(4, rng)
    w = rng.standard_normal(4) + 1j * rng.standard_normal(4)
    for side in "rt":
        a = rate(ch, ris, w, side, s.noise_power)
        b = rate(ch, ris, w * np.exp(1j * phi), side, s.noise_power)
        assert a >= 0 and abs(a - b) < 1e-12 * max(1.0, a)


def test_rate_scaling_consistency(rng):
    s = SystemConfig(n_bs_antennas=4, ris_h=2, ris_v=2)
    ch = draw_channel(s, ChannelParams(), 11)
    ris = _ris(4, rng)
    w = rng.standard_normal(4) + 1j * rng.standard_normal(4)
    # doubling the noise and the received power (w scaled by sqrt 2) leaves the rate unchanged
    a = rate(ch, ris, w, "r", 1e-12)
    b = rate(ch, ris, np.sqrt(2) * w, "r", 2e-12)
    assert a == pytest.approx(b, rel=1e-12)


def _tiny():
    return SystemConfig(n_bs_antennas=2, ris_h=2, ris_v=1)


def test_bcd_monotone_and_feasible():
    s = SystemConfig(n_bs_antennas=4, ris_h=4, ris_v=2)
    for seed in range(10):
        ch = draw_channel(s, ChannelParams(), seed)
        sol = bcd_optimize(ch, s)
        assert np.all(np.diff(sol.trace) >= -1e-9)
        assert sol.check_power(s.tx_power)
        sol.ris.validate()
        assert sol.objective == pytest.approx(sol.rate_r + sol.rate_t)
        assert sol.objective == pytest.approx(sol.trace[-1], rel=1e-12)


def test_bcd_min_rate_objective():
    s = _tiny()
    ch = draw_channel(s, ChannelParams(), 3)
    sol = bcd_optimize(ch, s, BcdSettings(objective="min_rate"))
    assert sol.objective == pytest.approx(min(sol.rate_r, sol.rate_t))
    assert np.all(np.diff(sol.trace) >= -1e-9)


def test_bcd_deterministic():
    s = SystemConfig()
    ch = draw_channel(s, ChannelParams(), 1)
    a, b = bcd_optimize(ch, s), bcd_optimize(ch, s, seed=99)
    assert np.array_equal(a.w, b.w) and a.objective == b.objective


def test_bcd_close_to_oracle_tiny():
    s = _tiny()
    for seed in range(5):
        ch = draw_channel(s, ChannelParams(), seed)
        bcd = bcd_optimize(ch, s)
        oracle = exhaustive_oracle(ch, s, 16, 8, 17)
        assert bcd.objective >= oracle.objective - 0.05


def _scalar_closed_form(ch, s, levels):
    a = s.tx_power * abs(ch.H[0, 0]) ** 2 * abs(ch.G_r[0, 0]) ** 2 / s.noise_power
    b = s.tx_power * abs(ch.H[0, 0]) ** 2 * abs(ch.G_t[0, 0]) ** 2 / s.noise_power
    vals = [np.log2(1 + a * ar**2) + np.log2(1 + b * (1 - ar**2)) for ar in levels]
    k = int(np.argmax(vals))
    return vals[k], levels[k], a


def test_scalar_case_matches_closed_form():
    s = SystemConfig(n_bs_antennas=1, ris_h=1, ris_v=1)
    levels = amplitude_grid(8).alpha_r
    for seed in range(5):
        ch = draw_channel(s, ChannelParams(), seed)
        best, ar, a = _scalar_closed_form(ch, s, levels)
        bcd = bcd_optimize(ch, s)
        assert bcd.objective == pytest.approx(best, abs=1e-6)
        assert bcd.rate_r == pytest.approx(np.log2(1 + a * ar**2), abs=1e-6)
        oracle = exhaustive_oracle(ch, s, 16, 8, 17)
        assert oracle.objective == pytest.approx(best, abs=1e-6)


def test_oracle_singleton_grid():
    s = _tiny()
    ch = draw_channel(s, ChannelParams(), 0)
    sol = exhaustive_oracle(ch, s, 1, 1, 1)
    w = w_candidates(ch, 1)[0] * np.sqrt(s.tx_power)
    ris = StarRisConfig.from_split(np.zeros(2), np.zeros(2), np.full(2, np.sqrt(0.5)))
    expect = evaluate(ch, s, PrecodingSolution(w, ris))
    assert sol.objective == pytest.approx(expect.objective, rel=1e-12)


def test_oracle_matches_brute_force_small():
    """Plain nested enumeration over the whole joint grid as an independent check."""
    s = _tiny()
    ch = draw_channel(s, ChannelParams(), 2)
    n_ph, n_amp, n_w = 4, 2, 3
    oracle = exhaustive_oracle(ch, s, n_ph, n_amp, n_w)
    W = w_candidates(ch, n_w) * np.sqrt(s.tx_power)
    ph, amps = phase_grid(n_ph), amplitude_grid(n_amp).alpha_r
    best = -np.inf
    for w in W:
        for a in itertools.product(amps, repeat=2):
            for tr in itertools.product(ph, repeat=2):
                for tt in itertools.product(ph, repeat=2):
                    ris = StarRisConfig.from_split(tr, tt, a)
                    v = rate(ch, ris, w, "r", s.noise_power) + rate(ch, ris, w, "t", s.noise_power)
                    best = max(best, v)
    assert oracle.objective == pytest.approx(best, rel=1e-12)


def test_oracle_min_rate_brute_force():
    s = _tiny()
    ch = draw_channel(s, ChannelParams(), 6)
    oracle = exhaustive_oracle(ch, s, 3, 2, 2, objective="min_rate")
    W = w_candidates(ch, 2) * np.sqrt(s.tx_power)
    best = -np.inf
    for w in W:
        for a in itertools.product(amplitude_grid(2).alpha_r, repeat=2):
            for tr in itertools.product(phase_grid(3), repeat=2):
                for tt in itertools.product(phase_grid(3), repeat=2):
                    ris = StarRisConfig.from_split(tr, tt, a)
                    best = max(best, min(rate(ch, ris, w, "r", s.noise_power), rate(ch, ris, w, "t", s.noise_power)))
    assert oracle.objective == pytest.approx(best, rel=1e-12)


def test_oracle_guard():
    ch = draw_channel(SystemConfig(), ChannelParams(), 0)
    with pytest.raises(GridTooLargeError) as exc:
        exhaustive_oracle(ch, SystemConfig(), 16, 8, 17)
    assert exc.value.size == oracle_size(16, 17, 16, 8)


def test_w_candidates():
    ch = draw_channel(SystemConfig(n_bs_antennas=2), ChannelParams(), 0)
    W = w_candidates(ch, 17)
    assert len(W) == 17
    assert np.allclose(np.linalg.norm(W, axis=1), 1.0)
    M1 = draw_channel(SystemConfig(n_bs_antennas=1), ChannelParams(), 0)
    assert len(w_candidates(M1, 17)) == 1


def test_random_baseline_properties():
    s = SystemConfig()
    cb, grid = dft_codebook(4, 4), amplitude_grid(4)
    gaps = []
    for seed in range(40):
        ch = draw_channel(s, ChannelParams(), seed)
        r1 = random_baseline(ch, s, cb, grid, seed)
        r2 = random_baseline(ch, s, cb, grid, seed)
        assert r1.objective == r2.objective and np.array_equal(r1.w, r2.w)
        assert r1.rate_r >= 0 and r1.rate_t >= 0
        assert r1.check_power(s.tx_power)
        gaps.append(bcd_optimize(ch, s).objective - r1.objective)
    assert np.mean(gaps) > 0


def test_canonicalize_preserves_rates():
    s = SystemConfig()
    ch = draw_channel(s, ChannelParams(), 4)
    sol = bcd_optimize(ch, s)
    rng = np.random.default_rng(0)
    rotated = dataclasses.replace(
        sol, w=sol.w * np.exp(1j * rng.uniform(0, 6)),
        ris=StarRisConfig.from_split(sol.ris.theta_r + 1.0, sol.ris.theta_t - 2.0, sol.ris.alpha_r))
    a, b = canonicalize(sol), canonicalize(rotated)
    assert np.allclose(a.w, b.w, atol=1e-9)
    assert np.allclose(np.exp(1j * a.ris.theta_r), np.exp(1j * b.ris.theta_r), atol=1e-9)
    ev = evaluate(ch, s, a)
    assert ev.objective == pytest.approx(sol.objective, abs=1e-9)
    mag = np.abs(a.w)
    ref = np.argmax(mag >= 0.5 * mag.max())
    assert a.w[ref].imag == 0 and a.w[ref].real >= 0
    assert a.ris.theta_r[0] == 0 and a.ris.theta_t[0] == 0
