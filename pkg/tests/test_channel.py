import dataclasses

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from starris_gl.channel import crandn, draw_channel, los_matrix, path_loss, steering_ris, steering_ula
from starris_gl.config import ChannelParams, SystemConfig


def test_steering_ula_examples():
    assert np.allclose(steering_ula(1, 0.7), [1])
    assert np.allclose(steering_ula(2, 1.0), [1, -1], atol=1e-12)
    phases = np.mod(np.angle(steering_ula(4, 0.5)), 2 * np.pi)
    assert np.allclose(phases, [0, np.pi / 2, np.pi, 3 * np.pi / 2], atol=1e-12)


@given(st.integers(1, 64), st.floats(-1, 1))
def test_steering_unit_modulus(n, psi):
    assert np.allclose(np.abs(steering_ula(n, psi)), 1.0, atol=1e-12)


def test_steering_ris_examples():
    assert np.allclose(steering_ris(SystemConfig(ris_h=1, ris_v=1), 1.1, 0.3), [1])
    assert np.allclose(steering_ris(SystemConfig(), 0.0, 0.0), np.ones(16))
    assert np.allclose(steering_ris(SystemConfig(ris_h=2, ris_v=2), np.pi / 2, 0.0), [1, -1, 1, -1], atol=1e-12)


@given(st.integers(1, 5), st.integers(1, 5), st.floats(0, np.pi), st.floats(0, np.pi))
def test_steering_ris_index_identity(nh, nv, phi, varphi):
    a = steering_ris(SystemConfig(ris_h=nh, ris_v=nv), phi, varphi)
    for v in range(nv):
        for h in range(nh):
            expect = np.exp(1j * np.pi * (v * np.sin(varphi) + h * np.cos(varphi) * np.sin(phi)))
            assert abs(a[v * nh + h] - expect) < 1e-12
    assert np.allclose(np.abs(a), 1.0, atol=1e-12)


def test_path_loss():
    p = ChannelParams()
    assert path_loss(p, 1.0) == pytest.approx(0.1, rel=1e-15)
    assert path_loss(p, 20.0) == pytest.approx(2.5e-4, rel=1e-12)
    p0 = dataclasses.replace(p, pathloss_exp=0.0)
    assert path_loss(p0, 37.0) == 0.1
    for d in (0.0, -1.0):
        with pytest.raises(ValueError):
            path_loss(p, d)


def test_shapes_and_determinism():
    cfg = SystemConfig(n_ant_r=2, n_ant_t=3)
    a = draw_channel(cfg, ChannelParams(), 42)
    b = draw_channel(cfg, ChannelParams(), 42)
    assert a.H.shape == (16, 8) and a.G_r.shape == (16, 2) and a.G_t.shape == (16, 3)
    for x, y in ((a.H, b.H), (a.G_r, b.G_r), (a.G_t, b.G_t)):
        assert np.array_equal(x, y)
    c = draw_channel(cfg, ChannelParams(), 43)
    assert not np.array_equal(a.H, c.H)
    assert np.all(np.isfinite(a.H))


def test_geometry_sets_path_loss():
    cfg = SystemConfig()
    ch = draw_channel(cfg, ChannelParams(), 0)
    assert ch.beta_q == pytest.approx(path_loss(ChannelParams(), 20.0))
    assert ch.beta_r == pytest.approx(path_loss(ChannelParams(), np.hypot(5, 10)))


def test_rician_limits():
    cfg = SystemConfig()
    ch = draw_channel(cfg, ChannelParams(rician_k=1e12), 5)
    los = los_matrix(cfg, ch)
    err = np.linalg.norm(ch.H / np.sqrt(ch.beta_q) - los) / np.linalg.norm(los)
    assert err < 1e-5
    # rank one LOS
    s = np.linalg.svd(los, compute_uv=False)
    assert s[1] < 1e-9 * s[0]
    # K = 0: H is the NLOS sum only, orthogonal to nothing in particular but independent of LOS angle
    ch0 = draw_channel(cfg, ChannelParams(rician_k=0.0), 5)
    nlos = ch0.H / np.sqrt(ch0.beta_q)
    ang = ch0.angles.bs
    rebuilt = sum(
        ang.nlos_gains[p - 1] * np.outer(steering_ris(cfg, ang.ris_phi[p], ang.ris_varphi[p]).conj(),
                                         steering_ula(8, np.cos(ang.end_angle[p])))
        for p in range(1, len(ang.end_angle))
    )
    assert np.allclose(nlos, rebuilt, atol=1e-12)


def test_angles_in_range():
    ch = draw_channel(SystemConfig(), ChannelParams(), 9)
    for link in (ch.angles.bs, ch.angles.r, ch.angles.t):
        for arr in (link.ris_phi, link.ris_varphi, link.end_angle):
            assert np.all((arr >= 0) & (arr <= np.pi))


def test_crandn_variance(rng):
    z = crandn(rng, 200_000, 2.0)
    assert np.var(z.real) == pytest.approx(1.0, rel=0.02)
    assert np.var(z.imag) == pytest.approx(1.0, rel=0.02)
