"""Fast built-in checks of the hand-computable examples of every module."""

from __future__ import annotations

import dataclasses
from typing import Callable

import numpy as np

from .channel import ChannelRealization, path_loss, steering_ris, steering_ula
from .codec import TargetCodec
from .config import BcdSettings, ChannelParams, RunConfig, SystemConfig
from .gbdt import GBDTRegressor, gbdt_flops
from .rates import bcd_optimize, exhaustive_oracle, rate
from .rft import rft_score
from .ris import StarRisConfig, amplitude_grid, dft_codebook, phi_matrix
from .saab import SaabTransform
from .sounding import make_pilots

CHECKS: list[tuple[str, Callable[[], bool]]] = []


def check(name: str):
    def register(fn):
        CHECKS.append((name, fn))
        return fn
    return register


@check("steering_ula(2, 1) = [1, -1]")
def _ula():
    return np.allclose(steering_ula(2, 1.0), [1, -1], atol=1e-12)


@check("steering_ris 2x2 at (pi/2, 0) = [1, -1, 1, -1]")
def _ris_steer():
    cfg = SystemConfig(ris_h=2, ris_v=2)
    return np.allclose(steering_ris(cfg, np.pi / 2, 0.0), [1, -1, 1, -1], atol=1e-12)


@check("path loss at 20 m = 2.5e-4")
def _pl():
    return abs(path_loss(ChannelParams(), 20.0) - 2.5e-4) < 1e-15


@check("phi_matrix with alpha_r=0.6, theta=pi/2 has entry 0.6j and alpha_t=0.8")
def _phi():
    cfg = StarRisConfig.from_split([np.pi / 2], [0.0], [0.6])
    return np.allclose(phi_matrix(cfg, "r"), [[0.6j]], atol=1e-12) and abs(cfg.alpha_t[0] - 0.8) < 1e-12


@check("DFT codebook (2, 2) Gram = 4 I")
def _gram():
    C = dft_codebook(2, 2).codewords
    return np.allclose(C.conj() @ C.T, 4 * np.eye(4), atol=1e-9)


@check("amplitude grid K=3 gives alpha_r^2 in {0.25, 0.5, 0.75}")
def _grid():
    return np.allclose(amplitude_grid(3).alpha_r ** 2, [0.25, 0.5, 0.75], atol=1e-12)


@check("pilot rows orthogonal (N_r = N_t = 4)")
def _pilots():
    P = make_pilots(SystemConfig(n_ant_r=4, n_ant_t=4)).P
    G = P @ P.conj().T
    return np.allclose(G - np.diag(np.diag(G)), 0, atol=1e-12)


@check("rate with SNR 3 is 2 bits/s/Hz")
def _rate():
    ch = ChannelRealization(np.array([[1.0 + 0j]]), np.array([[1.0 + 0j]]), np.array([[1.0 + 0j]]), 1, 1, 1)
    ris = StarRisConfig.from_split([0.0], [0.0], [np.sqrt(0.5)])
    w = np.array([np.sqrt(6.0) + 0j])
    return abs(rate(ch, ris, w, "r", 1.0) - 2.0) < 1e-12


@check("BCD within 0.05 of the exhaustive grid optimum on a 2x2 instance")
def _bcd_oracle():
    from .channel import draw_channel
    s = SystemConfig(n_bs_antennas=2, ris_h=2, ris_v=1)
    ch = draw_channel(s, ChannelParams(), 7)
    bcd = bcd_optimize(ch, s, BcdSettings())
    oracle = exhaustive_oracle(ch, s, 16, 8, 17)
    return bcd.objective >= oracle.objective - 0.05


@check("Saab with tau=1 reconstructs its input")
def _saab():
    X = np.random.default_rng(0).standard_normal((40, 2, 2, 4, 3))
    saab = SaabTransform(energy_threshold=1.0).fit(X)
    return np.max(np.abs(saab.inverse_transform(saab.transform(X)) - X)) < 1e-8


@check("RFT on z = y = (1, 2, 3, 4), B = 3 gives 0.25")
def _rft():
    return rft_score([1, 2, 3, 4], [1, 2, 3, 4], 3).loss == 0.25


@check("GBDT FLOPs (T=200, depth=4) = 1201")
def _gbdt_flops():
    return gbdt_flops(200, 4) == 1201 and gbdt_flops(0, 4) == 1


@check("GBDT on constant y predicts the constant")
def _gbdt_const():
    X = np.random.default_rng(0).standard_normal((30, 3))
    m = GBDTRegressor(n_estimators=5).fit(X, np.full(30, 2.5))
    return np.all(m.predict(X) == 2.5)


@check("target codec round trip keeps the rate")
def _codec():
    from .channel import draw_channel
    from .rates import canonicalize, evaluate
    cfg = RunConfig()
    s = dataclasses.replace(cfg.system, ris_h=2, ris_v=2)
    ch = draw_channel(s, cfg.channel, 3)
    sol = evaluate(ch, s, canonicalize(bcd_optimize(ch, s, cfg.bcd)))
    codec = TargetCodec(s.n_elements, s.n_bs_antennas)
    back = evaluate(ch, s, codec.decode(codec.encode(sol), s.tx_power))
    return abs(back.objective - sol.objective) < 1e-9


def run(verbose: bool = True) -> bool:
    ok = True
    for name, fn in CHECKS:
        try:
            passed = bool(fn())
            detail = ""
        except Exception as exc:  # report and keep going
            passed, detail = False, f" ({type(exc).__name__}: {exc})"
        ok &= passed
        if verbose:
            print(f"{'PASS' if passed else 'FAIL'}  {name}{detail}")
    return ok
