"""Per-inference floating-point operation counts.

Counting convention:

* a real multiply-add is 2 FLOPs, a complex multiply-add 8, a complex
  magnitude-squared 3, a comparison 1;
* ``log2``, ``sqrt``, ``exp`` and ``atan2`` are 10 FLOPs each;
* an eigendecomposition of a ``d x d`` Hermitian matrix is ``10 * d**3``;
* gathers, reshapes and real/imag stacking are free.

Learned inference = Saab projections + tree traversals + target decoding.
BCD = one full outer iteration (precoder block plus RIS sweep) times the
iteration cap, plus the initial codeword search. Each inner precoder step
is charged one trial point; extra backtracking trials are not counted.
"""

from __future__ import annotations

from dataclasses import dataclass

from .config import BcdSettings, SystemConfig
from .gbdt import gbdt_flops
from .saab import STAGE_AXES

TRANSCENDENTAL = 10

# Reference per-inference counts for M = 8, keyed by (N_r, N_t).
REFERENCE_FLOPS = {
    (1, 1): {"bcd": 7.16e6, "gl": 0.1181e6},
    (4, 4): {"bcd": 7.86e6, "gl": 0.4911e6},
}


def saab_flops(input_shape, stage_outputs) -> int:
    """Projection cost of the four stages.

    ``input_shape`` is the real tensor shape ``(2M, N_p, N, K)`` and
    ``stage_outputs`` the kept component count of every stage.
    """
    shape = list(input_shape)
    total = 0
    for (_, axis), n_out in zip(STAGE_AXES, stage_outputs):
        d = shape[axis]
        n_fibres = 1
        for i, s in enumerate(shape):
            if i != axis:
                n_fibres *= s
        total += 2 * d * n_out * n_fibres
        shape[axis] = n_out
    return total


def decode_flops(n_elements: int, n_bs_antennas: int) -> int:
    """atan2 per phase, clip and alpha_t per amplitude, norm and rescale of ``w``."""
    N, M = n_elements, n_bs_antennas
    phases = 2 * N * TRANSCENDENTAL
    amplitudes = N * (2 + 2 + TRANSCENDENTAL)  # two comparisons, 1 - a^2, sqrt
    precoder = 3 * M + TRANSCENDENTAL + 1 + 2 * M  # |w|^2, sqrt, divide, scale
    return phases + amplitudes + precoder


def bcd_flops(cfg: SystemConfig, settings: BcdSettings) -> int:
    """Worst-case BCD cost: ``max_iters`` outer iterations plus initialisation."""
    M, N = cfg.n_bs_antennas, cfg.n_elements
    n_r, n_t = cfg.n_ant_r, cfg.n_ant_t
    n_users = n_r + n_t

    def gram():
        # G^H (c * H) for both sides, then A^H A
        return 6 * N * M + 8 * N * M * n_users + 8 * M * M * n_users

    eig = 10 * M**3
    objective = 8 * N * M + 6 * N + 8 * N * n_users + 3 * n_users + 2 * TRANSCENDENTAL + 1

    quad = 8 * M * M + 8 * M  # w^H B w
    # each inner step: two quadratic forms, two B @ w, one trial point
    w_step = eig + settings.w_inner_iters * (
        2 * quad + 2 * 8 * M * M + 2 * quad + 8 * M + 2 * TRANSCENDENTAL
    )

    n_ph, n_amp = settings.phase_grid, settings.amp_grid
    n_cand = n_ph * n_amp
    per_element = (
        n_cand * n_users * (8 + 3)  # candidate received samples and their power
        + 2 * n_cand * TRANSCENDENTAL  # per-side rates
        + 2 * n_ph * n_ph * n_amp  # combine both sides and argmax
    )
    ris_step = 8 * N * M + 6 * N * n_users + N * per_element

    per_iter = gram() + w_step + objective + ris_step + 2 * objective
    init = cfg.n_elements * (gram() + eig + objective)
    return int(settings.max_iters * per_iter + init)


@dataclass(frozen=True)
class FlopsBreakdown:
    saab: int
    trees: int
    decode: int
    bcd: int

    @property
    def gl(self) -> int:
        return self.saab + self.trees + self.decode

    @property
    def ratio(self) -> float:
        return self.gl / self.bcd


def flops_report(cfg: SystemConfig, n_amp_levels: int, bcd_settings: BcdSettings, stage_outputs,
                 tree_shapes) -> FlopsBreakdown:
    """Count both schemes.

    ``stage_outputs`` holds the kept component count of each Saab stage and
    ``tree_shapes`` lists ``(n_trees, max_depth)`` for every target ensemble.
    """
    if len(stage_outputs) != 4:
        raise ValueError("need the kept component count of all four Saab stages")
    input_shape = (2 * cfg.n_bs_antennas, cfg.n_pilots, cfg.n_elements, n_amp_levels)
    return FlopsBreakdown(
        saab=saab_flops(input_shape, stage_outputs),
        trees=sum(gbdt_flops(t, d) for t, d in tree_shapes),
        decode=decode_flops(cfg.n_elements, cfg.n_bs_antennas),
        bcd=bcd_flops(cfg, bcd_settings),
    )


def format_flops_table(cfg: SystemConfig, report: FlopsBreakdown) -> str:
    ref = REFERENCE_FLOPS.get((cfg.n_ant_r, cfg.n_ant_t)) if cfg.n_bs_antennas == 8 else None

    def fmt_ref(key):
        return f"{ref[key] / 1e6:.4f}M" if ref else "-"

    lines = [
        f"FLOPs per inference (M={cfg.n_bs_antennas}, N={cfg.n_elements}, "
        f"N_r={cfg.n_ant_r}, N_t={cfg.n_ant_t})",
        f"{'scheme':<8}{'measured':>14}{'reference':>12}",
        f"{'BCD':<8}{report.bcd / 1e6:>13.4f}M{fmt_ref('bcd'):>12}",
        f"{'GL':<8}{report.gl / 1e6:>13.4f}M{fmt_ref('gl'):>12}",
        f"GL breakdown: saab={report.saab} trees={report.trees} decode={report.decode}",
        f"GL/BCD ratio: {report.ratio:.4f}",
        "convention: multiply-add 2 (real) / 8 (complex); compare 1; "
        "log2/sqrt/exp/atan2 10; d x d eigendecomposition 10 d^3; BCD at its iteration cap",
    ]
    return "\n".join(lines)
