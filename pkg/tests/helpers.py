"""Shared test helpers: tiny configs and Saab stage inputs."""

import numpy as np

from starris_gl.config import RunConfig
from starris_gl.saab import STAGE_AXES, _fibres, to_real

SMALL = {
    "system.n_bs_antennas": 2, "system.ris_h": 2, "system.ris_v": 2,
    "sounding.n_amp_levels": 2, "bcd.max_iters": 5, "bcd.w_inner_iters": 5,
    "rft.n_select": 8, "gbdt.n_estimators": 5, "gbdt.max_depth": 2,
    "experiment.n_train": 24, "experiment.n_test": 8, "experiment.chunk_size": 10,
}


def small_config(**extra) -> RunConfig:
    return RunConfig().with_overrides({**SMALL, **extra})


def small_overrides(**extra) -> list[str]:
    return [f"{k}={v}" for k, v in {**SMALL, **extra}.items()]


def stage_inputs(saab, X) -> list[np.ndarray]:
    """Fibre matrices each fitted Saab stage saw at fit time."""
    X = to_real(X)
    out = []
    for stage, (_, axis) in zip(saab.stages_, STAGE_AXES):
        patches, moved = _fibres(X, axis)
        out.append(patches)
        coef = patches @ stage.anchors
        X = np.moveaxis(coef.reshape(moved[:-1] + (coef.shape[-1],)), -1, axis + 1)
    return out
