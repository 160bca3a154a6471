"""Run configuration: system geometry, channel statistics and learner settings.

Config files are YAML with one nested section per dataclass below. Power
values are given in dBm in the file and converted to linear watts with

    watts = 10 ** ((dBm - 30) / 10)

so 30 dBm is exactly 1 W and -100 dBm is 1e-13 W.

Naming note: the Rician factor is ``channel.rician_k`` and the number of
amplitude levels swept during pilot sounding is ``sounding.n_amp_levels``.
The two are unrelated even though the literature writes both as ``K``.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np
import yaml


class ConfigError(ValueError):
    """Invalid or unknown configuration values."""


def dbm_to_watt(dbm: float) -> float:
    return 10.0 ** ((dbm - 30.0) / 10.0)


def watt_to_dbm(watt: float) -> float:
    return 10.0 * np.log10(watt) + 30.0


@dataclass(frozen=True)
class SystemConfig:
    """Antenna counts, positions (meters) and power levels of one deployment."""

    n_bs_antennas: int = 8
    n_ant_r: int = 1
    n_ant_t: int = 1
    ris_h: int = 4
    ris_v: int = 4
    bs_pos: tuple = (0.0, 20.0, 0.0)
    ris_pos: tuple = (0.0, 0.0, 0.0)
    user_r_pos: tuple = (5.0, 10.0, 0.0)
    user_t_pos: tuple = (-5.0, -10.0, 0.0)
    tx_power_dbm: float = 30.0
    noise_dbm: float = -100.0
    # uplink pilot noise; None falls back to the downlink noise level
    pilot_noise_dbm: float | None = None
    # transmit pilot SNR (pilot power / uplink noise, before path loss);
    # None means unit pilot power per antenna per symbol
    pilot_snr_db: float | None = None
    n_streams: int = 1

    def __post_init__(self):
        for name in ("bs_pos", "ris_pos", "user_r_pos", "user_t_pos"):
            pos = tuple(float(v) for v in getattr(self, name))
            if len(pos) != 3:
                raise ConfigError(f"system.{name} must have 3 coordinates")
            object.__setattr__(self, name, pos)
        for name in ("n_bs_antennas", "n_ant_r", "n_ant_t", "ris_h", "ris_v"):
            if int(getattr(self, name)) < 1:
                raise ConfigError(f"system.{name} must be >= 1")
        if self.n_streams != 1:
            raise ConfigError("only single-stream broadcast (n_streams=1) is supported")

    @property
    def n_elements(self) -> int:
        return self.ris_h * self.ris_v

    @property
    def n_pilots(self) -> int:
        return self.n_ant_r + self.n_ant_t

    @property
    def tx_power(self) -> float:
        return dbm_to_watt(self.tx_power_dbm)

    @property
    def noise_power(self) -> float:
        return dbm_to_watt(self.noise_dbm)

    @property
    def pilot_noise_power(self) -> float:
        if self.pilot_noise_dbm is None:
            return self.noise_power
        return dbm_to_watt(self.pilot_noise_dbm)

    @property
    def pilot_power(self) -> float:
        if self.pilot_snr_db is None:
            return 1.0
        return self.pilot_noise_power * 10.0 ** (self.pilot_snr_db / 10.0)


@dataclass(frozen=True)
class ChannelParams:
    rician_k: float = 10.0
    n_paths_bs: int = 5
    n_paths_r: int = 5
    n_paths_t: int = 5
    ref_gain: float = 0.1
    ref_distance: float = 1.0
    pathloss_exp: float = 2.0

    def __post_init__(self):
        if self.rician_k < 0:
            raise ConfigError("channel.rician_k must be >= 0")
        if min(self.n_paths_bs, self.n_paths_r, self.n_paths_t) < 1:
            raise ConfigError("path counts must be >= 1")
        if self.ref_distance <= 0:
            raise ConfigError("channel.ref_distance must be > 0")


@dataclass(frozen=True)
class SoundingSettings:
    n_amp_levels: int = 4


@dataclass(frozen=True)
class BcdSettings:
    objective: str = "sum_rate"
    max_iters: int = 30
    rel_tol: float = 1e-4
    phase_grid: int = 16
    amp_grid: int = 8
    step_init: float = 1.0
    shrink: float = 0.5
    max_backtracks: int = 30
    w_inner_iters: int = 20

    def __post_init__(self):
        if self.objective not in ("sum_rate", "min_rate"):
            raise ConfigError(f"bcd.objective must be sum_rate or min_rate, got {self.objective!r}")
        if self.max_iters < 1:
            raise ConfigError("bcd.max_iters must be >= 1")
        if self.rel_tol <= 0:
            raise ConfigError("bcd.rel_tol must be > 0")


@dataclass(frozen=True)
class SaabSettings:
    energy_threshold: float = 0.995
    bias_mode: str = "none"

    def __post_init__(self):
        if not 0 < self.energy_threshold <= 1:
            raise ConfigError("saab.energy_threshold must be in (0, 1]")
        if self.bias_mode not in ("none", "nonneg"):
            raise ConfigError("saab.bias_mode must be none or nonneg")


@dataclass(frozen=True)
class RftSettings:
    n_thresholds: int = 16
    n_select: int = 256
    shared: bool = False


@dataclass(frozen=True)
class GbdtParams:
    n_estimators: int = 200
    max_depth: int = 4
    learning_rate: float = 0.1
    reg_lambda: float = 1.0
    gamma: float = 0.0
    subsample: float = 0.8
    colsample: float = 0.8
    min_child_weight: float = 1.0


@dataclass(frozen=True)
class ExperimentSettings:
    n_train: int = 2000
    n_test: int = 500
    val_fraction: float = 0.1
    seed: int = 2024
    chunk_size: int = 250
    retrain_power: bool = False
    retrain_elements: bool = True
    retrain_distance: bool = True


_SECTIONS = {
    "system": SystemConfig,
    "channel": ChannelParams,
    "sounding": SoundingSettings,
    "bcd": BcdSettings,
    "saab": SaabSettings,
    "rft": RftSettings,
    "gbdt": GbdtParams,
    "experiment": ExperimentSettings,
}


@dataclass(frozen=True)
class RunConfig:
    system: SystemConfig = field(default_factory=SystemConfig)
    channel: ChannelParams = field(default_factory=ChannelParams)
    sounding: SoundingSettings = field(default_factory=SoundingSettings)
    bcd: BcdSettings = field(default_factory=BcdSettings)
    saab: SaabSettings = field(default_factory=SaabSettings)
    rft: RftSettings = field(default_factory=RftSettings)
    gbdt: GbdtParams = field(default_factory=GbdtParams)
    experiment: ExperimentSettings = field(default_factory=ExperimentSettings)

    @classmethod
    def from_dict(cls, data: dict | None) -> "RunConfig":
        data = data or {}
        unknown = set(data) - set(_SECTIONS)
        if unknown:
            raise ConfigError(f"unknown config section(s): {sorted(unknown)}")
        kwargs = {}
        for name, klass in _SECTIONS.items():
            section = data.get(name) or {}
            allowed = {f.name for f in dataclasses.fields(klass)}
            bad = set(section) - allowed
            if bad:
                raise ConfigError(f"unknown key(s) in [{name}]: {sorted(bad)}")
            kwargs[name] = klass(**section)
        return cls(**kwargs)

    def to_dict(self) -> dict:
        out = {}
        for name in _SECTIONS:
            section = dataclasses.asdict(getattr(self, name))
            out[name] = {k: list(v) if isinstance(v, tuple) else v for k, v in section.items()}
        return out

    def replace(self, **sections) -> "RunConfig":
        return dataclasses.replace(self, **sections)

    def with_overrides(self, overrides: list[str] | dict[str, Any]) -> "RunConfig":
        """Apply ``section.key=value`` overrides; values are parsed as YAML scalars."""
        data = self.to_dict()
        items = overrides.items() if isinstance(overrides, dict) else (_split_override(o) for o in overrides)
        for path, value in items:
            parts = path.split(".")
            if len(parts) != 2:
                raise ConfigError(f"override key must be section.key, got {path!r}")
            section, key = parts
            if section not in data:
                raise ConfigError(f"unknown config section {section!r}")
            if key not in data[section]:
                raise ConfigError(f"unknown key {key!r} in [{section}]")
            data[section][key] = value
        return RunConfig.from_dict(data)

    def hash(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]

    def data_hash(self) -> str:
        """Hash of the sections that determine generated tensors and labels."""
        d = self.to_dict()
        d = {k: d[k] for k in ("system", "channel", "sounding", "bcd")}
        blob = json.dumps(d, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]


def _split_override(text: str) -> tuple[str, Any]:
    if "=" not in text:
        raise ConfigError(f"override must look like key.path=value, got {text!r}")
    key, raw = text.split("=", 1)
    return key.strip(), yaml.safe_load(raw)


def load_config(path: str | Path | None = None, overrides=None) -> RunConfig:
    data = {}
    if path is not None:
        with open(path) as fh:
            data = yaml.safe_load(fh) or {}
        if not isinstance(data, dict):
            raise ConfigError(f"{path}: top level must be a mapping")
    cfg = RunConfig.from_dict(data)
    if overrides:
        cfg = cfg.with_overrides(overrides)
    return cfg


def dump_config(cfg: RunConfig, path: str | Path) -> None:
    with open(path, "w") as fh:
        yaml.safe_dump(cfg.to_dict(), fh, sort_keys=False)
