import pytest

from starris_gl.config import ConfigError, RunConfig, dbm_to_watt, dump_config, load_config, watt_to_dbm


def test_dbm_conversion_fixed_points():
    assert dbm_to_watt(30.0) == 1.0
    assert dbm_to_watt(-100.0) == pytest.approx(1e-13, rel=1e-12)
    assert watt_to_dbm(1.0) == 30.0


def test_defaults_power_levels():
    s = RunConfig().system
    assert s.tx_power == 1.0
    assert s.noise_power == pytest.approx(1e-13, rel=1e-12)
    assert s.pilot_noise_power == s.noise_power
    assert s.n_elements == 16 and s.n_pilots == 2


def test_unknown_keys_are_errors(tmp_path):
    p = tmp_path / "c.yaml"
    p.write_text("system:\n  n_bs_antenas: 4\n")
    with pytest.raises(ConfigError, match="n_bs_antenas"):
        load_config(p)
    with pytest.raises(ConfigError):
        RunConfig().with_overrides(["gbdt.depth=3"])
    with pytest.raises(ConfigError):
        RunConfig.from_dict({"sytem": {}})


def test_overrides_parse_yaml_scalars():
    cfg = RunConfig().with_overrides(["system.tx_power_dbm=40", "rft.shared=true", "bcd.objective=min_rate"])
    assert cfg.system.tx_power_dbm == 40
    assert cfg.rft.shared is True
    assert cfg.bcd.objective == "min_rate"


def test_invalid_values_rejected():
    with pytest.raises(ConfigError):
        RunConfig().with_overrides(["bcd.objective=max_rate"])
    with pytest.raises(ConfigError):
        RunConfig().with_overrides(["system.n_streams=2"])
    with pytest.raises(ConfigError):
        RunConfig().with_overrides(["saab.energy_threshold=0"])


def test_roundtrip_and_hashes(tmp_path):
    cfg = RunConfig().with_overrides(["system.ris_h=2", "gbdt.max_depth=3"])
    p = tmp_path / "c.yaml"
    dump_config(cfg, p)
    back = load_config(p)
    assert back == cfg
    assert back.hash() == cfg.hash()
    # learner settings do not change the data hash, system settings do
    assert cfg.with_overrides(["gbdt.max_depth=5"]).data_hash() == cfg.data_hash()
    assert cfg.with_overrides(["system.tx_power_dbm=20"]).data_hash() != cfg.data_hash()
