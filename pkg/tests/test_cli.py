import json

import pytest

from starris_gl.cli import EXIT_CODES, main, parse_values

from helpers import small_overrides


def run(tmp_path, *args, extra=None):
    argv = list(args) + ["--out-dir", str(tmp_path), "--threads", "1"]
    for o in small_overrides(**(extra or {})):
        argv += ["--set", o]
    return main(argv)


@pytest.fixture(scope="module")
def trained(tmp_path_factory):
    d = tmp_path_factory.mktemp("cli")
    assert run(d, "gen-data", "--n", "12") == 0
    assert run(d, "train") == 0
    return d


def test_parse_values():
    assert parse_values("10..50") == [10, 20, 30, 40, 50]
    assert parse_values("0..1/0.5") == [0, 0.5, 1]
    assert parse_values("16,32") == [16, 32]


def test_selftest_exit_zero(capsys):
    assert main(["selftest"]) == 0
    out = capsys.readouterr().out
    assert "FAIL" not in out and out.count("PASS") >= 10


def test_flops_default_config(tmp_path, capsys):
    assert main(["flops", "--out-dir", str(tmp_path)]) == 0
    rows = dict(line.split(",") for line in (tmp_path / "flops.csv").read_text().splitlines()[2:])
    assert int(rows["gl"]) / int(rows["bcd"]) < 0.1
    assert "GL/BCD ratio" in capsys.readouterr().out
    assert (tmp_path / "manifest-flops.json").exists()


def test_gen_train_eval(trained):
    assert sorted(p.name for p in trained.glob("*.npz")) == ["dataset_test.npz", "dataset_train.npz", "model.npz"]
    assert run(trained, "eval", "--n-eval", "4") == 0
    summary = json.loads((trained / "eval.json").read_text())
    assert set(summary["means"]) == {"bcd", "gl", "random"} and summary["n"] == 4
    assert run(trained, "eval", "--data", str(trained / "dataset_test.npz")) == 0
    assert run(trained, "flops", "--model", str(trained / "model.npz")) == 0


def test_sweep_rows_and_byte_identical_rerun(trained):
    assert run(trained, "sweep", "power", "10..50", "--n-eval", "3") == 0
    path = trained / "sweep_power.csv"
    first = path.read_bytes()
    lines = first.decode().splitlines()
    manifest = json.loads((trained / "manifest-sweep-power.json").read_text())
    assert lines[0] == f"# manifest {manifest['manifest_id']}"
    assert len(lines) == 2 + 15
    assert run(trained, "sweep", "power", "10..50", "--n-eval", "3") == 0
    assert path.read_bytes() == first


def test_hash_mismatch_exit_code(trained, capsys):
    code = run(trained, "train", extra={"system.tx_power_dbm": 20})
    assert code == EXIT_CODES["hash_mismatch"] == 3
    err = json.loads(capsys.readouterr().err.strip().splitlines()[-1])
    assert err["error"] == "hash_mismatch"
    assert run(trained, "eval", extra={"channel.rician_k": 3}) == 3


def test_config_errors(tmp_path, capsys):
    assert main(["flops", "--out-dir", str(tmp_path), "--set", "gbdt.depth=3"]) == 2
    assert json.loads(capsys.readouterr().err)["error"] == "config"
    cfg = tmp_path / "c.yaml"
    cfg.write_text("system:\n  n_bs_antenna: 4\n")
    assert main(["flops", "--out-dir", str(tmp_path), "--config", str(cfg)]) == 2
    assert main(["sweep", "power", "a..b", "--out-dir", str(tmp_path)]) == EXIT_CODES["usage"]
    assert main(["train", "--out-dir", str(tmp_path / "empty")]) == EXIT_CODES["io"]


def test_out_dir_env(tmp_path, monkeypatch):
    target = tmp_path / "env_out"
    monkeypatch.setenv("STARRIS_GL_OUT", str(target))
    assert main(["flops", "--out-dir", str(tmp_path / "ignored")]) == 0
    assert (target / "flops.csv").exists()
    assert not (tmp_path / "ignored").exists()
