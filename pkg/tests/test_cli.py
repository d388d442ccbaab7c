import json

import numpy as np
import pytest

from branchmera import __version__
from branchmera.cli import main
from branchmera.config import ConfigError, RunConfig, parse_config


def run(argv, capsys):
    code = main(argv)
    out, err = capsys.readouterr()
    return code, out, err


def test_decouple_exact(tmp_path, capsys):
    code, out, _ = run(["--out", str(tmp_path), "decouple-exact", "--n", "8"], capsys)
    assert code == 0
    rec = json.loads((tmp_path / "decouple_exact.json").read_text())
    assert rec["residual"] < 1e-12 and rec["commutator_norm"] < 1e-12
    assert rec["block_A_is_ising"] and rec["block_B_is_ising"]
    assert rec["version"] == __version__ and len(rec["config_hash"]) == 16


def test_oracle_energy_and_files(tmp_path, capsys):
    code, _, _ = run(["--out", str(tmp_path), "oracle", "--model", "xx", "--mu", "0", "--entropy-max-L", "256"],
                     capsys)
    assert code == 0
    rec = json.loads((tmp_path / "oracle.json").read_text())
    assert abs(rec["energy_per_site"] + 1.2732395) < 1e-6
    assert rec["filling"] == pytest.approx(0.5)
    lines = (tmp_path / "oracle_entropy.csv").read_text().splitlines()
    assert lines[0].startswith("# config_hash=") and lines[1] == "L,S_L"
    assert "log2_L,S_L" in (tmp_path / "oracle_entropy_plot.csv").read_text()


def test_outputs_are_deterministic(tmp_path, capsys):
    a, b = tmp_path / "a", tmp_path / "b"
    for d in (a, b):
        run(["--out", str(d), "oracle", "--model", "ising", "--entropy-max-L", "64"], capsys)
    for name in ("oracle.json", "oracle_entropy.csv"):
        assert (a / name).read_bytes() == (b / name).read_bytes()


def test_env_var_overrides_output_dir(tmp_path, capsys, monkeypatch):
    monkeypatch.setenv("BRANCHMERA_OUT", str(tmp_path / "env"))
    code, _, _ = run(["--out", str(tmp_path / "flag"), "decouple-exact", "--n", "4"], capsys)
    assert code == 0
    assert (tmp_path / "env" / "decouple_exact.json").exists()
    assert not (tmp_path / "flag").exists()


def test_malformed_config_exit_2_without_artifacts(tmp_path, capsys):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text("model = xx\nchi_trunk = four\n")
    out = tmp_path / "out"
    code, _, err = run(["--out", str(out), "optimize", "--config", str(cfg)], capsys)
    assert code == 2
    rec = json.loads(err.strip())
    assert rec["exit_code"] == 2 and rec["error"] == "ConfigError"
    assert not out.exists()


def test_missing_seed_is_config_error(tmp_path, capsys):
    cfg = tmp_path / "noseed.cfg"
    cfg.write_text("model = ising\nbranching = false\n")
    code, _, err = run(["--out", str(tmp_path / "o"), "optimize", "--config", str(cfg)], capsys)
    assert code == 2 and "seed" in err


def test_size_cap_exit_4(tmp_path, capsys):
    code, _, err = run(["--out", str(tmp_path), "decouple-exact", "--n", "16"], capsys)
    assert code == 4
    assert json.loads(err)["error"] == "SizeLimitError"


def test_bad_flag_is_json_error(tmp_path, capsys):
    code, _, err = run(["oracle", "--model", "potts"], capsys)
    assert code == 2 and json.loads(err)["exit_code"] == 2


def test_parse_config_rules():
    cfg = parse_config("# run\nmodel = xx\nmu = 1.4142135623730951\ns_star_list = 1, 2,3\nseed = 4\n"
                       "swap_kind = bosonic\nbranching = no\n")
    assert cfg.s_star_list == [1, 2, 3] and cfg.seed == 4 and cfg.branching is False
    assert cfg.validate(need_seed=True) is cfg
    assert cfg.digest() == parse_config("model=xx\nmu=1.4142135623730951\ns_star_list=1,2,3\nseed=4\n"
                                        "swap_kind=bosonic\nbranching=false").digest()
    for text in ("model = xx\nmodel = ising", "colour = red", "just words", "mu = 9", "chi_trunk = 40",
                 "swap_kind = anyonic"):
        with pytest.raises(ConfigError):
            parse_config(text).validate()
    with pytest.raises(ConfigError):
        RunConfig().validate(need_seed=True)


def test_optimize_scaling_entropy_resume(tmp_path, capsys):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("model = xx\nmu = 0\nchi_trunk = 2\nchi_branch = 4\ns_star_list = 0\nsweeps = 3\n"
                   "branch_sweeps = 1\nseed = 7\n")
    out = tmp_path / "o"
    code, _, _ = run(["--out", str(out), "optimize", "--config", str(cfg)], capsys)
    assert code == 0
    rec = json.loads((out / "optimize.json").read_text())
    assert rec["best_s_star"] == 0 and len(rec["runs"][0]["trace"]) == 3
    assert rec["runs"][0]["residual_coupling"] < 1e-3
    ckpt = out / "state_s0.ckpt"
    assert ckpt.exists()
    code, _, _ = run(["--out", str(out), "scaling-dims", "--checkpoint", str(ckpt), "--n-ops", "4"], capsys)
    assert code == 0
    sd = json.loads((out / "scaling_dims.json").read_text())
    assert abs(sd["branches"]["A"][0]["delta"]) < 1e-8
    assert (out / "scaling_dims_plot.csv").exists()
    code, _, _ = run(["--out", str(out), "entropy", "--checkpoint", str(ckpt)], capsys)
    assert code == 0
    assert "branch,log2_L,S_L" in (out / "branch_entropy_plot.csv").read_text()
    out2 = tmp_path / "o2"
    code, _, _ = run(["--out", str(out2), "optimize", "--config", str(cfg), "--resume", str(ckpt)], capsys)
    assert code == 0
    rec2 = json.loads((out2 / "optimize.json").read_text())
    # the resumed run starts from the saved state, not from a fresh initialisation
    assert rec2["runs"][0]["trace"][0] < rec["runs"][0]["trace"][0]


def test_corrupt_checkpoint_exit_2(tmp_path, capsys):
    bad = tmp_path / "x.ckpt"
    bad.write_bytes(b"garbage")
    code, _, err = run(["--out", str(tmp_path), "scaling-dims", "--checkpoint", str(bad)], capsys)
    assert code == 2 and json.loads(err)["error"] == "CheckpointError"
