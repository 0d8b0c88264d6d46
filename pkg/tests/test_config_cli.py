import csv
import json
import subprocess
import sys

import numpy as np
import pytest

from cfbeam.cli import main
from cfbeam.config import ConfigError, apply_overrides, config_from_dict, config_to_dict, load_config

SMALL = ["M=6", "K=2", "N_s=20", "T_max=3", "n_drops=1", "T_values=[1,3]", "N_D_values=[1]",
         "estimators=[mco]"]


def test_defaults_without_file():
    cfg = load_config()
    assert cfg.params.M == 50 and cfg.n_drops == 100


def test_sections_and_overrides(tmp_path):
    path = tmp_path / "c.yaml"
    path.write_text("scenario: {M: 20, K: 3}\nprotocol: {Q: 8}\n"
                    "propagation: {shadowing: false}\nrun: {n_drops: 4, T_values: [1, 2]}\n")
    cfg = load_config(path, ["K=5", "run.seed=9", "exponent_nlos=3.0"])
    assert (cfg.params.M, cfg.params.K, cfg.params.D) == (20, 5, 16)
    assert cfg.params.propagation.shadowing is False
    assert cfg.params.propagation.exponent_nlos == 3.0
    assert cfg.n_drops == 4 and cfg.T_values == (1, 2) and cfg.seed == 9


def test_config_roundtrip():
    cfg = load_config(None, ["M=20", "T_values=[1,5]"])
    assert config_from_dict(config_to_dict(cfg)) == cfg


@pytest.mark.parametrize("overrides", [["bogus=1"], ["M"], ["M=0"], ["run.colour=red"]])
def test_config_errors(overrides):
    with pytest.raises(ConfigError):
        load_config(None, overrides)


def test_missing_and_malformed_file(tmp_path):
    with pytest.raises(ConfigError):
        load_config(tmp_path / "nope.yaml")
    bad = tmp_path / "bad.yaml"
    bad.write_text("scenario: [unclosed\n")
    with pytest.raises(ConfigError):
        load_config(bad)


def test_apply_overrides_does_not_mutate():
    data = {"scenario": {"M": 3}}
    apply_overrides(data, ["M=4"])
    assert data == {"scenario": {"M": 3}}


def test_cli_run_writes_outputs(tmp_path, capsys):
    args = ["run", "--quiet", "--out", str(tmp_path)]
    for item in SMALL:
        args += ["--set", item]
    assert main(args) == 0
    rows = list(csv.DictReader(open(tmp_path / "stats.csv", encoding="utf-8")))
    assert len(rows) == 4  # two assignments x two T values
    assert json.loads((tmp_path / "config.json").read_text())["params"]["M"] == 6
    assert "mco,lb" in capsys.readouterr().out


def test_cli_run_uses_env_output_dir(tmp_path, monkeypatch):
    monkeypatch.setenv("CFBEAM_OUTPUT_DIR", str(tmp_path / "env"))
    args = ["run", "--quiet"]
    for item in SMALL:
        args += ["--set", item]
    assert main(args) == 0
    assert (tmp_path / "env" / "stats.json").exists()


def test_cli_assign_and_export(tmp_path):
    pos = tmp_path / "pos.json"
    pos.write_text(json.dumps(np.random.default_rng(0).uniform(0, 400, (50, 2)).tolist()))
    out = tmp_path / "assign.json"
    assert main(["assign-patterns", "--positions", str(pos), "--D", "8", "--out", str(out)]) == 0
    data = json.loads(out.read_text())
    assert data["D"] == 8 and len(data["pattern_of"]) == 50
    assert main(["assign-patterns", "--positions", str(pos), "--D", "8", "--mode", "ra",
                 "--out", str(out)]) == 0

    stats = tmp_path / "stats.json"
    stats.write_text(json.dumps({"rows": []}))
    assert main(["export", "--stats", str(stats), "--out", str(tmp_path / "s.csv")]) == 0
    assert (tmp_path / "s.csv").read_text().startswith("estimator,")


def test_cli_truth(tmp_path, capsys):
    assert main(["truth", "--set", "M=6", "--set", "K=2", "--set", "N_s=20", "--drop", "1",
                 "--out", str(tmp_path)]) == 0
    doc = json.loads((tmp_path / "truth_drop1.json").read_text())
    assert set(doc) == {"drop_index", "drop", "geometry", "assignment", "truth"}
    assert np.array(doc["truth"]["ap"]).shape == (2, 8)


def test_cli_errors_return_nonzero(tmp_path, capsys):
    assert main(["run", "--config", str(tmp_path / "missing.yaml")]) != 0
    assert "error" in capsys.readouterr().err
    assert main(["export", "--stats", str(tmp_path / "none.json"), "--out", "x.csv"]) != 0
    assert main(["run", "--set", "nonsense=1"]) != 0


def test_console_entry_point():
    proc = subprocess.run([sys.executable, "-m", "cfbeam.cli", "--help"], capture_output=True,
                          text=True)
    assert proc.returncode == 0 and "assign-patterns" in proc.stdout
