import csv
import json
import subprocess
import sys

import pytest

from branchflow.cli import ConfigError, main, parse_config, run


def test_defaults():
    cfg = parse_config(["solve"])
    assert (cfg.eps, cfg.s, cfg.T, cfg.N, cfg.M, cfg.L, cfg.tol) == (0.1, 0.05, 0.1, 32, 17, 8.0, 1e-8)
    assert cfg.grid_ladder == [32, 48, 64] and cfg.seed == 0


def test_eps_cap_rejected():
    with pytest.raises(ConfigError, match="eps=0.3"):
        parse_config(["solve", "--eps", "0.3"])


def test_errors_are_aggregated():
    with pytest.raises(ConfigError) as err:
        parse_config(["solve", "--eps", "0.3", "--N", "7", "--T", "0.01"])
    assert len(err.value.problems) >= 3


def test_flag_beats_file(tmp_path):
    path = tmp_path / "c.json"
    path.write_text(json.dumps({"N": 64, "M": 9, "grid-ladder": [16, 24]}))
    cfg = parse_config(["solve", "--N", "32", "--config", str(path)])
    assert cfg.N == 32 and cfg.M == 9 and cfg.grid_ladder == [16, 24]


def test_unknown_file_key(tmp_path):
    path = tmp_path / "c.json"
    path.write_text(json.dumps({"N": 16, "bogus": 1}))
    with pytest.raises(ConfigError, match="bogus"):
        parse_config(["solve"], file=str(path))


def test_grid_ladder_flag():
    assert parse_config(["witness", "--grid-ladder", "16,24"]).grid_ladder == [16, 24]


def test_main_reports_config_errors(capsys):
    assert main(["solve", "--eps", "0.3"]) == 1
    assert "eps=0.3" in capsys.readouterr().err


def test_integral_bound(tmp_path, capsys):
    code = run(parse_config(["integral-bound", "--delta", "0.1", "--out", str(tmp_path)]))
    assert code == 0
    out = capsys.readouterr().out
    assert "I(0.1) = 0.00683559118" in out
    assert "I(0.1)/0.1 = 0.0683559118" in out
    assert (tmp_path / "config.json").exists()


def test_env_var_overrides_out(tmp_path, monkeypatch):
    target = tmp_path / "env_out"
    monkeypatch.setenv("BRANCHFLOW_OUT", str(target))
    assert run(parse_config(["integral-bound", "--out", str(tmp_path / "ignored")])) == 0
    echoed = json.loads((target / "config.json").read_text())
    assert echoed["out"] == str(target)
    assert not (tmp_path / "ignored").exists()


def test_check_data(tmp_path):
    assert run(parse_config(["check-data", "--N", "32", "--out", str(tmp_path)])) == 0
    rows = list(csv.DictReader(open(tmp_path / "check_data.csv")))
    groups = {r["group"] for r in rows}
    assert {"divergence", "vorticity", "decay", "scaling"} <= groups
    slope = next(float(r["value"]) for r in rows if r["name"] == "fitted_slope")
    assert slope == pytest.approx(-0.2, abs=0.15)
    assert (tmp_path / "h_c2.bin").exists()


def test_solve_zero_data(tmp_path):
    assert run(parse_config(["solve", "--amplitude", "0", "--N", "16", "--out", str(tmp_path)])) == 0
    summary = json.loads((tmp_path / "summary.json").read_text())
    assert summary["converged"] and summary["terminal_composite"] == 0.0


def test_solve_reproducible(tmp_path):
    args = ["solve", "--kind", "smooth", "--N", "16", "--M", "9"]
    assert run(parse_config(args + ["--out", str(tmp_path / "a")])) == 0
    assert run(parse_config(args + ["--out", str(tmp_path / "b")])) == 0
    for name in ("contraction.csv", "residual.csv", "norms_terminal.csv"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_reverse_and_planar(tmp_path):
    assert run(parse_config(["solve", "--kind", "smooth", "--reverse", "--N", "16", "--out", str(tmp_path / "r")])) == 0
    assert json.loads((tmp_path / "r" / "summary.json").read_text())["residual_max_sup"] <= 1e-7
    with pytest.warns(UserWarning):
        assert run(parse_config(["solve", "--kind", "planar", "--N", "16", "--out", str(tmp_path / "p")])) == 0
    assert json.loads((tmp_path / "p" / "summary.json").read_text())["omega3_max"] <= 1e-10


def test_contraction_failure_exit_code(tmp_path):
    cfg = parse_config(["contraction", "--kind", "smooth", "--amplitude", "20000", "--N", "16",
                        "--out", str(tmp_path)])
    assert run(cfg) == 2
    assert json.loads((tmp_path / "summary.json").read_text())["admissible"] is False
    assert (tmp_path / "contraction_attempt0.csv").exists()


def test_contraction_success(tmp_path):
    assert run(parse_config(["contraction", "--kind", "smooth", "--N", "16", "--out", str(tmp_path)])) == 0
    summary = json.loads((tmp_path / "summary.json").read_text())
    assert summary["contraction_ok"] and summary["T"] == 0.1


def test_witness_planar_rejected():
    with pytest.raises(ConfigError, match="three-dimensional"):
        parse_config(["witness", "--kind", "planar"])


def test_console_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "branchflow.cli", "integral-bound", "--delta", "1",
                           "--out", str(tmp_path)], capture_output=True, text=True)
    assert proc.returncode == 0
    assert "I(1) =" in proc.stdout
