import csv
import json
import subprocess
import sys

import pytest

from fwdwick.cli import main, parse_config_file
from fwdwick.errors import ConfigError


def _rows(path):
    lines = path.read_text().splitlines()
    assert lines[0].startswith("# fwdwick ")
    return list(csv.DictReader(lines[1:]))


def test_kernels_csv(tmp_path, capsys):
    assert main(["kernels", "--hurst", "0.7", "--out", str(tmp_path)]) == 0
    rows = {r["name"]: r for r in _rows(tmp_path / "kernels.csv")}
    for t in ("0.5", "1", "2"):
        assert float(rows[f"K1_diag_t={t}"]["residual"]) < 1e-8
    assert float(rows["K1_diag_t=1"]["value"]) == pytest.approx(2.5, rel=1e-12)
    # 17 significant digits
    assert len(rows["A"]["value"].replace(".", "").replace("-", "").lstrip("0")) >= 16


def test_kernels_json(tmp_path, capsys):
    assert main(["kernels", "--hurst", "0.75", "--json", "--out", str(tmp_path)]) == 0
    payload = json.loads(capsys.readouterr().out)
    assert len(payload["identity_residuals"]) == 2
    assert max(payload["identity_residuals"]) < 1e-10


def test_bad_hurst_exit_2(tmp_path):
    assert main(["kernels", "--hurst", "0.4", "--out", str(tmp_path)]) == 2


def test_unknown_flag_exit_2(tmp_path):
    assert main(["kernels", "--bogus", "1"]) == 2


def test_env_var_sets_output_dir(tmp_path, monkeypatch):
    monkeypatch.setenv("FWDWICK_OUT", str(tmp_path / "env"))
    assert main(["kernels"]) == 0
    assert (tmp_path / "env" / "kernels.csv").exists()
    assert (tmp_path / "env" / "kernels-manifest.json").exists()


def test_config_file_and_flag_precedence(tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("# comment\nhurst = 0.4\nreplicates=50\n")
    assert main(["kernels", "--config", str(cfg), "--out", str(tmp_path)]) == 2
    assert main(["kernels", "--config", str(cfg), "--hurst", "0.8", "--out", str(tmp_path)]) == 0
    man = json.loads((tmp_path / "kernels-manifest.json").read_text())
    assert man["settings"]["hurst"] == "0.80000000000000004"


def test_config_file_errors(tmp_path):
    p = tmp_path / "bad.cfg"
    p.write_text("colour = blue\n")
    with pytest.raises(ConfigError):
        parse_config_file(p)
    p.write_text("hurst 0.7\n")
    with pytest.raises(ConfigError):
        parse_config_file(p)
    assert main(["kernels", "--config", str(tmp_path / "missing.cfg")]) == 2


def _simulate(out, *extra):
    return main(["simulate", "--process", "fbm", "--replicates", "400", "--spacing", "0.0125",
                 "--seed", "42", "--out", str(out), *extra])


def test_simulate_is_byte_reproducible(tmp_path):
    assert _simulate(tmp_path / "a", "--oracle") in (0, 1)
    assert _simulate(tmp_path / "b", "--oracle") in (0, 1)
    a = (tmp_path / "a" / "simulate.csv").read_bytes()
    assert a == (tmp_path / "b" / "simulate.csv").read_bytes()
    sources = {r["source"] for r in _rows(tmp_path / "a" / "simulate.csv")}
    assert sources == {"grid", "grid_exact", "oracle"}


def test_simulate_budget_violation_exit_3(tmp_path):
    assert _simulate(tmp_path, "--left-cut=-5") == 3


def test_simulate_oracle_needs_fbm(tmp_path):
    assert main(["simulate", "--process", "rosenblatt", "--oracle", "--replicates", "10",
                 "--spacing", "0.05", "--out", str(tmp_path)]) == 2


def test_verify_ito_empty_interval(tmp_path):
    code = main(["verify-ito", "--a", "0.5", "--b", "0.5", "--eps-ladder", "0.2,0.1",
                 "--replicates", "20", "--out", str(tmp_path)])
    assert code == 0
    rows = _rows(tmp_path / "verify-ito.csv")
    assert all(float(r["mean"] or 0) == 0 and float(r["rms"] or 0) == 0 for r in rows)


def test_verify_ito_rosenblatt_term_columns(tmp_path):
    code = main(["verify-ito", "--process", "rosenblatt", "--f", "x3", "--eps-ladder", "0.2,0.1",
                 "--replicates", "100", "--chunk", "50", "--out", str(tmp_path)])
    assert code in (0, 1)
    terms = {r["term"] for r in _rows(tmp_path / "verify-ito.csv")}
    assert {"wick2", "div_l", "trace_h", "trace_kappa3", "trace_e", "lhs", "rhs"} <= terms
    summary = json.loads((tmp_path / "verify-ito-summary.json").read_text())
    assert "kappa3_term" in summary["checks"]


def test_verify_ito_config_errors(tmp_path):
    assert main(["verify-ito", "--eps-ladder", "0.1,0.2", "--out", str(tmp_path)]) == 2
    assert main(["verify-ito", "--f", "nope", "--out", str(tmp_path)]) == 2
    assert main(["verify-ito", "--process", "rosenblatt", "--left-cut=-50", "--out", str(tmp_path)]) == 3


def test_module_entry_point(tmp_path):
    res = subprocess.run([sys.executable, "-m", "fwdwick.cli", "kernels", "--out", str(tmp_path)],
                         capture_output=True, text=True)
    assert res.returncode == 0
    assert "K1_diag_t=1" in res.stdout
