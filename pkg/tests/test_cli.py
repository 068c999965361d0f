"""Command-line interface tests: merging, artifacts, exit codes."""

import json
import os

import pytest

from infolim.cli import main

FAST = ["--n-paths", "80", "--horizon", "4.0", "--dt", "0.002"]


def run_fast(tmp_path, *extra):
    out = str(tmp_path / "out")
    code = main(["run", "--experiment", "capacity_thm43", *FAST,
                 "--output-dir", out, *extra])
    return code, out


def test_list_prints_registry(capsys):
    assert main(["list"]) == 0
    text = capsys.readouterr().out
    for name in ("appendix_a", "capacity_thm43", "bode_lemma310",
                 "filt_lemma46_expansion"):
        assert name in text


def test_run_writes_artifacts(tmp_path, capsys):
    code, out = run_fast(tmp_path)
    assert code == 0
    captured = capsys.readouterr()
    assert "[PASS]" in captured.out
    assert "capacity_thm43: PASS" in captured.out
    assert os.path.isfile(os.path.join(out, "report.txt"))
    assert os.path.isfile(os.path.join(out, "report.csv"))
    series = os.listdir(os.path.join(out, "series"))
    assert series and all(f.endswith(".csv") for f in series)
    figures = os.listdir(os.path.join(out, "figures"))
    assert figures and all(f.endswith(".png") for f in figures)
    with open(os.path.join(out, "report.csv")) as fh:
        header = fh.readline().strip()
    assert header == "experiment,kind,name,value"


def test_dump_paths(tmp_path):
    code, out = run_fast(tmp_path, "--dump-paths", "2")
    assert code == 0
    paths = sorted(os.listdir(os.path.join(out, "paths")))
    assert paths == ["capacity_thm43_0.csv", "capacity_thm43_1.csv"]


def test_report_csv_deterministic_across_workers(tmp_path):
    _, out1 = run_fast(tmp_path / "a", "--workers", "1")
    _, out2 = run_fast(tmp_path / "b", "--workers", "3")
    with open(os.path.join(out1, "report.csv"), "rb") as fh:
        blob1 = fh.read()
    with open(os.path.join(out2, "report.csv"), "rb") as fh:
        blob2 = fh.read()
    assert blob1 == blob2


def test_flags_override_config(tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({
        "experiment": "capacity_thm43",
        "params": {"n_paths": 40},
        "grid": {"horizon": 4.0, "dt": 0.002},
    }))
    out = str(tmp_path / "out")
    code = main(["run", "--config", str(cfg), "--n-paths", "80",
                 "--output-dir", out])
    assert code == 0
    with open(os.path.join(out, "report.txt")) as fh:
        text = fh.read()
    assert "n_paths = 80" in text
    assert "horizon = 4" in text


def test_env_var_sets_base_dir(tmp_path, monkeypatch):
    monkeypatch.setenv("INFOLIM_OUTPUT_DIR", str(tmp_path / "base"))
    monkeypatch.chdir(tmp_path)
    code = main(["run", "--experiment", "capacity_thm43", *FAST])
    assert code == 0
    assert os.path.isfile(
        str(tmp_path / "base" / "capacity_thm43" / "report.csv"))


def test_exit_code_config_errors(tmp_path, capsys):
    assert main(["run", "--experiment", "no_such_thing"]) == 2
    assert "error:" in capsys.readouterr().err

    assert main(["run"]) == 2
    assert "no experiment selected" in capsys.readouterr().err

    bad = tmp_path / "bad.json"
    bad.write_text('{"experiment": "capacity_thm43",}')
    assert main(["run", "--config", str(bad)]) == 2
    err = capsys.readouterr().err
    assert "line" in err and "column" in err

    unknown = tmp_path / "unknown.json"
    unknown.write_text(json.dumps({"experiment": "capacity_thm43",
                                   "grids": {}}))
    assert main(["run", "--config", str(unknown)]) == 2

    assert main(["run", "--experiment", "appendix_a",
                 "--epsilons", "0.1"]) == 2


def test_exit_code_power_violation(tmp_path, capsys):
    code, _ = run_fast(tmp_path, "--n-paths", "200")
    assert code == 0
    out = str(tmp_path / "viol")
    code = main(["run", "--experiment", "capacity_thm43", "--n-paths", "200",
                 "--horizon", "4.0", "--dt", "0.002", "--output-dir", out])
    capsys.readouterr()
    code = main(["run", "--config", str(_write_tight_budget(tmp_path)),
                 "--output-dir", out])
    assert code == 1
    assert "assertion failed" in capsys.readouterr().err


def _write_tight_budget(tmp_path):
    cfg = tmp_path / "tight.json"
    cfg.write_text(json.dumps({
        "experiment": "capacity_thm43",
        "params": {"n_paths": 200, "budget_margin": 0.1},
        "grid": {"horizon": 4.0, "dt": 0.002},
    }))
    return cfg


def test_exit_code_numerical(tmp_path, capsys):
    out = str(tmp_path / "num")
    code = main(["run", "--experiment", "appendix_a", "--alpha", "1.0",
                 "--k", "0.5", "--n-paths", "8", "--output-dir", out])
    assert code == 3
    assert "numerical breakdown" in capsys.readouterr().err
