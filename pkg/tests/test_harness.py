import csv
import json
import os

import pytest

from ssepglauber.cli import main
from ssepglauber.errors import BudgetExceededError, ConfigError, UnknownPresetError
from ssepglauber.presets import (
    EXIT_CONFIG,
    EXIT_IDENTITY,
    EXIT_OK,
    EXIT_STATISTICAL,
    exit_code_for,
    parse_config,
    run_preset,
)


def test_parse_config():
    text = """
    # model
    n = 8
    lambda = 0.1   # interaction
    t_grid = 0.25, 0.5, 1
    name = exact
    flag = true
    """
    cfg = parse_config(text)
    assert cfg == {"n": 8, "lambda": 0.1, "t_grid": [0.25, 0.5, 1], "name": "exact", "flag": True}
    with pytest.raises(ConfigError):
        parse_config("n 8")


def test_exit_codes():
    ok = {"pass": True, "kind": "identity"}
    stat = {"pass": False, "kind": "statistical"}
    ident = {"pass": False, "kind": "identity"}
    assert exit_code_for([ok]) == EXIT_OK
    assert exit_code_for([ok, stat]) == EXIT_STATISTICAL
    assert exit_code_for([stat, ident]) == EXIT_IDENTITY


def test_unknown_preset():
    with pytest.raises(UnknownPresetError):
        run_preset("nope", {}, out_root=None)


def test_budget_exceeded():
    with pytest.raises(BudgetExceededError):
        run_preset("clt1d", {"event_budget": 1000}, out_root=None)


def test_exact_suite_run_directory(tmp_path):
    m = run_preset("exact-suite", {"n": 8, "samples": 200}, out_root=str(tmp_path))
    assert m.exit_code == EXIT_OK
    assert os.path.basename(m.run_dir).startswith("exact-suite-") and m.run_dir.endswith("-s0")
    data = json.loads(open(os.path.join(m.run_dir, "manifest.json")).read())
    for key in ("preset", "parameters", "master_seed", "replicas", "tool_version",
                "wall_clock_seconds", "event_count", "criteria", "exit_code"):
        assert key in data
    names = {c["name"] for c in data["criteria"]}
    assert {"adjoint_identity", "exclusion_detailed_balance", "carre_du_champ_identity"} <= names
    with open(os.path.join(m.run_dir, "results.csv")) as fh:
        rows = list(csv.DictReader(fh))
    assert rows and rows[0]["check"] == "identities"


def test_rerun_reproduces_report(tmp_path):
    a = run_preset("correlation", {"n": [4, 5, 6]}, out_root=None)
    b = run_preset("correlation", {"n": [4, 5, 6]}, out_root=None)
    assert [c["statistic"] for c in a.criteria] == [c["statistic"] for c in b.criteria]


def test_small_simulation_preset_is_reproducible(tmp_path):
    cfg = {"n": 16, "replicas": 30, "t_grid": [0.5, 1.0], "seed": 5}
    a = run_preset("additive", cfg, out_root=str(tmp_path))
    b = run_preset("additive", cfg, out_root=None)
    assert a.criteria[0]["statistic"] == b.criteria[0]["statistic"]
    assert a.event_count == b.event_count > 0
    assert a.master_seed == 5 and a.replicas == 30


def test_greens_preset_plotdata(tmp_path):
    m = run_preset("greens", {"d": 2, "n": [32, 64]}, out_root=str(tmp_path))
    assert os.path.exists(os.path.join(m.run_dir, "plotdata", "rw_limit.csv"))


def test_cli_run_and_report(tmp_path, capsys):
    cfg = tmp_path / "c.txt"
    cfg.write_text("n = 6\nsamples = 100\n")
    code = main(["run", "exact-suite", "--config", str(cfg), "--set", "lambda=0.2", "--out", str(tmp_path)])
    assert code == 0
    out = capsys.readouterr().out
    run_dir = out.strip().splitlines()[-1].split(": ", 1)[1]
    assert main(["report", run_dir]) == 0
    assert "PASS" in capsys.readouterr().out


def test_cli_config_errors(capsys):
    assert main(["run", "nope"]) == EXIT_CONFIG
    assert main(["run", "exact-suite", "--set", "novalue"]) == EXIT_CONFIG


def test_cli_greens_and_flow(tmp_path, capsys):
    out = tmp_path / "g.csv"
    assert main(["greens", "--n", "3", "--d", "1", "--out", str(out)]) == 0
    rows = list(csv.reader(open(out)))
    assert rows[0] == ["x1", "value"] and float(rows[1][1]) == pytest.approx(5 / 14)
    fout = tmp_path / "f.csv"
    assert main(["flow", "--ell", "2", "--d", "1", "--out", str(fout)]) == 0
    rows = list(csv.reader(open(fout)))
    assert rows[0] == ["direction", "i1", "value"]
    assert [float(r[2]) for r in rows[1:]] == pytest.approx([0.75, 0.25])


def test_cli_alpha_and_rate(capsys):
    assert main(["alpha", "--t", "0.5,1", "--tol", "1e-4"]) == 0
    rows = list(csv.reader(capsys.readouterr().out.splitlines()))
    assert rows[0] == ["t", "s", "alpha"] and len(rows) == 5
    assert main(["rate", "--times", "1", "--gamma", "1", "--epsilon", "0.05"]) == 0
    rows = dict(csv.reader(capsys.readouterr().out.splitlines()))
    assert float(rows["rate"]) == pytest.approx(2.8385, rel=1e-3)


def test_cli_help_documents_csv(capsys):
    with pytest.raises(SystemExit):
        main(["--help"])
    text = capsys.readouterr().out
    assert "results.csv" in text and "t,s,alpha" in text
