import csv
import json

import pytest
import yaml
from click.testing import CliRunner

from agentlab.cli import main
from agentlab.storage import load_run


@pytest.fixture
def run(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    monkeypatch.delenv("AGENTLAB_API_KEY", raising=False)
    runner = CliRunner()

    def invoke(*args):
        return runner.invoke(main, list(args), catch_exceptions=False)

    return invoke


def test_help_lists_commands_and_flags(run):
    res = run("--help")
    for cmd in ("solve-dp", "simulate", "scan", "analyze", "report", "show-config"):
        assert cmd in res.output
    sim = run("simulate", "--help").output
    for flag in ("--policy", "--persona", "--backend", "--blackout", "--paired", "--reps", "--base-seed", "--out"):
        assert flag in sim


def test_solve_dp_defaults(run, tmp_path):
    res = run("solve-dp", "--out", "dp.json")
    assert res.exit_code == 0
    assert "E[r_dp]     = 72.626271" in res.output
    assert "E[r_greedy] = 47.626271" in res.output
    assert "rho         = 0.344228" in res.output
    assert json.loads((tmp_path / "dp.json").read_text())


def test_solve_dp_single_day(run):
    res = run("solve-dp", "--horizon", "1")
    assert res.exit_code == 0 and "E[r_dp]     = 7.500000" in res.output


def test_solve_dp_invalid_soc_is_config_error(run):
    res = run("solve-dp", "--initial-soc", "11")
    assert res.exit_code == 2 and "config error" in res.output


def test_simulate_greedy(run, tmp_path):
    res = run("simulate", "--policy", "greedy", "--reps", "5", "--out", "out")
    assert res.exit_code == 0
    manifest, records = load_run(tmp_path / "out" / "greedy")
    assert manifest.record_count == 100 and len(records) == 100
    with open(tmp_path / "out" / "greedy" / "summary.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert rows[0]["n"] == "5" and rows[0]["persona"] == "greedy"


def test_simulate_paired_agent(run, tmp_path):
    res = run("simulate", "--policy", "agent", "--persona", "Feeler", "--backend", "mock:reserve", "--paired",
              "--reps", "2", "--out", "out", "--run-id", "feel")
    assert res.exit_code == 0, res.output
    t, _ = load_run(tmp_path / "out" / "feel-treatment")
    c, _ = load_run(tmp_path / "out" / "feel-control")
    assert t.spec["blackout_days"] == [8, 9] and c.spec["blackout_days"] == []


def test_simulate_fixed_path_file(run, tmp_path):
    (tmp_path / "path.json").write_text(json.dumps([500, 1000] * 10))
    res = run("simulate", "--policy", "dp", "--reps", "3", "--path-file", "path.json", "--out", "o")
    assert res.exit_code == 0 and "sd=0.000000" in res.output
    (tmp_path / "bad.json").write_text(json.dumps([500, 700]))
    assert run("simulate", "--path-file", "bad.json", "--reps", "1").exit_code == 4


def test_simulate_http_without_key(run):
    res = run("simulate", "--policy", "agent", "--backend", "http", "--reps", "1")
    assert res.exit_code == 3 and "missing AGENTLAB_API_KEY" in res.output


def test_simulate_rejects_unknown_persona_and_backend(run):
    assert run("simulate", "--policy", "agent", "--persona", "Nobody").exit_code == 2
    assert run("simulate", "--policy", "agent", "--backend", "mock:magic").exit_code == 2
    assert run("simulate", "--blackout", "8,x").exit_code == 2


def test_scan(run, tmp_path):
    res = run("scan", "--n-paths", "50", "--out", "scan.csv")
    assert res.exit_code == 0 and "nearest to 0.692" in res.output
    with open(tmp_path / "scan.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 50 and set(rows[0]) == {"seed", "rho", "label", "r_dp_cents", "r_greedy_cents", "flags", "path"}
    assert all(len(r["path"]) == 20 for r in rows)


def test_analyze_and_report(run, tmp_path):
    assert run("simulate", "--policy", "agent", "--persona", "Realist", "--mock-switch-bank", "--paired",
               "--reps", "3", "--out", "o", "--run-id", "re").exit_code == 0
    res = run("analyze", "--runs", "o/re-treatment", "--runs", "o/re-control", "--k", "3", "--iterations", "300",
              "--out", "an")
    assert res.exit_code == 0, res.output
    assert "Realist: dominant blackout cluster" in res.output
    for name in ("cluster_report.json", "shift_report.json", "keywords.csv", "tsne.csv"):
        assert (tmp_path / "an" / name).exists()
    res = run("report", "--runs", "o/re-treatment", "--runs", "o/re-control", "--analysis", "an", "--out", "rep")
    assert res.exit_code == 0
    for name in ("panels.svg", "soc_overlay.svg", "daily_stats.csv", "tsne_scatter.svg"):
        assert (tmp_path / "rep" / name).exists()


def test_empty_run_dir_is_data_error(run, tmp_path):
    (tmp_path / "empty").mkdir()
    assert run("report", "--runs", "empty").exit_code == 4
    assert run("analyze", "--runs", "empty").exit_code == 4


def test_config_file(run, tmp_path):
    conf = {"battery": {"horizon": 1}, "runs": {"blackout_days": []}, "output_dir": "elsewhere"}
    (tmp_path / "c.yaml").write_text(yaml.safe_dump(conf))
    res = run("--config", "c.yaml", "solve-dp")
    assert res.exit_code == 0 and "7.500000" in res.output
    assert (tmp_path / "elsewhere" / "dp.json").exists()
    shown = yaml.safe_load(run("--config", "c.yaml", "show-config").output)
    assert shown["battery"]["horizon"] == 1 and shown["prices"]["high_cents"] == 1000


def test_config_unknown_key(run, tmp_path):
    (tmp_path / "c.yaml").write_text("battery:\n  voltage: 12\n")
    res = run("--config", "c.yaml", "show-config")
    assert res.exit_code == 2 and "voltage" in res.output
    assert run("--config", "missing.yaml", "show-config").exit_code == 2


def test_config_blackout_outside_horizon(run, tmp_path):
    (tmp_path / "c.yaml").write_text("battery:\n  horizon: 1\n")
    res = run("--config", "c.yaml", "show-config")
    assert res.exit_code == 2 and "outside" in res.output
