import csv
import json

import pytest

from exittail import cli

CHAIN = "# two-state chain\n2\n0.5 0.5\n0.25 0.75\n"


@pytest.fixture
def chain_file(tmp_path):
    path = tmp_path / "chain.txt"
    path.write_text(CHAIN)
    return path


def run(argv, capsys):
    code = cli.main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


def test_chain_analyze_writes_artifacts(tmp_path, chain_file, capsys):
    out = tmp_path / "o"
    code, stdout, _ = run(["chain", "analyze", "--chain", chain_file, "--event", "0",
                           "--t-max", 6, "--out", out], capsys)
    assert code == 0
    summary = json.loads(stdout)
    assert summary["gap"] == pytest.approx(0.75)
    rows = list(csv.DictReader(open(out / "exit_tail.csv")))
    assert len(rows) == 7
    assert float(rows[3]["survival"]) == pytest.approx((1 / 3) / 8)
    manifest = json.loads((out / "manifest.json").read_text())
    assert set(manifest) >= {"config", "seed", "versions", "wall_time"}
    assert manifest["config"]["t_max"] == 6
    assert (out / "decorrelation.csv").exists() and (out / "spectrum.json").exists()


def test_bound_tmain_passes(tmp_path, chain_file, capsys):
    code, stdout, _ = run(["bound", "tmain", "--chain", chain_file, "--event", "1",
                           "--t-max", 20, "--out", tmp_path], capsys)
    assert code == 0
    assert json.loads(stdout) == {"violations": 0, "checked": 20}
    first = json.loads((tmp_path / "tmain.jsonl").read_text().splitlines()[0])
    assert first["t"] == 1 and first["target"] <= first["bound"]


def test_bound_aksz(tmp_path, capsys):
    code, stdout, _ = run(["bound", "aksz", "--probs", "0.3,0.5", "--delta", 1,
                           "--gaps", 0, "--out", tmp_path], capsys)
    assert code == 0
    assert json.loads(stdout)["bound"] == pytest.approx(0.15 ** 0.5)


def test_parse_error_reports_line(tmp_path, capsys):
    bad = tmp_path / "bad.txt"
    bad.write_text("2\n0.5 0.5\n0.25 oops\n")
    code, _, err = run(["chain", "analyze", "--chain", bad, "--event", 0, "--out", tmp_path], capsys)
    assert code == 3
    rec = json.loads(err)
    assert rec["error"] == "parse" and rec["line"] == 3 and rec["path"] == str(bad)


@pytest.mark.parametrize("argv", [
    ["chain", "analyze", "--bogus", "1"],
    ["nothing"],
    ["bound", "aksz", "--probs", "0.3"],
    ["bound", "aksz", "--probs", "0.3,0.4", "--delta", "x"],
    ["bound", "aksz", "--probs", "0.3,0.4", "--delta", "1", "--gaps", ""],
    ["dynperc", "piv", "--kind", "Hex"],
    ["dynperc", "fet", "--kind", "Hex"],
])
def test_usage_errors_exit_3(tmp_path, capsys, argv):
    code, _, err = run(argv + ["--out", tmp_path / "u"] if argv != ["nothing"] else argv, capsys)
    assert code == 3
    assert json.loads(err.strip().splitlines()[-1])["exit_code"] == 3


def test_missing_event_state(tmp_path, chain_file, capsys):
    code, _, err = run(["chain", "analyze", "--chain", chain_file, "--event", 5, "--out", tmp_path], capsys)
    assert code == 3
    assert "out of range" in json.loads(err)["message"]


def test_settings_precedence(tmp_path, monkeypatch):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("# settings\nt_max = 7\nseed = 5\nreplicas = 10\n")
    argv = ["chain", "analyze", "--config", str(cfg)]
    _, s = cli.resolve(argv)
    assert (s["t_max"], s["seed"], s["replicas"]) == (7, 5, 10)
    monkeypatch.setenv("EXITTAIL_T_MAX", "8")
    monkeypatch.setenv("EXITTAIL_SEED", "6")
    _, s = cli.resolve(argv)
    assert (s["t_max"], s["seed"], s["replicas"]) == (8, 6, 10)
    _, s = cli.resolve(argv + ["--set", "t_max=9"])
    assert (s["t_max"], s["seed"]) == (9, 6)
    _, s = cli.resolve(argv + ["--set", "t_max=9", "--t-max", "10"])
    assert s["t_max"] == 10


def test_config_errors(tmp_path, capsys):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text("t_max = 3\nnot a setting\n")
    code, _, err = run(["chain", "analyze", "--config", cfg], capsys)
    assert code == 3
    assert json.loads(err)["line"] == 2
    with pytest.raises(cli.UsageError, match="unknown setting"):
        cli.resolve(["chain", "analyze", "--set", "colour=blue"])
    with pytest.raises(cli.UsageError, match="KEY=VALUE"):
        cli.resolve(["chain", "analyze", "--set", "colour"])


def test_dynperc_commands_small(tmp_path, capsys):
    code, stdout, _ = run(["dynperc", "piv", "--n", 6, "--replicas", 300, "--out", tmp_path / "p"], capsys)
    assert code == 0 and 0 < json.loads(stdout)["mean"]
    code, stdout, _ = run(["dynperc", "survival", "--n", 6, "--replicas", 400, "--piv", 3,
                           "--out", tmp_path / "s"], capsys)
    assert code == 0
    header = (tmp_path / "s" / "survival.csv").read_text().splitlines()[0]
    assert header == "t,survival,ci"
    code, _, _ = run(["dynperc", "fet", "--radii", "2 3", "--t-max", 2, "--replicas", 300,
                      "--out", tmp_path / "f"], capsys)
    assert code == 0
    assert (tmp_path / "f" / "fet.csv").read_text().startswith("R,t,survival,ci")


def test_fkg_inconclusive_exit_code(tmp_path, capsys):
    # too few replicas to leave 100 survivors
    code, _, _ = run(["dynperc", "fkg", "--n", 6, "--replicas", 50, "--piv", 3,
                      "--out", tmp_path], capsys)
    assert code == 2


def test_runs_are_reproducible(tmp_path, capsys):
    for tag in ("a", "b"):
        run(["dynperc", "survival", "--n", 6, "--replicas", 300, "--piv", 3, "--seed", 9,
             "--out", tmp_path / tag], capsys)
    assert (tmp_path / "a" / "survival.csv").read_text() == (tmp_path / "b" / "survival.csv").read_text()


def test_verify_suite_subset(tmp_path, capsys):
    code, stdout, _ = run(["verify", "suite", "--criteria", "1", "--out", tmp_path], capsys)
    assert code == 0
    assert stdout.startswith("[PASS] criterion 1")
    assert json.loads((tmp_path / "suite.json").read_text())[0]["status"] == "PASS"
