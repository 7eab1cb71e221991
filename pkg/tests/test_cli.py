import subprocess
import sys

import pytest

from loratherm.cli import main
from loratherm.store import CSV_HEADER


@pytest.fixture(scope="module")
def cvg_run(tmp_path_factory):
    out = tmp_path_factory.mktemp("cli") / "cvg"
    assert main(["run", "concrete_vs_grass", "--out", str(out), "--report"]) == 0
    return out


def test_run_prints_checks(cvg_run, capsys):
    assert main(["verify", str(cvg_run)]) == 0
    out = capsys.readouterr().out
    assert "PASS" in out and "FAIL" not in out
    assert out.strip().endswith("expectations passed")


def test_report_files(cvg_run, tmp_path):
    assert (cvg_run / "report" / "summary.csv").exists()
    assert main(["report", str(cvg_run), "--out", str(tmp_path)]) == 0
    assert (tmp_path / "concrete_vs_grass.svg").exists()


def test_export_window(cvg_run, tmp_path, capsys):
    out = tmp_path / "g.csv"
    rc = main(["export", str(cvg_run / "store.sqlite"), "--device", "grass-01",
               "--from", "2018-01-20T12:00:00Z", "--to", "2018-01-20T13:00:00Z", "--out", str(out)])
    assert rc == 0
    lines = out.read_text().splitlines()
    assert lines[0] == ",".join(CSV_HEADER)
    assert 0 < len(lines) - 1 <= 30
    assert all(",grass-01,grass," in l for l in lines[1:])


def test_export_to_stdout(cvg_run, capsys):
    assert main(["export", str(cvg_run / "store.sqlite")]) == 0
    assert capsys.readouterr().out.startswith("timestamp,")


def test_replay(cvg_run, tmp_path, capsys):
    rc = main(["replay", str(cvg_run / "trace.csv"), "--registry", str(cvg_run / "registry.csv"),
               "--store", str(tmp_path / "r.sqlite")])
    assert rc == 0
    assert "stored=" in capsys.readouterr().out


def test_failing_expectation_exit_code(scenario_file, tmp_path):
    p = scenario_file([{"id": "a"}], duration_h=1,
                      extra="[expect]\nname = never\ncheck = reading_count\nop = <\nvalue = 0\n")
    assert main(["run", str(p), "--out", str(tmp_path / "run")]) == 1


@pytest.mark.parametrize("argv", [
    ["run", "no_such_scenario"],
    ["verify", "/nonexistent/run"],
    ["export", "/nonexistent/store.sqlite"],
])
def test_errors_exit_2(argv, capsys):
    assert main(argv) == 2
    assert capsys.readouterr().err.startswith("error:")


def test_bad_scenario_message(scenario_file, capsys):
    p = scenario_file([{"id": "a", "material": "tarmac"}], name="bad.ini")
    assert main(["run", str(p)]) == 2
    err = capsys.readouterr().err
    assert "bad.ini:" in err and "tarmac" in err


def test_module_entry_point():
    r = subprocess.run([sys.executable, "-m", "loratherm", "--help"], capture_output=True, text=True)
    assert r.returncode == 0
    assert "replay" in r.stdout
