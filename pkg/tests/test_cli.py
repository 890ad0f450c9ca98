"""Exit codes, seed resolution and output files of the console commands."""

import json
import shutil
import subprocess

import pytest

from inetcep.cli import main

SCENARIO = """
name = "cli"
duration_s = 3.0
warmup_s = 1.0
seed = 3

[topology]
kind = "line"
brokers = 1

[sim]
record_trace = true

[[sources]]
schema = "gps"
source_id = "GPS_S1"
rate = 40.0

[[queries]]
subscribe = "GPS_S1"
"""


@pytest.fixture
def scenario_file(tmp_path):
    path = tmp_path / "scenario.toml"
    path.write_text(SCENARIO)
    return path


def read_report(out_dir):
    return json.loads((out_dir / "report.json").read_text())


def test_parse_prints_the_ast(capsys):
    assert main(["parse", "WINDOW(GPS_S1, 4s)"]) == 0
    got = json.loads(capsys.readouterr().out)
    assert got["canonical"] == "WINDOW(GPS_S1,4s)"
    assert got["sources"] == ["GPS_S1"]
    assert got["root"]["kind"] == "window"


def test_parse_rejects_syntax_with_position(capsys):
    assert main(["parse", "WINDOW(GPS_S1)"]) == 2
    err = capsys.readouterr().err
    assert err.startswith("error:")
    assert "offset 13" in err


def test_parse_reports_every_diagnostic(capsys):
    assert main(["parse", "HEATMAP('abc','2,2,0,0',WINDOW(GPS_S1,4s))"]) == 2
    lines = capsys.readouterr().err.splitlines()
    assert lines[0].startswith("InvalidCellSize at 8: ")
    assert lines[1].startswith("InvalidArea at 14: ")


def test_run_writes_report_files(scenario_file, tmp_path, capsys):
    out = tmp_path / "out"
    assert main(["run", "--scenario", str(scenario_file), "--out", str(out)]) == 0
    printed = capsys.readouterr().out.splitlines()
    for name in (
        "report.json",
        "latency_samples.csv",
        "throughput.csv",
        "flow_rates.csv",
        "trace.csv",
        "fig_latency_cdf.png",
        "fig_throughput.png",
        "fig_flow_rates.png",
    ):
        assert (out / name).exists(), name
        assert str(out / name) in printed
    report = read_report(out)
    assert report["scenario"]["seed"] == 3  # file value, nothing overrode it
    assert report["queries"]["/stream/GPS_S1"]["loss_rate"] == 0.0


def test_seed_resolution_order(scenario_file, tmp_path, capsys, monkeypatch):
    out = tmp_path / "env"
    monkeypatch.setenv("INETCEP_SEED", "7")
    assert main(["run", "--scenario", str(scenario_file), "--out", str(out)]) == 0
    assert read_report(out)["scenario"]["seed"] == 7

    out2 = tmp_path / "flag"
    assert main(["run", "--scenario", str(scenario_file), "--out", str(out2), "--seed", "5"]) == 0
    assert read_report(out2)["scenario"]["seed"] == 5
    capsys.readouterr()


def test_garbage_env_seed_is_bad_input(scenario_file, tmp_path, capsys, monkeypatch):
    monkeypatch.setenv("INETCEP_SEED", "many")
    assert main(["run", "--scenario", str(scenario_file), "--out", str(tmp_path / "o")]) == 1
    assert "INETCEP_SEED" in capsys.readouterr().err


def test_run_mode_override(scenario_file, tmp_path, capsys):
    out = tmp_path / "pr"
    assert main(["run", "--scenario", str(scenario_file), "--out", str(out), "--mode", "pr"]) == 0
    report = read_report(out)
    assert report["scenario"]["mode"] == "pr"
    assert report["queries"]["/stream/GPS_S1"]["control_packets"]["polls"] > 0
    capsys.readouterr()


def test_run_missing_scenario_is_bad_input(tmp_path, capsys):
    assert main(["run", "--scenario", str(tmp_path / "nope.toml")]) == 1
    assert "error:" in capsys.readouterr().err


def test_run_rejects_a_scenario_with_a_broken_query(tmp_path, capsys):
    path = tmp_path / "bad.toml"
    path.write_text(SCENARIO.replace('subscribe = "GPS_S1"', 'text = "WINDOW(GPS_S1"'))
    assert main(["run", "--scenario", str(path), "--out", str(tmp_path / "o")]) == 1
    assert "error:" in capsys.readouterr().err


GPS_CSV = (
    "ts,s_id,latitude,longitude,altitude,accuracy,distance,speed\n"
    "1000,S1,49.0,8.4,100.0,2.0,1.0,3.0\n"
    "2000,S1,49.1,8.5,100.0,2.0,1.0,3.0\n"
)


def test_oracle_prints_ground_truth(tmp_path, capsys):
    trace = tmp_path / "gps.csv"
    trace.write_text(GPS_CSV)
    rc = main(["oracle", "WINDOW(GPS_S1,4s)", "--trace", f"GPS_S1={trace}"])
    assert rc == 0
    events = json.loads(capsys.readouterr().out)
    assert [e["ts"] for e in events] == [1_000_000, 2_000_000]
    assert events[1]["value"] == [
        [1_000_000, "S1", 49.0, 8.4, 100.0, 2.0, 1.0, 3.0],
        [2_000_000, "S1", 49.1, 8.5, 100.0, 2.0, 1.0, 3.0],
    ]


def test_oracle_wants_a_trace_per_source(tmp_path, capsys):
    trace = tmp_path / "gps.csv"
    trace.write_text(GPS_CSV)
    assert main(["oracle", "WINDOW(GPS_S1,4s)", "--trace", f"OTHER={trace}"]) == 1
    assert "GPS_S1" in capsys.readouterr().err
    assert main(["oracle", "WINDOW(GPS_S1,4s)", "--trace", "justapath"]) == 1
    capsys.readouterr()


def test_oracle_rejects_bad_queries(tmp_path, capsys):
    trace = tmp_path / "gps.csv"
    trace.write_text(GPS_CSV)
    assert main(["oracle", "PREDICT(0s,WINDOW(GPS_S1,4s))", "--trace", f"GPS_S1={trace}"]) == 2
    assert "InvalidDuration" in capsys.readouterr().err


def test_oracle_surfaces_schema_mismatch(tmp_path, capsys):
    trace = tmp_path / "odd.csv"
    trace.write_text("time,who\n1,2\n")
    assert main(["oracle", "WINDOW(GPS_S1,4s)", "--trace", f"GPS_S1={trace}"]) == 1
    assert "error:" in capsys.readouterr().err


def test_topo_prints_roles_and_links(capsys):
    assert main(["topo", "manhattan"]) == 0
    topo = json.loads(capsys.readouterr().out)
    assert topo["nodes"]["n6"] == "producer"
    assert topo["nodes"]["n5"] == "consumer"
    assert len(topo["links"]) == 8


def test_missing_subcommand_exits_two():
    with pytest.raises(SystemExit) as err:
        main([])
    assert err.value.code == 2


@pytest.mark.skipif(shutil.which("inetcep") is None, reason="console script not on PATH")
def test_console_script_is_wired_up():
    done = subprocess.run(
        ["inetcep", "parse", "WINDOW(GPS_S1,4s)"],
        capture_output=True,
        text=True,
        timeout=60,
    )
    assert done.returncode == 0, done.stderr
    assert json.loads(done.stdout)["root"]["kind"] == "window"
