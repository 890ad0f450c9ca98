"""Report serialization and file rendering."""

import csv

from inetcep.report import report_json_bytes, write_report
from inetcep.sim import Simulation, scenario_from_dict


def test_json_bytes_are_canonical():
    a = report_json_bytes({"b": 1, "a": {"y": 2, "x": 3}})
    b = report_json_bytes({"a": {"x": 3, "y": 2}, "b": 1})
    assert a == b
    assert a.endswith(b"\n")


def test_write_report_renders_grid_queries(tmp_path):
    raw = {
        "name": "hm",
        "duration_s": 4.0,
        "warmup_s": 1.0,
        "topology": {"kind": "line", "brokers": 1},
        "sources": [{"schema": "gps", "source_id": "GPS_S1", "rate": 40.0}],
        "queries": [{"text": "HEATMAP('25','40,-10,60,10',WINDOW(GPS_S1,4s))"}],
    }
    sim = Simulation(scenario_from_dict(raw))
    sim.run()
    written = {p.name for p in write_report(sim, tmp_path / "out")}
    assert {
        "report.json",
        "latency_samples.csv",
        "throughput.csv",
        "flow_rates.csv",
        "fig_latency_cdf.png",
        "fig_throughput.png",
        "fig_flow_rates.png",
        "fig_heatmap_q0.png",
    } <= written
    assert "trace.csv" not in written  # tracing was off

    with (tmp_path / "out" / "latency_samples.csv").open() as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["qname", "latency_us"]
    assert len(rows) > 1
