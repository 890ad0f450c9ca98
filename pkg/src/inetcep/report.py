"""Run outputs: canonical JSON, per-metric CSV files, rendered figures.

The JSON encoding is canonical (sorted keys, fixed separators) so that two
runs with the same seed produce byte-identical files. CSV companions carry
the raw samples the JSON only summarizes; figures are a convenience render
of the same data and make no determinism promise.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path
from typing import List

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt


def report_json_bytes(report: dict) -> bytes:
    return (json.dumps(report, sort_keys=True, indent=2) + "\n").encode("utf-8")


def _write_csv(path: Path, header: List[str], rows) -> None:
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        w.writerows(rows)


def write_report(sim, out_dir) -> List[Path]:
    """Write report.json, the per-metric CSVs, and figures; returns the paths."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    report = sim.report if sim.report is not None else sim._report()
    written: List[Path] = []

    path = out / "report.json"
    path.write_bytes(report_json_bytes(report))
    written.append(path)

    subs = [sub for app in sim.consumers.values() for sub in app.subs]

    path = out / "latency_samples.csv"
    _write_csv(
        path,
        ["qname", "latency_us"],
        ((sub.qname.uri, v) for sub in subs for v in sub.latencies),
    )
    written.append(path)

    path = out / "throughput.csv"
    _write_csv(
        path,
        ["qname", "second", "events"],
        (
            (sub.qname.uri, sec, sub.buckets[sec])
            for sub in subs
            for sec in sorted(sub.buckets)
        ),
    )
    written.append(path)

    flows = report.get("flows", {})
    if flows:
        path = out / "flow_rates.csv"
        _write_csv(
            path,
            ["flow", "t_us", "estimate_evps", "stamped_evps", "u_bit"],
            (
                (flow, *row)
                for flow, entry in flows.items()
                for row in entry["trace"]
            ),
        )
        written.append(path)

    if sim.trace is not None:
        path = out / "trace.csv"
        _write_csv(path, ["t_us", "node", "packet_type", "name", "action"], sim.trace)
        written.append(path)

    written.extend(_figures(sim, subs, flows, out))
    return written


# -- figures -------------------------------------------------------------------


def _figures(sim, subs, flows, out: Path) -> List[Path]:
    written: List[Path] = []

    with_samples = [s for s in subs if s.latencies]
    if with_samples:
        fig, ax = plt.subplots(figsize=(6, 4))
        for sub in with_samples:
            xs = sorted(sub.latencies)
            ys = [(i + 1) / len(xs) for i in range(len(xs))]
            ax.plot(xs, ys, label=sub.qname.uri)
        ax.set_xlabel("latency (us)")
        ax.set_ylabel("fraction of events")
        ax.set_title("delivery latency CDF")
        ax.legend(fontsize="small")
        path = out / "fig_latency_cdf.png"
        fig.savefig(path, dpi=110, bbox_inches="tight")
        plt.close(fig)
        written.append(path)

    with_buckets = [s for s in subs if s.buckets]
    if with_buckets:
        fig, ax = plt.subplots(figsize=(6, 4))
        for sub in with_buckets:
            secs = sorted(sub.buckets)
            ax.plot(secs, [sub.buckets[s] for s in secs], label=sub.qname.uri)
        ax.set_xlabel("time (s)")
        ax.set_ylabel("events/s")
        ax.set_title("delivered throughput")
        ax.legend(fontsize="small")
        path = out / "fig_throughput.png"
        fig.savefig(path, dpi=110, bbox_inches="tight")
        plt.close(fig)
        written.append(path)

    if flows:
        fig, ax = plt.subplots(figsize=(6, 4))
        for flow, entry in flows.items():
            trace = entry["trace"]
            ts = [row[0] / 1e6 for row in trace]
            ax.plot(ts, [row[1] for row in trace], label=f"{flow} estimate")
            ax.plot(ts, [row[2] for row in trace], linestyle="--", label=f"{flow} stamped")
        ax.set_xlabel("time (s)")
        ax.set_ylabel("rate (events/s)")
        ax.set_title("flow rate trace")
        ax.legend(fontsize="small")
        path = out / "fig_flow_rates.png"
        fig.savefig(path, dpi=110, bbox_inches="tight")
        plt.close(fig)
        written.append(path)

    for sub in subs:
        grid = None
        for ce in reversed(sub.ce_list):
            if ce.kind == "grid":
                grid = ce.value
                break
        if grid is None:
            continue
        fig, ax = plt.subplots(figsize=(5, 4))
        im = ax.imshow(grid, origin="lower", aspect="auto")
        fig.colorbar(im, ax=ax, label="events per cell")
        ax.set_title(f"last heatmap: {sub.qname.uri}")
        path = out / f"fig_heatmap_{sub.qid}.png"
        fig.savefig(path, dpi=110, bbox_inches="tight")
        plt.close(fig)
        written.append(path)

    return written
