"""Ground-truth query results by exhaustive recomputation.

This is the reference the engine and the end-to-end runs are judged
against, so it shares no evaluation code with the incremental engine: at
every trigger it rescans the full recorded trace and recomputes each
operator naively. Slow on purpose, simple on purpose.

The trigger rule is part of the language, so it is the same here as in
the engine: one trigger per event (merged across sources by (ts, source
position)), except a PREDICT root, which emits only at whole multiples of
its emission interval up to the last event timestamp, skipping boundaries
whose window is empty.
"""

from __future__ import annotations

import math
from typing import Dict, List, Optional, Tuple

from .cep import ComplexEvent
from .packets import TupleBatch
from .query import OperatorSpec, QueryAst, parse_area, parse_cell_size, parse_query

_CMP = {
    "<": lambda a, b: a < b,
    ">": lambda a, b: a > b,
    "<=": lambda a, b: a <= b,
    ">=": lambda a, b: a >= b,
    "=": lambda a, b: a == b,
    "!=": lambda a, b: a != b,
}


def _sources_of(spec: OperatorSpec) -> List[str]:
    if spec.kind == "window":
        return [spec.param("source")]
    out: List[str] = []
    for child in spec.children:
        for s in _sources_of(child):
            if s not in out:
                out.append(s)
    return out


def _recompute(
    spec: OperatorSpec,
    traces: Dict[str, TupleBatch],
    now: int,
) -> Tuple[Tuple[str, ...], object, str]:
    kind = spec.kind
    if kind == "window":
        batch = traces[spec.param("source")]
        length = spec.param("duration_us")
        rows = [r for r in batch.rows if now - length < r[0] <= now]
        return batch.schema, rows, "tuples"

    if kind == "filter":
        schema, rows, _ = _recompute(spec.children[0], traces, now)
        idx = schema.index(spec.param("attr"))
        cmp = _CMP[spec.param("op")]
        want = spec.param("value")
        return schema, [r for r in rows if cmp(r[idx], want)], "tuples"

    if kind == "join":
        ls, lrows, _ = _recompute(spec.children[0], traces, now)
        rs, rrows, _ = _recompute(spec.children[1], traces, now)
        la, ra = spec.param("left_attr"), spec.param("right_attr")
        if spec.param("left_source") not in _sources_of(spec.children[0]):
            la, ra = ra, la
        li, ri = ls.index(la), rs.index(ra)
        drop = ri if ra != "ts" else None
        schema = ("ts",) + ls[1:] + tuple(a for i, a in enumerate(rs[1:], 1) if i != drop)
        rows = []
        for lrow in lrows:
            for rrow in rrows:
                if lrow[li] == rrow[ri]:
                    rest = tuple(v for i, v in enumerate(rrow[1:], 1) if i != drop)
                    rows.append((max(lrow[0], rrow[0]),) + lrow[1:] + rest)
        return schema, rows, "tuples"

    if kind == "aggregate":
        schema, rows, _ = _recompute(spec.children[0], traces, now)
        fn = spec.param("fn")
        if fn == "count":
            return (), len(rows), "scalar"
        if not rows:
            return (), None, "empty"
        vals = [r[schema.index(spec.param("attr"))] for r in rows]
        if fn == "max":
            return (), max(vals), "scalar"
        if fn == "min":
            return (), min(vals), "scalar"
        if fn == "sum":
            return (), sum(vals), "scalar"
        return (), sum(vals) / len(vals), "scalar"

    if kind == "heatmap":
        schema, rows, _ = _recompute(spec.children[0], traces, now)
        cell = parse_cell_size(spec)
        min_lat, min_lon, max_lat, max_lon = parse_area(spec)
        grid = [
            [0] * math.ceil((max_lon - min_lon) / cell)
            for _ in range(math.ceil((max_lat - min_lat) / cell))
        ]
        lat_i, lon_i = schema.index("latitude"), schema.index("longitude")
        for r in rows:
            if min_lat <= r[lat_i] < max_lat and min_lon <= r[lon_i] < max_lon:
                i = min(int((r[lat_i] - min_lat) / cell), len(grid) - 1)
                j = min(int((r[lon_i] - min_lon) / cell), len(grid[0]) - 1)
                grid[i][j] += 1
        return (), grid, "grid"

    # predict: mean of 'value' over the child window
    schema, rows, _ = _recompute(spec.children[0], traces, now)
    if not rows:
        return (), None, "empty"
    idx = schema.index("value")
    return (), sum(r[idx] for r in rows) / len(rows), "scalar"


def ground_truth(
    query_text: str,
    traces: Dict[str, TupleBatch],
    qname: str = "q",
) -> List[ComplexEvent]:
    """All complex events a lossless system must derive from the traces.

    Events become visible in (ts, query source position) order: when two
    sources carry the same timestamp, the trigger for the earlier-listed
    source must not yet see the later one. Each trigger recomputes over
    everything visible so far.
    """
    ast = parse_query(query_text)
    root = ast.root
    merged = []
    for pos, source in enumerate(ast.sources):
        batch = traces.get(source)
        if batch is None:
            continue
        merged += [(row[0], pos, source, row) for row in batch.rows]
    merged.sort(key=lambda e: (e[0], e[1]))

    out: List[ComplexEvent] = []
    if root.kind == "predict":
        if not merged:
            return out
        interval = root.param("interval_us")
        last_ts = max(ts for ts, _, _, _ in merged)
        b = interval
        while b <= last_ts:
            schema, value, kind = _recompute(root, traces, b)
            if kind != "empty":
                out.append(ComplexEvent(qname, b, kind, value, schema))
            b += interval
        return out

    visible: Dict[str, TupleBatch] = {
        s: TupleBatch(traces[s].schema, []) for s in ast.sources if s in traces
    }
    for ts, _, source, row in merged:
        visible[source].rows.append(row)
        schema, value, kind = _recompute(root, visible, ts)
        if kind == "empty" or (kind == "tuples" and not value):
            continue
        out.append(ComplexEvent(qname, ts, kind, value, schema))
    return out


def predict_slots(query_text: str, traces: Dict[str, TupleBatch]) -> Optional[List[int]]:
    """The emission boundaries a PREDICT query spans; None for other roots."""
    ast = parse_query(query_text)
    if ast.root.kind != "predict":
        return None
    merged = [row[0] for s in ast.sources for row in traces.get(s, TupleBatch(("ts",), [])).rows]
    if not merged:
        return []
    interval = ast.root.param("interval_us")
    return list(range(interval, max(merged) + 1, interval))
