"""Operator trees and incremental query evaluation.

A parsed query becomes a tree of PlanNodes (pre-order numbered, so node 0
is the root). Window leaves hold the only state: a deque of rows fed by
arriving stream events, evicted as time advances. Every other operator is
evaluated functionally over its children at trigger time.

Triggers use event time. A query whose root is not PREDICT emits once per
arriving event with ``now`` = that event's timestamp; a PREDICT root emits
only when ``now`` crosses a multiple of its emission interval. Emissions
per query are in non-decreasing trigger order; a late trigger (possible
when two sources reach the node over unequal delays) still feeds windows
but is not emitted, and is counted.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Optional, Tuple

from collections import deque

from .packets import TupleBatch, format_value
from .query import (
    QueryAst,
    OperatorSpec,
    parse_area,
    parse_cell_size,
    parse_query,
    to_canonical_expression,
    validate,
)


class EmptyWindow(Exception):
    """An aggregate other than count saw no tuples."""


class UnknownAttribute(KeyError):
    """A query references an attribute the stream schema does not carry."""


@dataclass
class ComplexEvent:
    """One emission of a query root.

    ``kind`` is tuples, grid or scalar; ``value`` is the rows list, the
    row-major integer grid, or the number. Payload equality is the
    equality the accuracy metrics use.
    """

    qname: str
    ts: int
    kind: str
    value: object
    schema: Tuple[str, ...] = ()

    def payload_key(self) -> tuple:
        if self.kind == "tuples":
            return ("tuples", self.schema, tuple(self.value))
        if self.kind == "grid":
            return ("grid", tuple(tuple(r) for r in self.value))
        return ("scalar", self.value)

    def encode_payload(self) -> bytes:
        """Wire form: a ts marker line, then the kind's text body."""
        head = f"#ts={self.ts}\n#kind={self.kind}\n"
        if self.kind == "tuples":
            lines = ["|".join(self.schema)]
            lines += ["|".join(format_value(v) for v in row) for row in self.value]
            return (head + "\n".join(lines)).encode("utf-8")
        if self.kind == "grid":
            return (head + "\n".join(",".join(str(c) for c in row) for row in self.value)).encode(
                "utf-8"
            )
        return (head + format_value(self.value)).encode("utf-8")


class WindowState:
    """Time window over one stream: rows with ts in (now - length, now]."""

    __slots__ = ("length_us", "rows")

    def __init__(self, length_us: int):
        self.length_us = length_us
        self.rows: deque = deque()

    def feed(self, row: tuple) -> None:
        self.rows.append(row)

    def contents(self, now: int) -> List[tuple]:
        cutoff = now - self.length_us
        rows = self.rows
        while rows and rows[0][0] <= cutoff:
            rows.popleft()
        if rows and rows[-1][0] <= now:
            return list(rows)
        return [r for r in rows if r[0] <= now]


class PlanNode:
    """One operator instance inside a placed query."""

    __slots__ = ("node_id", "spec", "children", "expression", "assigned_node", "window")

    def __init__(self, node_id: int, spec: OperatorSpec, children: List["PlanNode"], expression: str):
        self.node_id = node_id
        self.spec = spec
        self.children = children
        self.expression = expression
        self.assigned_node: Optional[str] = None
        self.window: Optional[WindowState] = None


class PlanTree:
    def __init__(self, root: PlanNode, nodes: List[PlanNode], canonical: str, ast: QueryAst):
        self.root = root
        self.nodes = nodes  # pre-order, nodes[i].node_id == i
        self.canonical = canonical
        self.ast = ast
        self.last_emitted_ts = -1
        self.next_boundary: Optional[int] = None
        self.skipped_out_of_order = 0
        self.skipped_empty = 0
        if root.spec.kind == "predict":
            self.next_boundary = root.spec.param("interval_us")

    @property
    def source_names(self) -> Tuple[str, ...]:
        return self.ast.sources

    def windows_for(self, source: str) -> List[WindowState]:
        return [n.window for n in self.nodes if n.spec.kind == "window" and n.spec.param("source") == source]


def build_operator_tree(ast: QueryAst) -> PlanTree:
    """Number operators pre-order and attach window state to leaves."""
    nodes: List[PlanNode] = []

    def build(spec: OperatorSpec) -> PlanNode:
        node = PlanNode(len(nodes), spec, [], to_canonical_expression(QueryAst(spec)))
        nodes.append(node)
        node.children = [build(c) for c in spec.children]
        if spec.kind == "window":
            node.window = WindowState(spec.param("duration_us"))
        return node

    root = build(ast.root)
    return PlanTree(root, nodes, to_canonical_expression(ast), ast)


# --- operator evaluation -----------------------------------------------------

_OPS = {
    "<": lambda a, b: a < b,
    ">": lambda a, b: a > b,
    "<=": lambda a, b: a <= b,
    ">=": lambda a, b: a >= b,
    "=": lambda a, b: a == b,
    "!=": lambda a, b: a != b,
}


def _col(schema: Tuple[str, ...], attr: str) -> int:
    try:
        return schema.index(attr)
    except ValueError:
        raise UnknownAttribute(f"{attr!r} not in schema {schema}") from None


def eval_filter(schema: Tuple[str, ...], rows: List[tuple], attr: str, op: str, value) -> List[tuple]:
    if not rows:
        return []
    idx = _col(schema, attr)
    test = _OPS[op]
    return [r for r in rows if test(r[idx], value)]


def eval_join(
    left: Tuple[Tuple[str, ...], List[tuple]],
    right: Tuple[Tuple[str, ...], List[tuple]],
    left_attr: str,
    right_attr: str,
) -> Tuple[Tuple[str, ...], List[tuple]]:
    """Cross product on key equality.

    Output rows are ts-led: ts = max of the pair, then left attributes,
    then right attributes with the join key column dropped. Pair order is
    (left ts, right ts) ascending, which nested iteration over ts-sorted
    inputs yields directly.
    """
    (ls, lrows), (rs, rrows) = left, right
    if not lrows or not rrows:
        return ("ts",), []
    li = _col(ls, left_attr)
    ri = _col(rs, right_attr)
    drop = None
    if right_attr != "ts":
        drop = ri
    schema = ("ts",) + ls[1:] + tuple(a for i, a in enumerate(rs[1:], start=1) if i != drop)
    out = []
    for lr in lrows:
        key = lr[li]
        lbody = lr[1:]
        for rr in rrows:
            if rr[ri] == key:
                rbody = tuple(v for i, v in enumerate(rr[1:], start=1) if i != drop)
                out.append((max(lr[0], rr[0]),) + lbody + rbody)
    return schema, out


def eval_aggregate(schema: Tuple[str, ...], rows: List[tuple], fn: str, attr: str):
    if fn == "count":
        return len(rows)
    if not rows:
        raise EmptyWindow(f"{fn} over an empty window")
    idx = _col(schema, attr)
    values = [r[idx] for r in rows]
    if fn == "max":
        return max(values)
    if fn == "min":
        return min(values)
    if fn == "sum":
        return sum(values)
    return sum(values) / len(values)  # avg


def eval_heatmap(
    schema: Tuple[str, ...],
    rows: List[tuple],
    cell_size: float,
    area: Tuple[float, float, float, float],
) -> List[List[int]]:
    """Count events per cell. Membership is [min, max) on both axes."""
    min_lat, min_lon, max_lat, max_lon = area
    n_rows = math.ceil((max_lat - min_lat) / cell_size)
    n_cols = math.ceil((max_lon - min_lon) / cell_size)
    grid = [[0] * n_cols for _ in range(n_rows)]
    if not rows:
        return grid
    lat_i = _col(schema, "latitude")
    lon_i = _col(schema, "longitude")
    for r in rows:
        lat, lon = r[lat_i], r[lon_i]
        if min_lat <= lat < max_lat and min_lon <= lon < max_lon:
            i = min(int((lat - min_lat) / cell_size), n_rows - 1)
            j = min(int((lon - min_lon) / cell_size), n_cols - 1)
            grid[i][j] += 1
    return grid


def eval_predict(schema: Tuple[str, ...], rows: List[tuple]) -> float:
    """Forecast = mean of 'value' over the window; empty windows emit nothing."""
    if not rows:
        raise EmptyWindow("predict over an empty window")
    idx = _col(schema, "value")
    return sum(r[idx] for r in rows) / len(rows)


class QueryEngine:
    """Per-node query state: plan cache, window feeds, trigger processing."""

    def __init__(self):
        self._trees: Dict[str, PlanTree] = {}
        self._schemas: Dict[str, Tuple[str, ...]] = {}
        self.builds = 0

    def get_tree(self, text: str) -> PlanTree:
        """Parse and build, or reuse the plan cached under the canonical form."""
        canonical = to_canonical_expression(parse_query(text))
        tree = self._trees.get(canonical)
        if tree is None:
            ast = parse_query(canonical)
            diags = validate(ast)
            if diags:
                raise ValueError(f"invalid query: {diags[0].message}")
            tree = build_operator_tree(ast)
            self._trees[canonical] = tree
            self.builds += 1
        return tree

    def bind_schema(self, source: str, schema: Tuple[str, ...]) -> None:
        self._schemas[source] = schema

    def feed(self, tree: PlanTree, source: str, rows: Iterable[tuple]) -> None:
        for window in tree.windows_for(source):
            for row in rows:
                window.feed(row)

    def evaluate(self, node: PlanNode, now: int) -> Tuple[Tuple[str, ...], object, str]:
        """Returns (schema, value, kind) of one operator at trigger time."""
        spec = node.spec
        kind = spec.kind
        if kind == "window":
            schema = self._schemas.get(spec.param("source"))
            if schema is None:
                # nothing from this source yet: an empty window
                return ("ts",), [], "tuples"
            return schema, node.window.contents(now), "tuples"
        if kind == "filter":
            schema, rows, _ = self.evaluate(node.children[0], now)
            return (
                schema,
                eval_filter(schema, rows, spec.param("attr"), spec.param("op"), spec.param("value")),
                "tuples",
            )
        if kind == "join":
            lschema, lrows, _ = self.evaluate(node.children[0], now)
            rschema, rrows, _ = self.evaluate(node.children[1], now)
            la, ra = _join_sides(node, spec)
            schema, rows = eval_join((lschema, lrows), (rschema, rrows), la, ra)
            return schema, rows, "tuples"
        if kind == "aggregate":
            schema, rows, _ = self.evaluate(node.children[0], now)
            return (), eval_aggregate(schema, rows, spec.param("fn"), spec.param("attr")), "scalar"
        if kind == "heatmap":
            schema, rows, _ = self.evaluate(node.children[0], now)
            cell = parse_cell_size(spec)
            area = parse_area(spec)
            return (), eval_heatmap(schema, rows, cell, area), "grid"
        # predict
        schema, rows, _ = self.evaluate(node.children[0], now)
        return (), eval_predict(schema, rows), "scalar"

    def process(self, qname: str, tree: PlanTree, trigger_ts: int) -> Optional[ComplexEvent]:
        """Evaluate the full tree for one trigger; None when nothing emits."""
        if tree.root.spec.kind == "predict":
            return None  # boundary-driven, see boundary_events
        if trigger_ts < tree.last_emitted_ts:
            tree.skipped_out_of_order += 1
            return None
        try:
            schema, value, kind = self.evaluate(tree.root, trigger_ts)
        except EmptyWindow:
            tree.skipped_empty += 1
            return None
        if kind == "tuples" and not value:
            # an empty result set derives no event
            tree.skipped_empty += 1
            return None
        tree.last_emitted_ts = trigger_ts
        return ComplexEvent(qname, trigger_ts, kind, value, schema)

    def boundary_events(self, qname: str, tree: PlanTree, upto_ts: int) -> List[ComplexEvent]:
        """PREDICT emissions for every interval boundary crossed by upto_ts."""
        if tree.root.spec.kind != "predict":
            return []
        out: List[ComplexEvent] = []
        interval = tree.root.spec.param("interval_us")
        while tree.next_boundary is not None and tree.next_boundary <= upto_ts:
            b = tree.next_boundary
            tree.next_boundary = b + interval
            try:
                schema, value, kind = self.evaluate(tree.root, b)
            except EmptyWindow:
                tree.skipped_empty += 1
                continue
            tree.last_emitted_ts = b
            out.append(ComplexEvent(qname, b, kind, value, schema))
        return out


def _join_sides(node: PlanNode, spec: OperatorSpec) -> Tuple[str, str]:
    """Map the join condition's two sides onto the two children.

    The condition names sources; the left child does not have to contain
    the condition's left source, so swap when it names the right child's.
    """
    left_sources = QueryAst(node.children[0].spec).sources
    if spec.param("left_source") in left_sources:
        return spec.param("left_attr"), spec.param("right_attr")
    return spec.param("right_attr"), spec.param("left_attr")


def run_query_over_trace(
    query_text: str,
    traces: Dict[str, TupleBatch],
    qname: str = "q",
) -> List[ComplexEvent]:
    """Replay recorded traces through the incremental engine.

    Events from all sources merge in (ts, source-position) order, each one
    feeding its windows and triggering the root (or crossing PREDICT
    boundaries). This is the engine half of the engine-versus-reference
    equivalence check.
    """
    engine = QueryEngine()
    tree = engine.get_tree(query_text)
    order = {s: i for i, s in enumerate(tree.source_names)}
    merged = []
    for source, batch in traces.items():
        engine.bind_schema(source, batch.schema)
        if source in order:
            merged += [(row[0], order[source], source, row) for row in batch.rows]
    merged.sort(key=lambda e: (e[0], e[1]))
    out: List[ComplexEvent] = []
    for ts, _, source, row in merged:
        engine.feed(tree, source, (row,))
        if tree.root.spec.kind == "predict":
            out += engine.boundary_events(qname, tree, ts)
        else:
            ce = engine.process(qname, tree, ts)
            if ce is not None:
                out.append(ce)
    return out
