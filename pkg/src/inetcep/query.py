"""The meta query language.

Queries are operator expressions over named event streams::

    WINDOW(GPS_S1, 4s)
    FILTER(WINDOW(GPS_S1, 4s), 'latitude' < 50)
    JOIN(FILTER(WINDOW(GPS_S1, 4s), 'latitude' < 50),
         FILTER(WINDOW(GPS_S2, 4s), 'latitude' < 50),
         GPS_S1.'ts' = GPS_S2.'ts')
    AGGREGATE(avg, 'speed', WINDOW(GPS_S1, 4s))
    HEATMAP('0.5', '49,8,51,10', WINDOW(GPS_S1, 4s))
    PREDICT(30s, WINDOW(PLUG_S1, 4s))

Whitespace is insignificant. Durations are an integer with an ``s`` or
``ms`` suffix. Attribute names are single-quoted. Comparison operators
are < > <= >= = !=.

Parsing raises positioned errors; ``validate`` returns value-level
diagnostics (bad durations, malformed heatmap areas, unknown aggregate
functions) without raising. ``to_canonical_expression`` prints the
whitespace-free normal form used as the query's identity everywhere else
in the system: two queries are the same query exactly when their
canonical expressions are equal.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import List, Optional, Tuple, Union

OPERATORS = ("WINDOW", "FILTER", "JOIN", "AGGREGATE", "HEATMAP", "PREDICT")
AGGREGATE_FNS = ("max", "min", "count", "sum", "avg")
COMPARISONS = ("<=", ">=", "!=", "<", ">", "=")

PREDICT_HORIZON_US = 60_000_000  # emissions look this far ahead


class QueryError(ValueError):
    """Base of all parse-time errors; carries a character offset."""

    def __init__(self, message: str, position: int):
        super().__init__(f"{message} (at offset {position})")
        self.message = message
        self.position = position


class QuerySyntaxError(QueryError):
    pass


class UnknownOperator(QueryError):
    pass


class ArityError(QueryError):
    pass


@dataclass(frozen=True)
class Diagnostic:
    code: str
    message: str
    position: int


@dataclass(frozen=True)
class OperatorSpec:
    """One operator node: kind, its own parameters, child operators.

    Positions are kept out of equality: the same query parsed from
    differently-spaced text must compare equal.
    """

    kind: str
    params: tuple  # sorted (key, value) pairs, hashable
    children: Tuple["OperatorSpec", ...]
    position: int = field(compare=False, default=0)
    param_positions: tuple = field(compare=False, default=())

    def param(self, key: str):
        for k, v in self.params:
            if k == key:
                return v
        raise KeyError(key)

    def param_position(self, key: str) -> int:
        for k, v in self.param_positions:
            if k == key:
                return v
        return self.position


@dataclass(frozen=True)
class QueryAst:
    root: OperatorSpec
    text: str = field(compare=False, default="")

    @property
    def sources(self) -> Tuple[str, ...]:
        """Stream names referenced, in pre-order, duplicates dropped."""
        out: List[str] = []

        def walk(node: OperatorSpec) -> None:
            if node.kind == "window":
                src = node.param("source")
                if src not in out:
                    out.append(src)
            for child in node.children:
                walk(child)

        walk(self.root)
        return tuple(out)


# --- lexer -----------------------------------------------------------------

_SYMBOLS = ("<=", ">=", "!=", "(", ")", ",", ".", "<", ">", "=")


@dataclass(frozen=True)
class _Token:
    kind: str  # ident, number, duration, quoted, symbol, end
    value: object
    pos: int


def _tokenize(text: str) -> List[_Token]:
    tokens: List[_Token] = []
    i, n = 0, len(text)
    while i < n:
        ch = text[i]
        if ch.isspace():
            i += 1
            continue
        if ch == "'":
            j = text.find("'", i + 1)
            if j < 0:
                raise QuerySyntaxError("unterminated quoted string", i)
            tokens.append(_Token("quoted", text[i + 1 : j], i))
            i = j + 1
            continue
        if ch.isdigit() or (ch == "-" and i + 1 < n and text[i + 1].isdigit()):
            j = i + 1
            while j < n and (text[j].isdigit() or text[j] == "."):
                j += 1
            num = text[i:j]
            if text[j : j + 2] == "ms":
                tokens.append(_Token("duration", _duration_us(num, 1000, i), i))
                i = j + 2
                continue
            if text[j : j + 1] == "s" and not text[j + 1 : j + 2].isalnum():
                tokens.append(_Token("duration", _duration_us(num, 1_000_000, i), i))
                i = j + 1
                continue
            try:
                value: Union[int, float] = int(num) if "." not in num else float(num)
            except ValueError:
                raise QuerySyntaxError(f"bad number {num!r}", i) from None
            tokens.append(_Token("number", value, i))
            i = j
            continue
        if ch.isalpha() or ch == "_":
            j = i + 1
            while j < n and (text[j].isalnum() or text[j] == "_"):
                j += 1
            tokens.append(_Token("ident", text[i:j], i))
            i = j
            continue
        for sym in _SYMBOLS:
            if text.startswith(sym, i):
                tokens.append(_Token("symbol", sym, i))
                i += len(sym)
                break
        else:
            raise QuerySyntaxError(f"unexpected character {ch!r}", i)
    tokens.append(_Token("end", None, n))
    return tokens


def _duration_us(num: str, scale: int, pos: int) -> int:
    if "." in num:
        raise QuerySyntaxError("durations take an integer count", pos)
    return int(num) * scale


# --- parser ----------------------------------------------------------------


class _Parser:
    def __init__(self, text: str):
        self.text = text
        self.tokens = _tokenize(text)
        self.i = 0

    def peek(self) -> _Token:
        return self.tokens[self.i]

    def take(self) -> _Token:
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def expect_symbol(self, sym: str) -> _Token:
        tok = self.take()
        if tok.kind != "symbol" or tok.value != sym:
            raise QuerySyntaxError(f"expected {sym!r}", tok.pos)
        return tok

    def arg_separator(self, op: str, have: int, want: int) -> None:
        """Between arguments: a ',' must follow, ')' means too few."""
        tok = self.take()
        if tok.kind == "symbol" and tok.value == ",":
            return
        if tok.kind == "symbol" and tok.value == ")":
            raise ArityError(f"{op} expects {want} arguments, got {have}", tok.pos)
        raise QuerySyntaxError("expected ','", tok.pos)

    def close_args(self, op: str, want: int) -> None:
        tok = self.take()
        if tok.kind == "symbol" and tok.value == ")":
            return
        if tok.kind == "symbol" and tok.value == ",":
            raise ArityError(f"{op} expects {want} arguments", tok.pos)
        raise QuerySyntaxError("expected ')'", tok.pos)

    def parse(self) -> OperatorSpec:
        root = self.expr()
        tail = self.peek()
        if tail.kind != "end":
            raise QuerySyntaxError("trailing input after query", tail.pos)
        return root

    def expr(self) -> OperatorSpec:
        tok = self.take()
        if tok.kind != "ident":
            raise QuerySyntaxError("expected an operator name", tok.pos)
        op = tok.value
        if op not in OPERATORS:
            raise UnknownOperator(f"unknown operator {op!r}", tok.pos)
        self.expect_symbol("(")
        if op == "WINDOW":
            return self.window(tok.pos)
        if op == "FILTER":
            return self.filter(tok.pos)
        if op == "JOIN":
            return self.join(tok.pos)
        if op == "AGGREGATE":
            return self.aggregate(tok.pos)
        if op == "HEATMAP":
            return self.heatmap(tok.pos)
        return self.predict(tok.pos)

    def window(self, pos: int) -> OperatorSpec:
        tok = self.take()
        if tok.kind != "ident":
            raise QuerySyntaxError("WINDOW takes a source stream name", tok.pos)
        nxt = self.peek()
        if nxt.kind == "symbol" and nxt.value == "(":
            raise QuerySyntaxError("WINDOW takes a source stream, not an operator", tok.pos)
        self.arg_separator("WINDOW", 1, 2)
        dur = self.take()
        if dur.kind != "duration":
            raise QuerySyntaxError("expected a duration like 4s or 500ms", dur.pos)
        self.close_args("WINDOW", 2)
        return OperatorSpec(
            "window",
            (("duration_us", dur.value), ("source", tok.value)),
            (),
            pos,
        )

    def filter(self, pos: int) -> OperatorSpec:
        child = self.expr()
        self.arg_separator("FILTER", 1, 2)
        attr = self.take()
        if attr.kind != "quoted":
            raise QuerySyntaxError("expected a quoted attribute like 'latitude'", attr.pos)
        op_tok = self.take()
        if op_tok.kind != "symbol" or op_tok.value not in COMPARISONS:
            raise QuerySyntaxError("expected a comparison (< > <= >= = !=)", op_tok.pos)
        val = self.take()
        if val.kind not in ("number", "quoted"):
            raise QuerySyntaxError("expected a number or quoted string", val.pos)
        self.close_args("FILTER", 2)
        return OperatorSpec(
            "filter",
            (("attr", attr.value), ("op", op_tok.value), ("value", val.value)),
            (child,),
            pos,
        )

    def join(self, pos: int) -> OperatorSpec:
        left = self.expr()
        self.arg_separator("JOIN", 1, 3)
        right = self.expr()
        self.arg_separator("JOIN", 2, 3)
        ls, la = self.qualified_attr()
        eq = self.take()
        if eq.kind != "symbol" or eq.value != "=":
            raise QuerySyntaxError("join condition needs '='", eq.pos)
        rs, ra = self.qualified_attr()
        self.close_args("JOIN", 3)
        return OperatorSpec(
            "join",
            (
                ("left_attr", la),
                ("left_source", ls),
                ("right_attr", ra),
                ("right_source", rs),
            ),
            (left, right),
            pos,
        )

    def qualified_attr(self) -> Tuple[str, str]:
        src = self.take()
        if src.kind != "ident":
            raise QuerySyntaxError("expected a source name", src.pos)
        self.expect_symbol(".")
        attr = self.take()
        if attr.kind != "quoted":
            raise QuerySyntaxError("expected a quoted attribute", attr.pos)
        return src.value, attr.value

    def aggregate(self, pos: int) -> OperatorSpec:
        fn = self.take()
        if fn.kind != "ident":
            raise QuerySyntaxError("expected an aggregate function name", fn.pos)
        self.arg_separator("AGGREGATE", 1, 3)
        attr = self.take()
        if attr.kind != "quoted":
            raise QuerySyntaxError("expected a quoted attribute", attr.pos)
        self.arg_separator("AGGREGATE", 2, 3)
        child = self.expr()
        self.close_args("AGGREGATE", 3)
        return OperatorSpec(
            "aggregate",
            (("attr", attr.value), ("fn", fn.value)),
            (child,),
            pos,
            (("fn", fn.pos),),
        )

    def heatmap(self, pos: int) -> OperatorSpec:
        cell = self.take()
        if cell.kind != "quoted":
            raise QuerySyntaxError("expected a quoted cell size like '0.5'", cell.pos)
        self.arg_separator("HEATMAP", 1, 3)
        area = self.take()
        if area.kind != "quoted":
            raise QuerySyntaxError(
                "expected a quoted area 'minLat,minLon,maxLat,maxLon'", area.pos
            )
        self.arg_separator("HEATMAP", 2, 3)
        child = self.expr()
        self.close_args("HEATMAP", 3)
        return OperatorSpec(
            "heatmap",
            (("area_text", area.value), ("cell_text", cell.value)),
            (child,),
            pos,
            (("area_text", area.pos), ("cell_text", cell.pos)),
        )

    def predict(self, pos: int) -> OperatorSpec:
        interval = self.take()
        if interval.kind != "duration":
            raise QuerySyntaxError("expected an emission interval like 30s", interval.pos)
        self.arg_separator("PREDICT", 1, 2)
        child = self.expr()
        self.close_args("PREDICT", 2)
        return OperatorSpec(
            "predict",
            (("horizon_us", PREDICT_HORIZON_US), ("interval_us", interval.value)),
            (child,),
            pos,
        )


def parse_query(text: str) -> QueryAst:
    """Parse a query expression; raises QueryError subclasses on bad input."""
    return QueryAst(_Parser(text).parse(), text)


# --- validation ------------------------------------------------------------


def validate(ast: QueryAst) -> List[Diagnostic]:
    """Value-level checks on a parsed query. Empty list means valid."""
    diags: List[Diagnostic] = []

    def walk(node: OperatorSpec) -> None:
        if node.kind == "window":
            if node.param("duration_us") <= 0:
                diags.append(
                    Diagnostic("InvalidDuration", "window duration must be positive", node.position)
                )
        elif node.kind == "predict":
            if node.param("interval_us") <= 0:
                diags.append(
                    Diagnostic(
                        "InvalidDuration", "emission interval must be positive", node.position
                    )
                )
        elif node.kind == "aggregate":
            fn = node.param("fn")
            if fn not in AGGREGATE_FNS:
                diags.append(
                    Diagnostic(
                        "UnknownAggregate",
                        f"unknown aggregate {fn!r}, pick one of {', '.join(AGGREGATE_FNS)}",
                        node.param_position("fn"),
                    )
                )
        elif node.kind == "heatmap":
            if parse_cell_size(node) is None:
                diags.append(
                    Diagnostic(
                        "InvalidCellSize",
                        f"cell size {node.param('cell_text')!r} must be a positive number",
                        node.param_position("cell_text"),
                    )
                )
            if parse_area(node) is None:
                diags.append(
                    Diagnostic(
                        "InvalidArea",
                        "area must be 'minLat,minLon,maxLat,maxLon' with min < max",
                        node.param_position("area_text"),
                    )
                )
        elif node.kind == "join":
            subtree = QueryAst(node).sources
            for key in ("left_source", "right_source"):
                src = node.param(key)
                if src not in subtree:
                    diags.append(
                        Diagnostic(
                            "UnknownJoinSource",
                            f"join condition names {src!r} which no window below provides",
                            node.position,
                        )
                    )
        for child in node.children:
            walk(child)

    walk(ast.root)
    return diags


def parse_cell_size(node: OperatorSpec) -> Optional[float]:
    try:
        cell = float(node.param("cell_text"))
    except ValueError:
        return None
    return cell if cell > 0 else None


def parse_area(node: OperatorSpec) -> Optional[Tuple[float, float, float, float]]:
    parts = node.param("area_text").split(",")
    if len(parts) != 4:
        return None
    try:
        min_lat, min_lon, max_lat, max_lon = (float(p) for p in parts)
    except ValueError:
        return None
    if min_lat >= max_lat or min_lon >= max_lon:
        return None
    return (min_lat, min_lon, max_lat, max_lon)


# --- canonical form ---------------------------------------------------------


def _fmt_duration(us: int) -> str:
    if us % 1_000_000 == 0:
        return f"{us // 1_000_000}s"
    return f"{us // 1000}ms"


def _fmt_const(v) -> str:
    if isinstance(v, str):
        return f"'{v}'"
    return repr(v) if isinstance(v, float) else str(v)


def to_canonical_expression(ast: QueryAst) -> str:
    """Whitespace-free normal form; the query's identity string."""

    def emit(node: OperatorSpec) -> str:
        k = node.kind
        if k == "window":
            return f"WINDOW({node.param('source')},{_fmt_duration(node.param('duration_us'))})"
        if k == "filter":
            return (
                f"FILTER({emit(node.children[0])},"
                f"'{node.param('attr')}'{node.param('op')}{_fmt_const(node.param('value'))})"
            )
        if k == "join":
            return (
                f"JOIN({emit(node.children[0])},{emit(node.children[1])},"
                f"{node.param('left_source')}.'{node.param('left_attr')}'"
                f"={node.param('right_source')}.'{node.param('right_attr')}')"
            )
        if k == "aggregate":
            return f"AGGREGATE({node.param('fn')},'{node.param('attr')}',{emit(node.children[0])})"
        if k == "heatmap":
            # quoted texts are kept verbatim so parse(canonical(q)) == q
            return (
                f"HEATMAP('{node.param('cell_text')}','{node.param('area_text')}',"
                f"{emit(node.children[0])})"
            )
        return f"PREDICT({_fmt_duration(node.param('interval_us'))},{emit(node.children[0])})"

    return emit(ast.root)


def ast_to_dict(ast: QueryAst) -> dict:
    """JSON-ready view of a parsed query."""

    def node(spec: OperatorSpec) -> dict:
        return {
            "kind": spec.kind,
            "params": dict(spec.params),
            "children": [node(c) for c in spec.children],
        }

    return {
        "canonical": to_canonical_expression(ast),
        "sources": list(ast.sources),
        "root": node(ast.root),
    }
