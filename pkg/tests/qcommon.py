"""Shared fixtures for query tests: the documented example queries and a
table of corrupted variants with the exact error offset each must report.

EXAMPLE_QUERIES maps a short label to (source text, expected canonical
form). The texts use the surface spacing a user would type; the canonical
form is whitespace-free and must be a parse fixed point.

MUTATIONS holds 30 broken queries as (text, channel, position) where
channel is "syntax" (the parser must raise with .position) or "validate"
(parsing succeeds but validate() must return a diagnostic at .position).
Positions are hand-counted character offsets into the text.
"""

from inetcep.query import QueryError, parse_query, validate

EXAMPLE_QUERIES = {
    "window": (
        "WINDOW(GPS_S1, 4s)",
        "WINDOW(GPS_S1,4s)",
    ),
    "filter": (
        "FILTER(WINDOW(GPS_S1, 4s),'latitude'<50)",
        "FILTER(WINDOW(GPS_S1,4s),'latitude'<50)",
    ),
    "join": (
        "JOIN(\n"
        "  FILTER(WINDOW(GPS_S1, 4s), 'latitude'<50),\n"
        "  FILTER(WINDOW(GPS_S2, 4s), 'latitude'<50),\n"
        "  GPS_S1.'ts' = GPS_S2.'ts'\n"
        ")",
        "JOIN(FILTER(WINDOW(GPS_S1,4s),'latitude'<50),"
        "FILTER(WINDOW(GPS_S2,4s),'latitude'<50),"
        "GPS_S1.'ts'=GPS_S2.'ts')",
    ),
    # the heatmap example's cell/area placeholders filled with usable values
    "heatmap": (
        "HEATMAP(\n  '0.005', '50.0,-5.0,54.0,1.0',\n  WINDOW(GPS_S1, 4s)\n)",
        "HEATMAP('0.005','50.0,-5.0,54.0,1.0',WINDOW(GPS_S1,4s))",
    ),
    "predict": (
        "PREDICT(30s, WINDOW(PLUG_S1, 4s))",
        "PREDICT(30s,WINDOW(PLUG_S1,4s))",
    ),
    # aggregate has no documented example; the surface form is part of the
    # language all the same
    "aggregate": (
        "AGGREGATE(avg, 'speed', WINDOW(GPS_S1, 4s))",
        "AGGREGATE(avg,'speed',WINDOW(GPS_S1,4s))",
    ),
}

MUTATIONS = [
    ("WINDOW(GPS_S1)", "syntax", 13),                  # missing duration
    ("WINDOW(,4s)", "syntax", 7),                      # missing source
    ("WINDOW(GPS_S1,4q)", "syntax", 14),               # bad duration unit
    ("WINDOW(GPS_S1,4s", "syntax", 16),                # unclosed call
    ("WINDO(GPS_S1,4s)", "syntax", 0),                 # unknown operator
    ("window(GPS_S1,4s)", "syntax", 0),                # operators are upper case
    ("", "syntax", 0),                                 # empty input
    ("FILTER(WINDOW(GPS_S1,4s))", "syntax", 24),       # filter without predicate
    ("FILTER(WINDOW(GPS_S1,4s),latitude<50)", "syntax", 25),    # unquoted attr
    ("FILTER(WINDOW(GPS_S1,4s),'latitude'?50)", "syntax", 35),  # bad comparison char
    ("FILTER(WINDOW(GPS_S1,4s),'latitude'<)", "syntax", 36),    # missing constant
    ("JOIN(WINDOW(GPS_S1,4s),WINDOW(GPS_S2,4s))", "syntax", 40),  # missing condition
    ("JOIN(WINDOW(GPS_S1,4s),WINDOW(GPS_S2,4s),GPS_S3.'ts'=GPS_S2.'ts')",
     "validate", 0),                                   # condition names a foreign source
    ("AGGREGATE(median,'speed',WINDOW(GPS_S1,4s))", "validate", 10),  # unknown fn
    ("AGGREGATE(avg,speed,WINDOW(GPS_S1,4s))", "syntax", 14),   # unquoted attr
    ("HEATMAP('abc','0,0,2,2',WINDOW(GPS_S1,4s))", "validate", 8),   # non-numeric cell
    ("HEATMAP('1','2,2,0,0',WINDOW(GPS_S1,4s))", "validate", 12),    # inverted bbox
    ("HEATMAP('1','0,0,2',WINDOW(GPS_S1,4s))", "validate", 12),      # 3-part bbox
    ("PREDICT(0s,WINDOW(PLUG_S1,4s))", "validate", 0),  # zero emission interval
    ("FILTER(WINDOW(GPS_S1,0s),'latitude'<50)", "validate", 7),  # zero window
    ("PREDICT(30s)", "syntax", 11),                    # predict without input
    ("WINDOW(GPS_S1,4s)x", "syntax", 17),              # trailing garbage
    ("FILTER(WINDOW(GPS_S1,4s),'latitude'<50", "syntax", 38),    # missing close paren
    ("JOIN(WINDOW(GPS_S1,4s),WINDOW(GPS_S2,4s),GPS_S1.ts=GPS_S2.'ts')",
     "syntax", 48),                                    # unquoted condition attr
    ("JOIN(WINDOW(GPS_S1,4s),WINDOW(GPS_S2,4s),'ts'=GPS_S2.'ts')",
     "syntax", 41),                                    # condition without source
    ("AGGREGATE('avg','speed',WINDOW(GPS_S1,4s))", "syntax", 10),  # quoted fn name
    ("WINDOW(4s,GPS_S1)", "syntax", 7),                # swapped arguments
    ("FILTER('latitude'<50,WINDOW(GPS_S1,4s))", "syntax", 7),    # swapped arguments
    ("WINDOW(GPS_S1,4)", "syntax", 14),                # unitless duration
    ("HEATMAP(5,'0,0,2,2',WINDOW(GPS_S1,4s))", "syntax", 8),     # unquoted cell
]


def mutation_position(text: str, channel: str) -> int:
    """Run one mutation and return the reported offset."""
    if channel == "syntax":
        try:
            parse_query(text)
        except QueryError as exc:
            return exc.position
        raise AssertionError(f"parsed without error: {text!r}")
    diags = validate(parse_query(text))
    assert diags, f"validated without diagnostics: {text!r}"
    return diags[0].position
