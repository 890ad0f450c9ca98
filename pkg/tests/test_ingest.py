"""Synthetic stream generation and delimited file loading."""

import math

import pytest

from inetcep.ingest import (
    GPS_SCHEMA,
    PLUG_SCHEMA,
    SchemaMismatch,
    load_csv,
    schema_names,
    stream_rows,
    synth_stream,
)


def test_schema_names():
    assert schema_names("gps") == (
        "ts", "s_id", "latitude", "longitude", "altitude", "accuracy", "distance", "speed",
    )
    assert schema_names("plug") == (
        "ts", "id", "value", "property", "plug_id", "household_id", "house_id",
    )
    with pytest.raises(SchemaMismatch):
        schema_names("nope")


def test_same_seed_same_stream():
    a = list(stream_rows("gps", "GPS_S1", 500.0, 1_000_000, seed=42))
    b = list(stream_rows("gps", "GPS_S1", 500.0, 1_000_000, seed=42))
    assert a == b and len(a) > 0


def test_streams_diverge_by_seed_and_by_source():
    base = list(stream_rows("gps", "GPS_S1", 500.0, 1_000_000, seed=42))
    assert base != list(stream_rows("gps", "GPS_S1", 500.0, 1_000_000, seed=43))
    other = list(stream_rows("gps", "GPS_S2", 500.0, 1_000_000, seed=42))
    assert [r[0] for r in base] != [r[0] for r in other]


def test_timestamps_strictly_increase_inside_the_horizon():
    rows = list(stream_rows("gps", "GPS_S1", 2000.0, 500_000, seed=7))
    stamps = [r[0] for r in rows]
    assert all(b > a for a, b in zip(stamps, stamps[1:]))
    assert stamps[0] >= 1 and stamps[-1] < 500_000
    offset = list(stream_rows("gps", "GPS_S1", 2000.0, 500_000, seed=7, start_us=100_000))
    assert offset[0][0] > 100_000


def test_arrival_count_tracks_the_rate():
    rate, seconds = 1000.0, 60
    n = sum(1 for _ in stream_rows("gps", "GPS_S1", rate, seconds * 1_000_000, seed=11))
    mean = rate * seconds
    assert abs(n - mean) < 3 * math.sqrt(mean)


def test_attribute_values_stay_in_range():
    rows = list(stream_rows("gps", "GPS_S1", 1000.0, 1_000_000, seed=3))
    names = [a.name for a in GPS_SCHEMA]
    lat, lon = names.index("latitude"), names.index("longitude")
    assert all(-90.0 <= r[lat] < 90.0 for r in rows)
    assert all(-180.0 <= r[lon] < 180.0 for r in rows)
    assert all(r[1] == "GPS_S1" for r in rows)  # s_id carries the stream id
    plug = list(stream_rows("plug", "PLUG_S1", 1000.0, 1_000_000, seed=3))
    prop = [a.name for a in PLUG_SCHEMA].index("property")
    assert {r[prop] for r in plug} <= {"work", "load"}


def test_stream_guards():
    with pytest.raises(SchemaMismatch):
        next(stream_rows("nope", "X", 1.0, 1000, seed=1))
    with pytest.raises(ValueError):
        next(stream_rows("gps", "X", 0.0, 1000, seed=1))


def test_synth_stream_is_one_labelled_batch():
    batch = synth_stream("plug", "PLUG_S1", 200.0, 1_000_000, seed=5)
    assert batch.schema == schema_names("plug")
    assert len(batch.rows) > 0


GPS_LINES = [
    "ts,s_id,latitude,longitude,altitude,accuracy,distance,speed",
    "1000,S1,49.0,8.4,100.0,2.0,1.0,3.0",
    "2000,S1,49.1,8.5,100.0,2.0,1.0,3.0",
]


def test_load_csv_scales_header_led_files(tmp_path):
    path = tmp_path / "gps.csv"
    path.write_text("\n".join(GPS_LINES))
    batch, warnings = load_csv(path, "gps", ts_unit="ms")
    assert warnings == []
    assert batch.schema == schema_names("gps")
    assert [r[0] for r in batch.rows] == [1_000_000, 2_000_000]
    assert batch.rows[0][2] == 49.0


def test_load_csv_accepts_pipes_and_other_units(tmp_path):
    path = tmp_path / "gps.psv"
    path.write_text("1|S1|49.0|8.4|100.0|2.0|1.0|3.0\n")
    batch, warnings = load_csv(path, "gps", ts_unit="s")
    assert warnings == []
    assert batch.rows[0][0] == 1_000_000


def test_load_csv_skips_bad_rows_with_warnings(tmp_path):
    lines = GPS_LINES + [
        "3000,S1,49.0",  # wrong width
        "oops,S1,49.0,8.4,100.0,2.0,1.0,3.0",  # unparsable ts
        "1500,S1,49.0,8.4,100.0,2.0,1.0,3.0",  # goes backwards for S1
        "1500,S2,49.0,8.4,100.0,2.0,1.0,3.0",  # fine: different source
    ]
    path = tmp_path / "gps.csv"
    path.write_text("\n".join(lines))
    batch, warnings = load_csv(path, "gps")
    assert len(batch.rows) == 3
    assert len(warnings) == 3
    assert any("not increasing" in w for w in warnings)


def test_load_csv_rejects_a_foreign_header(tmp_path):
    path = tmp_path / "x.csv"
    path.write_text("time,who\n1,2\n")
    with pytest.raises(SchemaMismatch):
        load_csv(path, "gps")
    with pytest.raises(SchemaMismatch):
        load_csv(path, "nope")
    with pytest.raises(SchemaMismatch):
        load_csv(path, "gps", ts_unit="h")
