"""Event sources: dataset files and synthetic streams.

Two record schemas are built in: GPS position samples and smart-plug
readings. CSV files may use ``,`` or ``|`` as delimiter and may carry a
header line; malformed rows are skipped with a warning rather than
aborting the load. Synthetic streams draw Poisson arrivals and uniform
attribute values from a stream-scoped seeded generator, so the same seed
always yields byte-identical events.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Dict, Iterator, List, Tuple

import numpy as np

from .packets import TupleBatch

US_PER_UNIT = {"us": 1, "ms": 1_000, "s": 1_000_000}


class SchemaMismatch(ValueError):
    """Header or row shape cannot belong to the requested schema."""


@dataclass(frozen=True)
class AttrSpec:
    name: str
    parse: Callable[[str], object]
    lo: float = 0.0
    hi: float = 1.0
    choices: tuple = ()

    def draw_batch(self, rng: np.random.Generator, n: int) -> list:
        if self.choices:
            picks = rng.integers(0, len(self.choices), n)
            return [self.choices[i] for i in picks]
        if self.parse is int:
            return rng.integers(int(self.lo), int(self.hi), n).tolist()
        return rng.uniform(self.lo, self.hi, n).tolist()


GPS_SCHEMA = (
    AttrSpec("ts", int),
    AttrSpec("s_id", str, choices=("S1",)),
    AttrSpec("latitude", float, -90.0, 90.0),
    AttrSpec("longitude", float, -180.0, 180.0),
    AttrSpec("altitude", float, 0.0, 1000.0),
    AttrSpec("accuracy", float, 1.0, 10.0),
    AttrSpec("distance", float, 0.0, 100.0),
    AttrSpec("speed", float, 0.0, 30.0),
)

PLUG_SCHEMA = (
    AttrSpec("ts", int),
    AttrSpec("id", int, 0, 1_000_000),
    AttrSpec("value", float, 0.0, 5000.0),
    AttrSpec("property", str, choices=("work", "load")),
    AttrSpec("plug_id", int, 0, 10),
    AttrSpec("household_id", int, 0, 10),
    AttrSpec("house_id", int, 0, 10),
)

SCHEMAS: Dict[str, Tuple[AttrSpec, ...]] = {"gps": GPS_SCHEMA, "plug": PLUG_SCHEMA}


def schema_names(schema_name: str) -> Tuple[str, ...]:
    try:
        return tuple(a.name for a in SCHEMAS[schema_name])
    except KeyError:
        raise SchemaMismatch(f"unknown schema {schema_name!r}") from None


def load_csv(
    path: str | Path,
    schema_name: str,
    ts_unit: str = "ms",
) -> Tuple[TupleBatch, List[str]]:
    """Load a delimited event file.

    Returns the batch and a list of warnings for skipped rows. Raises
    SchemaMismatch when a header line is present but names the wrong
    attributes, and on an unknown schema or timestamp unit.
    """
    attrs = SCHEMAS.get(schema_name)
    if attrs is None:
        raise SchemaMismatch(f"unknown schema {schema_name!r}")
    scale = US_PER_UNIT.get(ts_unit)
    if scale is None:
        raise SchemaMismatch(f"unknown timestamp unit {ts_unit!r}")
    names = tuple(a.name for a in attrs)
    text = Path(path).read_text(encoding="utf-8")
    rows: List[tuple] = []
    warnings: List[str] = []
    last_ts: Dict[object, int] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if not line:
            continue
        parts = line.split("|") if "|" in line else line.split(",")
        if lineno == 1 and parts and not _is_number(parts[0]):
            if tuple(p.strip() for p in parts) != names:
                raise SchemaMismatch(
                    f"header {parts!r} does not match schema {schema_name!r} {names}"
                )
            continue
        if len(parts) != len(attrs):
            warnings.append(f"line {lineno}: expected {len(attrs)} fields, got {len(parts)}")
            continue
        try:
            row = tuple(a.parse(p.strip()) for a, p in zip(attrs, parts))
        except ValueError as exc:
            warnings.append(f"line {lineno}: {exc}")
            continue
        ts = row[0] * scale
        key = row[1]
        if last_ts.get(key, -1) >= ts:
            warnings.append(f"line {lineno}: timestamp not increasing for source {key!r}")
            continue
        last_ts[key] = ts
        rows.append((ts,) + row[1:])
    return TupleBatch(names, rows), warnings


def _is_number(text: str) -> bool:
    try:
        float(text)
        return True
    except ValueError:
        return False


_CHUNK = 4096


def stream_rows(
    schema_name: str,
    source_id: str,
    rate_evps: float,
    duration_us: int,
    seed: int,
    start_us: int = 0,
) -> Iterator[tuple]:
    """Poisson arrivals over [start, duration) with uniform attribute values.

    Timestamps are strictly increasing integer microseconds; inter-arrival
    gaps round to at least 1us. The generator is seeded from (seed,
    source), so streams are independent of each other and reproducible.
    Values are drawn a chunk at a time; at the rates the simulator asks
    for, per-row draws are what the profile ends up full of.
    """
    attrs = SCHEMAS.get(schema_name)
    if attrs is None:
        raise SchemaMismatch(f"unknown schema {schema_name!r}")
    if rate_evps <= 0:
        raise ValueError("rate must be positive")
    digest = hashlib.sha256(f"{seed}|{source_id}".encode()).digest()
    rng = np.random.default_rng(int.from_bytes(digest[:8], "little"))
    mean_gap_us = 1_000_000 / rate_evps
    ts = start_us
    while True:
        gaps = np.maximum(1, np.rint(rng.exponential(mean_gap_us, _CHUNK)))
        stamps = (ts + np.cumsum(gaps, dtype=np.int64)).tolist()
        columns = [
            [source_id] * _CHUNK if a.name == "s_id" else a.draw_batch(rng, _CHUNK)
            for a in attrs[1:]
        ]
        for row in zip(stamps, *columns):
            if row[0] >= duration_us:
                return
            yield row
        ts = stamps[-1]


def synth_stream(
    schema_name: str,
    source_id: str,
    rate_evps: float,
    duration_us: int,
    seed: int,
) -> TupleBatch:
    """The whole synthetic stream as one batch; see stream_rows."""
    attrs = SCHEMAS[schema_name]
    rows = list(stream_rows(schema_name, source_id, rate_evps, duration_us, seed))
    return TupleBatch(tuple(a.name for a in attrs), rows)
