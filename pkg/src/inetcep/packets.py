"""Packet types and the wire codec.

Five packet types share one fixed header. Interest/Data are the classic
pull pair; AddContinuousInterest/RemoveContinuousInterest open and close a
standing subscription; DataStream carries produced events downstream
without a preceding Interest.

Wire layout (big endian):

    version   u8   always 0x01
    pkt_type  u8   type code
    pkt_len   u16  total encoded length
    hop_limit u8
    flags     u8   bit 0: management traffic
    hdr_len   u16  fixed header length (12)
    msg_type  u16  mirrors pkt_type
    msg_len   u16  mirrors pkt_len (single message per packet)
    name      u16 component count, then per component u16 length + UTF-8
    tlv_len   u16  always 0 (reserved option region)
    payload   remaining bytes

Stream payloads are line-oriented UTF-8: one header line naming the
attributes followed by one ``ts|v1|...|vm`` record per event. Timestamps
are integer microseconds and strictly increase per producer.
"""

from __future__ import annotations

import struct
from typing import List, Optional, Sequence, Tuple

from .names import Name

INTEREST = 0x00
DATA = 0x01
ADD_CONTINUOUS_INTEREST = 0x02
REMOVE_CONTINUOUS_INTEREST = 0x03
DATA_STREAM = 0x04

PACKET_TYPES = (
    INTEREST,
    DATA,
    ADD_CONTINUOUS_INTEREST,
    REMOVE_CONTINUOUS_INTEREST,
    DATA_STREAM,
)

TYPE_NAMES = {
    INTEREST: "interest",
    DATA: "data",
    ADD_CONTINUOUS_INTEREST: "add_continuous_interest",
    REMOVE_CONTINUOUS_INTEREST: "remove_continuous_interest",
    DATA_STREAM: "data_stream",
}

MAX_PACKET_SIZE = 65535
DEFAULT_HOP_LIMIT = 32

FLAG_MANAGEMENT = 0x01

VERSION = 0x01
_HEADER = struct.Struct(">BBHBBHHH")
HEADER_LEN = _HEADER.size  # 12


class SizeExceeded(ValueError):
    """Encoded packet would exceed MAX_PACKET_SIZE."""


class MalformedPacket(ValueError):
    """Bytes do not decode to a well-formed packet."""


class Packet:
    """One packet of any type.

    ``payload`` is raw bytes at the codec boundary. Inside the simulator
    packets travel by reference and ``body`` may hold the decoded object
    (a tuple batch, a complex event) to keep the hot path allocation-free;
    ``encode`` serialises ``body`` on demand when ``payload`` is empty.
    """

    __slots__ = ("ptype", "name", "hop_limit", "flags", "payload", "body")

    def __init__(
        self,
        ptype: int,
        name: Name,
        payload: bytes = b"",
        hop_limit: int = DEFAULT_HOP_LIMIT,
        flags: int = 0,
        body: object = None,
    ):
        self.ptype = ptype
        self.name = name
        self.payload = payload
        self.hop_limit = hop_limit
        self.flags = flags
        self.body = body

    @property
    def is_management(self) -> bool:
        return bool(self.flags & FLAG_MANAGEMENT)

    def __repr__(self) -> str:  # pragma: no cover - debug aid
        return f"Packet({TYPE_NAMES.get(self.ptype, self.ptype)}, {self.name.uri})"


def encode_packet(pkt: Packet) -> bytes:
    """Serialise to wire bytes. Raises SizeExceeded past 65535 bytes."""
    if pkt.ptype not in TYPE_NAMES:
        raise MalformedPacket(f"unknown packet type {pkt.ptype:#x}")
    if not (0 <= pkt.hop_limit <= 255):
        raise MalformedPacket(f"hop limit out of range: {pkt.hop_limit}")
    payload = pkt.payload
    if not payload and pkt.body is not None:
        payload = _encode_body(pkt.body)
    parts = [struct.pack(">H", len(pkt.name))]
    for comp in pkt.name:
        raw = comp.encode("utf-8")
        if len(raw) > 65535:
            raise SizeExceeded(f"name component of {len(raw)} bytes")
        parts.append(struct.pack(">H", len(raw)))
        parts.append(raw)
    parts.append(b"\x00\x00")  # zero-length TLV region
    name_tlv = b"".join(parts)
    total = HEADER_LEN + len(name_tlv) + len(payload)
    if total > MAX_PACKET_SIZE:
        raise SizeExceeded(f"packet of {total} bytes exceeds {MAX_PACKET_SIZE}")
    header = _HEADER.pack(
        VERSION, pkt.ptype, total, pkt.hop_limit, pkt.flags, HEADER_LEN, pkt.ptype, total
    )
    return header + name_tlv + payload


def decode_packet(data: bytes) -> Packet:
    """Parse wire bytes. Raises MalformedPacket on any inconsistency."""
    if len(data) < HEADER_LEN:
        raise MalformedPacket(f"truncated header: {len(data)} bytes")
    version, ptype, pkt_len, hop_limit, flags, hdr_len, msg_type, msg_len = _HEADER.unpack_from(
        data
    )
    if version != VERSION:
        raise MalformedPacket(f"unsupported version {version:#x}")
    if ptype not in TYPE_NAMES:
        raise MalformedPacket(f"unknown packet type {ptype:#x}")
    if pkt_len != len(data):
        raise MalformedPacket(f"length field {pkt_len} != actual {len(data)}")
    if hdr_len != HEADER_LEN:
        raise MalformedPacket(f"unexpected header length {hdr_len}")
    if msg_type != ptype or msg_len != pkt_len:
        raise MalformedPacket("message fields disagree with packet fields")
    off = HEADER_LEN
    try:
        (count,) = struct.unpack_from(">H", data, off)
        off += 2
        comps = []
        for _ in range(count):
            (clen,) = struct.unpack_from(">H", data, off)
            off += 2
            comps.append(data[off : off + clen].decode("utf-8"))
            if len(data) < off + clen:
                raise MalformedPacket("truncated name component")
            off += clen
        (tlv_len,) = struct.unpack_from(">H", data, off)
        off += 2 + tlv_len
    except struct.error as exc:
        raise MalformedPacket(f"truncated name region: {exc}") from None
    try:
        name = Name(comps)
    except ValueError as exc:
        raise MalformedPacket(str(exc)) from None
    if off > len(data):
        raise MalformedPacket("name region overruns packet")
    return Packet(ptype, name, payload=data[off:], hop_limit=hop_limit, flags=flags)


class TupleBatch:
    """A batch of event tuples sharing one schema.

    ``schema`` lists attribute names with ``ts`` first; every row is a
    plain tuple in schema order with row[0] the integer-microsecond
    timestamp.
    """

    __slots__ = ("schema", "rows")

    def __init__(self, schema: Tuple[str, ...], rows: List[tuple]):
        self.schema = schema
        self.rows = rows

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, TupleBatch)
            and self.schema == other.schema
            and self.rows == other.rows
        )

    def __repr__(self) -> str:  # pragma: no cover - debug aid
        return f"TupleBatch({self.schema}, {len(self.rows)} rows)"


class EventTuple:
    """Named view over one row of a batch; convenience for tests and apps."""

    __slots__ = ("schema", "row")

    def __init__(self, schema: Tuple[str, ...], row: tuple):
        self.schema = schema
        self.row = row

    @property
    def ts(self) -> int:
        return self.row[0]

    def __getitem__(self, attr: str):
        return self.row[self.schema.index(attr)]

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, EventTuple)
            and self.schema == other.schema
            and self.row == other.row
        )

    def __repr__(self) -> str:  # pragma: no cover - debug aid
        return f"EventTuple({dict(zip(self.schema, self.row))})"


def format_value(v) -> str:
    if isinstance(v, float):
        return repr(v)
    return str(v)


def parse_value(text: str):
    """Invert format_value: int, then float, else the raw string."""
    try:
        return int(text)
    except ValueError:
        pass
    try:
        return float(text)
    except ValueError:
        return text


def encode_tuples(batch: TupleBatch) -> bytes:
    if "ts" not in batch.schema or batch.schema[0] != "ts":
        raise ValueError(f"schema must lead with ts: {batch.schema}")
    lines = ["|".join(batch.schema)]
    for row in batch.rows:
        lines.append("|".join(format_value(v) for v in row))
    return "\n".join(lines).encode("utf-8")


def decode_tuples(payload: bytes) -> TupleBatch:
    text = payload.decode("utf-8")
    lines = text.split("\n")
    schema = tuple(lines[0].split("|"))
    if not schema or schema[0] != "ts":
        raise MalformedPacket(f"tuple payload must lead with ts: {lines[0]!r}")
    rows = []
    for line in lines[1:]:
        if not line:
            continue
        parts = line.split("|")
        if len(parts) != len(schema):
            raise MalformedPacket(f"row width {len(parts)} != schema width {len(schema)}")
        rows.append(tuple(parse_value(p) for p in parts))
    return TupleBatch(schema, rows)


def _encode_body(body: object) -> bytes:
    if isinstance(body, TupleBatch):
        return encode_tuples(body)
    if isinstance(body, bytes):
        return body
    if hasattr(body, "encode_payload"):
        return body.encode_payload()
    raise TypeError(f"cannot serialise packet body {type(body).__name__}")


def interest(name: Name, hop_limit: int = DEFAULT_HOP_LIMIT, flags: int = 0) -> Packet:
    return Packet(INTEREST, name, hop_limit=hop_limit, flags=flags)


def data(name: Name, payload: bytes = b"", body: object = None, flags: int = 0) -> Packet:
    return Packet(DATA, name, payload=payload, body=body, flags=flags)
