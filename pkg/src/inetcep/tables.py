"""Per-node forwarding state: content store, pending interest table, FIB.

The PIT carries both classic per-Interest entries (expire after a
lifetime, consumed by the matching Data) and continuous entries (installed
by AddContinuousInterest, never expire, removed only by an explicit
RemoveContinuousInterest). Continuous entries remember which stream
prefixes feed them and the newest event timestamp seen, which gates
reprocessing of duplicate stream packets.
"""

from __future__ import annotations

from collections import OrderedDict
from typing import Dict, Iterable, List, Optional, Tuple

from .names import Name

CS_CAPACITY = 4096
PIT_LIFETIME_US = 4_000_000  # plain entries only


class CsEntry:
    __slots__ = ("name", "body", "ts")

    def __init__(self, name: Name, body: object, ts: int):
        self.name = name
        self.body = body
        self.ts = ts


class ContentStore:
    """Exact-match LRU cache of named content."""

    def __init__(self, capacity: int = CS_CAPACITY):
        if capacity < 1:
            raise ValueError("content store capacity must be positive")
        self.capacity = capacity
        self._entries: "OrderedDict[Name, CsEntry]" = OrderedDict()

    def lookup(self, name: Name) -> Optional[CsEntry]:
        entry = self._entries.get(name)
        if entry is not None:
            self._entries.move_to_end(name)
        return entry

    def insert(self, name: Name, body: object, ts: int) -> bool:
        """Insert unless a fresher entry (newer ts) is already cached.

        Returns True when the store changed.
        """
        current = self._entries.get(name)
        if current is not None:
            if ts < current.ts:
                return False
            current.body = body
            current.ts = ts
            self._entries.move_to_end(name)
            return True
        self._entries[name] = CsEntry(name, body, ts)
        if len(self._entries) > self.capacity:
            self._entries.popitem(last=False)
        return True

    def __len__(self) -> int:
        return len(self._entries)

    def names(self) -> List[Name]:
        return list(self._entries)


class PitEntry:
    __slots__ = ("name", "faces", "continuous", "expiry", "source_prefixes", "last_ts")

    def __init__(
        self,
        name: Name,
        continuous: bool,
        expiry: Optional[int],
        source_prefixes: Tuple[Name, ...] = (),
    ):
        self.name = name
        self.faces: List[int] = []
        self.continuous = continuous
        self.expiry = expiry
        self.source_prefixes = source_prefixes
        self.last_ts = 0


class Pit:
    """Pending interest table with a per-stream index for continuous entries."""

    def __init__(self):
        self._entries: Dict[Name, PitEntry] = {}
        # stream prefix -> continuous entries fed by it
        self._by_source: Dict[Name, List[PitEntry]] = {}
        # expiry second -> plain entry names due then, swept lazily
        self._due: Dict[int, List[Name]] = {}

    def lookup(self, name: Name) -> Optional[PitEntry]:
        return self._entries.get(name)

    def add_face(
        self,
        name: Name,
        face: int,
        now: int,
        continuous: bool = False,
        source_prefixes: Tuple[Name, ...] = (),
    ) -> PitEntry:
        """Create or extend an entry. Adding a known face is a no-op."""
        entry = self._entries.get(name)
        if entry is None:
            expiry = None if continuous else now + PIT_LIFETIME_US
            entry = PitEntry(name, continuous, expiry, source_prefixes)
            self._entries[name] = entry
            if continuous:
                for prefix in source_prefixes:
                    self._by_source.setdefault(prefix, []).append(entry)
            else:
                self._due.setdefault(expiry // 1_000_000, []).append(name)
        if face not in entry.faces:
            entry.faces.append(face)
        return entry

    def remove_face(self, name: Name, face: int) -> Optional[PitEntry]:
        """Drop one face; delete the entry when no face remains.

        Returns the entry (its face list tells whether it survived), or
        None when the name was unknown.
        """
        entry = self._entries.get(name)
        if entry is None:
            return None
        if face in entry.faces:
            entry.faces.remove(face)
        if not entry.faces:
            self.drop(name)
        return entry

    def drop(self, name: Name) -> None:
        entry = self._entries.pop(name, None)
        if entry is not None and entry.continuous:
            for prefix in entry.source_prefixes:
                bucket = self._by_source.get(prefix)
                if bucket is not None:
                    bucket.remove(entry)
                    if not bucket:
                        del self._by_source[prefix]

    def continuous_for_source(self, stream_name: Name) -> List[PitEntry]:
        return self._by_source.get(stream_name, ())

    def sweep(self, now: int) -> int:
        """Expire plain entries that are past their lifetime."""
        expired = 0
        for sec in [s for s in self._due if s * 1_000_000 <= now]:
            for name in self._due.pop(sec):
                entry = self._entries.get(name)
                if entry is not None and entry.expiry is not None and entry.expiry <= now:
                    del self._entries[name]
                    expired += 1
        return expired

    def continuous_entries(self) -> List[PitEntry]:
        return [e for e in self._entries.values() if e.continuous]

    def __len__(self) -> int:
        return len(self._entries)

    def names(self) -> List[Name]:
        return list(self._entries)


class Fib:
    """Prefix routes, longest prefix match on lookup."""

    def __init__(self):
        self._routes: Dict[Name, List[int]] = {}
        self._lengths: List[int] = []  # distinct prefix lengths, descending

    def add_route(self, prefix: Name, face: int) -> None:
        faces = self._routes.setdefault(prefix, [])
        if face not in faces:
            faces.append(face)
        if len(prefix) not in self._lengths:
            self._lengths = sorted({len(p) for p in self._routes}, reverse=True)

    def lookup(self, name: Name) -> List[int]:
        """Faces of the longest matching prefix, [] when none matches."""
        match = self._routes.get(name)
        if match is not None:  # exact hit, the common case for stream names
            return match
        n = len(name)
        for lp in self._lengths:
            if lp < n:
                faces = self._routes.get(name[:lp])
                if faces is not None:
                    return faces
        return []

    def routes(self) -> Dict[Name, List[int]]:
        return dict(self._routes)

    def __len__(self) -> int:
        return len(self._routes)


def dump_tables(cs: ContentStore, pit: Pit, fib: Fib) -> dict:
    """JSON-ready snapshot of the three tables, for inspection and tests."""
    return {
        "cs": [
            {"name": e.name.uri, "ts": e.ts}
            for e in (cs.lookup(n) for n in cs.names())
            if e is not None
        ],
        "pit": [
            {
                "name": e.name.uri,
                "faces": list(e.faces),
                "continuous": e.continuous,
                "last_ts": e.last_ts,
                "sources": [p.uri for p in e.source_prefixes],
            }
            for e in (pit.lookup(n) for n in pit.names())
            if e is not None
        ],
        "fib": {p.uri: list(faces) for p, faces in fib.routes().items()},
    }
