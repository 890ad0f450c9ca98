"""Hierarchical content names.

A name is an ordered sequence of non-empty UTF-8 components, written
``/a/b/c``. Names are the lookup key for every forwarding table, so the
type is a thin tuple subclass: hashing, equality and ordering come for
free and stay cheap on the forwarding fast path.
"""

from __future__ import annotations

from typing import Iterable, Optional


class InvalidName(ValueError):
    """Raised for empty names or names with empty components."""


class Name(tuple):
    """An immutable hierarchical name."""

    __slots__ = ()

    def __new__(cls, components: Iterable[str]):
        comps = tuple(components)
        if not comps:
            raise InvalidName("name needs at least one component")
        for c in comps:
            if not isinstance(c, str) or not c:
                raise InvalidName(f"empty or non-string component in {comps!r}")
        return tuple.__new__(cls, comps)

    @classmethod
    def from_uri(cls, uri: str) -> "Name":
        """Parse ``/a/b/c``. A single leading slash is required."""
        if not uri.startswith("/"):
            raise InvalidName(f"name URI must start with '/': {uri!r}")
        return cls(uri[1:].split("/"))

    @property
    def uri(self) -> str:
        return "/" + "/".join(self)

    def has_prefix(self, prefix: tuple) -> bool:
        return self[: len(prefix)] == tuple(prefix)

    def extend(self, *components: str) -> "Name":
        return Name(tuple(self) + components)

    def __repr__(self) -> str:  # pragma: no cover - debug aid
        return f"Name({self.uri!r})"


def longest_prefix_match(name: tuple, prefixes: Iterable[tuple]) -> Optional[tuple]:
    """Return the longest entry of ``prefixes`` that prefixes ``name``.

    Ties cannot occur (prefixes of equal length are either equal or not
    prefixes at all). Returns None when nothing matches.
    """
    best = None
    best_len = -1
    n = len(name)
    for p in prefixes:
        lp = len(p)
        if lp <= n and lp > best_len and name[:lp] == tuple(p):
            best, best_len = p, lp
    return best
