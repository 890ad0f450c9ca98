"""Network layouts.

Three canned layouts plus free-form:

* ``manhattan``: seven nodes. Brokers n1..n4 form a square grid and n7 is
  a third parallel branch, so three equal-length broker paths connect the
  producer side to the consumer side (n1-n2-n4, n1-n3-n4, n1-n7-n4).
  Producer n6 hangs off n1, consumer n5 off n4.
* ``line``: producer - brokers b1..bk - consumer, k configurable (3 by
  default, 1 gives the minimal single-broker chain).
* ``tree``: eight brokers in a binary tree (b1 root; b2 b3; b4..b7; b8
  under b4), producer at b8, consumer at b7, so traffic crosses the root.
* ``custom``: explicit node and link lists.

Links are full duplex: one entry creates both directed channels with the
same delay, bandwidth (events/s) and flow-control capacity (defaults to
the bandwidth). All paths are computed with sorted neighbor order, so
route tables never depend on construction order.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

from .names import Name

DEFAULT_DELAY_US = 1000
DEFAULT_BANDWIDTH = 100_000  # events per second per direction

PRODUCER = "producer"
CONSUMER = "consumer"
BROKER = "broker"


@dataclass(frozen=True)
class LinkSpec:
    a: str
    b: str
    delay_us: int = DEFAULT_DELAY_US
    bandwidth: int = DEFAULT_BANDWIDTH
    capacity: Optional[float] = None  # flow-control capacity, events/s

    def cap(self) -> float:
        return self.capacity if self.capacity is not None else float(self.bandwidth)


@dataclass
class Topology:
    kind: str
    roles: Dict[str, str]  # node id -> producer | consumer | broker
    links: List[LinkSpec]
    _adj: Dict[str, Dict[str, LinkSpec]] = field(default_factory=dict, repr=False)

    def __post_init__(self):
        for node in self.roles:
            self._adj.setdefault(node, {})
        for link in self.links:
            if link.a not in self.roles or link.b not in self.roles:
                raise ValueError(f"link {link.a}-{link.b} references unknown node")
            if link.delay_us <= 0 or link.bandwidth <= 0:
                raise ValueError(f"link {link.a}-{link.b} needs positive delay and bandwidth")
            self._adj[link.a][link.b] = link
            self._adj[link.b][link.a] = link

    def nodes(self) -> List[str]:
        return sorted(self.roles)

    def neighbors(self, node: str) -> List[str]:
        return sorted(self._adj[node])

    def link_between(self, a: str, b: str) -> LinkSpec:
        return self._adj[a][b]

    def producers(self) -> List[str]:
        return sorted(n for n, r in self.roles.items() if r == PRODUCER)

    def consumers(self) -> List[str]:
        return sorted(n for n, r in self.roles.items() if r == CONSUMER)

    def brokers(self) -> List[str]:
        return sorted(n for n, r in self.roles.items() if r == BROKER)

    def shortest_path(self, src: str, dst: str) -> List[str]:
        """BFS path, deterministic under ties via sorted neighbor order."""
        if src == dst:
            return [src]
        prev: Dict[str, str] = {src: src}
        frontier = [src]
        while frontier:
            nxt: List[str] = []
            for node in frontier:
                for peer in self.neighbors(node):
                    if peer not in prev:
                        prev[peer] = node
                        if peer == dst:
                            path = [dst]
                            while path[-1] != src:
                                path.append(prev[path[-1]])
                            return path[::-1]
                        nxt.append(peer)
            frontier = nxt
        raise ValueError(f"no path from {src} to {dst}")

    def simple_paths(self, src: str, dst: str, max_hops: int = 16) -> List[List[str]]:
        """Every loop-free path, lexicographic order, intermediate hops broker-only."""
        out: List[List[str]] = []
        path = [src]
        on_path = {src}

        def walk(node: str) -> None:
            if len(path) > max_hops:
                return
            for peer in self.neighbors(node):
                if peer in on_path:
                    continue
                if peer == dst:
                    out.append(path + [dst])
                    continue
                if self.roles[peer] != BROKER:
                    continue
                path.append(peer)
                on_path.add(peer)
                walk(peer)
                on_path.discard(peer)
                path.pop()

        walk(src)
        return out

    def to_json(self) -> dict:
        return {
            "kind": self.kind,
            "nodes": [{"id": n, "role": self.roles[n]} for n in self.nodes()],
            "links": [
                {
                    "a": l.a,
                    "b": l.b,
                    "delay_us": l.delay_us,
                    "bandwidth": l.bandwidth,
                    "capacity": l.cap(),
                }
                for l in self.links
            ],
        }


def build_topology(
    kind: str,
    brokers: int = 3,
    delay_us: int = DEFAULT_DELAY_US,
    bandwidth: int = DEFAULT_BANDWIDTH,
    capacity: Optional[float] = None,
    nodes: Optional[Dict[str, str]] = None,
    links: Optional[List[dict]] = None,
) -> Topology:
    def link(a: str, b: str) -> LinkSpec:
        return LinkSpec(a, b, delay_us, bandwidth, capacity)

    if kind == "manhattan":
        roles = {f"n{i}": BROKER for i in (1, 2, 3, 4, 7)}
        roles["n6"] = PRODUCER
        roles["n5"] = CONSUMER
        edges = [
            ("n6", "n1"),
            ("n1", "n2"),
            ("n1", "n3"),
            ("n1", "n7"),
            ("n2", "n4"),
            ("n3", "n4"),
            ("n7", "n4"),
            ("n4", "n5"),
        ]
        return Topology(kind, roles, [link(a, b) for a, b in edges])

    if kind == "line":
        if brokers < 1:
            raise ValueError("a line needs at least one broker")
        roles = {"p1": PRODUCER, "c1": CONSUMER}
        roles.update({f"b{i}": BROKER for i in range(1, brokers + 1)})
        chain = ["p1"] + [f"b{i}" for i in range(1, brokers + 1)] + ["c1"]
        return Topology(kind, roles, [link(a, b) for a, b in zip(chain, chain[1:])])

    if kind == "tree":
        roles = {f"b{i}": BROKER for i in range(1, 9)}
        roles["p1"] = PRODUCER
        roles["c1"] = CONSUMER
        edges = [
            ("b1", "b2"),
            ("b1", "b3"),
            ("b2", "b4"),
            ("b2", "b5"),
            ("b3", "b6"),
            ("b3", "b7"),
            ("b4", "b8"),
            ("p1", "b8"),
            ("c1", "b7"),
        ]
        return Topology(kind, roles, [link(a, b) for a, b in edges])

    if kind == "custom":
        if not nodes or not links:
            raise ValueError("custom topology needs nodes and links")
        specs = [
            LinkSpec(
                l["a"],
                l["b"],
                int(l.get("delay_us", delay_us)),
                int(l.get("bandwidth", bandwidth)),
                l.get("capacity", capacity),
            )
            for l in links
        ]
        return Topology(kind, dict(nodes), specs)

    raise ValueError(f"unknown topology kind {kind!r}")


def stream_name(source_id: str) -> Name:
    """The content name a producer publishes one stream under."""
    return Name(("stream", source_id))


def node_name(node_id: str) -> Name:
    return Name(("node", node_id))
