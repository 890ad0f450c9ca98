"""Operator placement over probed paths.

Before a query is deployed, the coordinating broker probes the status of
every loop-free broker path toward the producer. Each path reports as a
single line

    start|b1|...|end=r|b|qos|mu

where r is the path's summed link delay (us), b its minimum link
bandwidth (events/s), qos its accumulated drop count and mu the minimum
advertised rate along it. Path selection is feasibility first: among the
paths whose advertised rate covers the query's source rate, take the
lowest-delay one (ties: higher bandwidth, then lexicographic node
sequence). When no path is feasible the best-rate path is chosen and the
decision is flagged degraded rather than refused.

Operators map onto the chosen path by depth: leaves sit next to the
producer, the root next to the consumer, interior operators spread
proportionally. Each assignment is announced by a sub continuous
interest named <qname>/sub/<plan-node-id> sent down the chosen path.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple

from .cep import PlanTree
from .names import Name
from .topology import BROKER, Topology


class StatusTimeout(Exception):
    """The status probe went unanswered."""


@dataclass(frozen=True)
class PathStatus:
    path: Tuple[str, ...]  # coordinator first, producer last
    r_us: int
    b_evps: int
    qos: int
    mu: float

    def encode(self) -> str:
        return f"{'|'.join(self.path)}={self.r_us}|{self.b_evps}|{self.qos}|{self.mu!r}"

    @classmethod
    def decode(cls, line: str) -> "PathStatus":
        try:
            nodes, fields = line.split("=")
            r, b, qos, mu = fields.split("|")
            return cls(tuple(nodes.split("|")), int(r), int(b), int(qos), float(mu))
        except ValueError as exc:
            raise ValueError(f"bad path status line {line!r}: {exc}") from None


def get_node_status(
    topology: Topology,
    origin: str,
    target: str,
    link_mu: Optional[Callable[[str, str], float]] = None,
    link_drops: Optional[Callable[[str, str], int]] = None,
) -> List[PathStatus]:
    """Status of every loop-free broker path from origin to target.

    ``link_mu``/``link_drops`` sample the live per-directed-link
    advertised rate and drop counter; without them the static capacity
    and zero drops are reported.
    """
    out: List[PathStatus] = []
    for path in topology.simple_paths(origin, target):
        r = b = 0
        qos = 0
        mu = float("inf")
        for a, nxt in zip(path, path[1:]):
            spec = topology.link_between(a, nxt)
            r += spec.delay_us
            b = min(b or spec.bandwidth, spec.bandwidth)
            mu = min(mu, link_mu(a, nxt) if link_mu else spec.cap())
            qos += link_drops(a, nxt) if link_drops else 0
        out.append(PathStatus(tuple(path), r, b, qos, mu))
    return out


def encode_status_report(paths: Sequence[PathStatus]) -> bytes:
    return "\n".join(p.encode() for p in paths).encode("utf-8")


def parse_status_report(payload: Optional[bytes]) -> List[PathStatus]:
    if payload is None:
        raise StatusTimeout("no status reply within the probe timeout")
    text = payload.decode("utf-8")
    return [PathStatus.decode(line) for line in text.splitlines() if line]


def find_optimal_path(
    paths: Sequence[PathStatus], required_rate: float
) -> Tuple[PathStatus, bool]:
    """Pick the deployment path; True in the result means degraded."""
    if not paths:
        raise ValueError("no candidate paths")
    feasible = [p for p in paths if p.mu >= required_rate]
    if feasible:
        return min(feasible, key=lambda p: (p.r_us, -p.b_evps, p.path)), False
    return min(paths, key=lambda p: (-p.mu, p.r_us, p.path)), True


def assign_operators(tree: PlanTree, path: Sequence[str], roles: Dict[str, str]) -> Dict[int, str]:
    """Plan-node id -> broker, leaves toward the producer end.

    Depth interpolates linearly over the path's brokers (coordinator
    first). A single-operator plan sits producer-adjacent, where the
    stream enters the path.
    """
    brokers = [n for n in path if roles.get(n) == BROKER]
    if not brokers:
        raise ValueError(f"path {path} has no broker to host operators")
    depth: Dict[int, int] = {}

    def walk(node, d: int) -> None:
        depth[node.node_id] = d
        for child in node.children:
            walk(child, d + 1)

    walk(tree.root, 0)
    max_depth = max(depth.values())
    out: Dict[int, str] = {}
    for node_id, d in sorted(depth.items()):
        if max_depth == 0:
            idx = len(brokers) - 1
        else:
            idx = round(d * (len(brokers) - 1) / max_depth)
        out[node_id] = brokers[idx]
    return out


def sub_interest_names(qname: Name, assignments: Dict[int, str]) -> List[Tuple[Name, str]]:
    """The per-operator announcement names, in plan-node order."""
    return [(qname.extend("sub", str(i)), assignments[i]) for i in sorted(assignments)]


@dataclass
class PlacementDecision:
    qname: str
    canonical: str
    path: Tuple[str, ...]
    degraded: bool
    assignments: List[dict] = field(default_factory=list)
    probed: List[str] = field(default_factory=list)

    @classmethod
    def build(
        cls,
        qname: Name,
        tree: PlanTree,
        chosen: PathStatus,
        degraded: bool,
        assignments: Dict[int, str],
        probed: Sequence[PathStatus],
    ) -> "PlacementDecision":
        return cls(
            qname=qname.uri,
            canonical=tree.canonical,
            path=chosen.path,
            degraded=degraded,
            assignments=[
                {
                    "plan_node": node.node_id,
                    "expression": node.expression,
                    "node": assignments[node.node_id],
                }
                for node in tree.nodes
            ],
            probed=[p.encode() for p in probed],
        )

    def to_json(self) -> dict:
        return {
            "qname": self.qname,
            "query": self.canonical,
            "path": list(self.path),
            "degraded": self.degraded,
            "assignments": self.assignments,
            "probed_paths": list(self.probed),
        }
