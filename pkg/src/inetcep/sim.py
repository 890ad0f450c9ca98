"""Deterministic event-driven execution of one scenario.

Time is integer microseconds. Every packet hop costs one heap event: the
arrival at the far end of a link. Serialisation backlog at the sending
side and the service queue at the receiving node are pure arithmetic
(busy-until counters plus a deque of completion times), so a 50k ev/s
minute stays tractable. The heap orders by (time, sequence), all table
iteration is insertion-ordered and every random draw comes from a stream
seeded by (seed, source), which together make a run a pure function of
the scenario: two runs with the same file and seed produce byte-identical
reports and event-trace hashes.

Two modes exist. "ucl" is coexistent pull/push: consumers install
continuous interests, producers push DataStream packets through the PIT
trail, flow control management packets run every 100ms. "pr" is the
poll baseline: consumers send one plain interest per expected event and
the producer answers each with the latest item it has; whatever occurred
between effective polls is never fetched.
"""

from __future__ import annotations

import hashlib
import heapq
import json
import time as _time
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Tuple

from . import flowctl, metrics, oracle
from .cep import ComplexEvent
from .ingest import SCHEMAS, stream_rows
from .names import Name
from .node import LOCAL_FACE, NodeEngine, PrExecutorState
from .packets import (
    ADD_CONTINUOUS_INTEREST,
    DATA,
    DATA_STREAM,
    FLAG_MANAGEMENT,
    INTEREST,
    REMOVE_CONTINUOUS_INTEREST,
    TYPE_NAMES,
    Packet,
    TupleBatch,
)
from .placement import encode_status_report, get_node_status
from .query import parse_query, to_canonical_expression, validate
from .topology import Topology, build_topology, stream_name

DEFAULT_QUEUE_PKTS = 4096
DEFAULT_PROBE_RTT_US = 2000
ACCURACY_AUTO_LIMIT = 20000


class ScenarioError(ValueError):
    pass


@dataclass
class SourceSpec:
    schema: str
    source_id: str
    rate: float
    producer: str
    start_us: int = 0


@dataclass
class QuerySpec:
    text: Optional[str]       # None for a raw stream subscription
    subscribe: Optional[str]  # source id when text is None
    consumer: str
    poll_rate: Optional[float] = None


@dataclass
class Scenario:
    name: str
    mode: str
    seed: int
    duration_us: int
    warmup_us: int
    topology: Topology
    sources: List[SourceSpec]
    queries: List[QuerySpec]
    proc_us: int = 10
    pr_cycle_us: int = 30
    queue_pkts: int = DEFAULT_QUEUE_PKTS
    probe_rtt_us: int = DEFAULT_PROBE_RTT_US
    accuracy: Optional[bool] = None
    record_trace: bool = False

    @property
    def accuracy_on(self) -> bool:
        if self.accuracy is not None:
            return self.accuracy
        expected = sum(
            s.rate * max(self.duration_us - s.start_us, 0) / 1e6 for s in self.sources
        )
        return expected <= ACCURACY_AUTO_LIMIT


def scenario_from_dict(raw: dict, seed_override: Optional[int] = None) -> Scenario:
    try:
        mode = raw.get("mode", "ucl")
        if mode not in ("ucl", "pr"):
            raise ScenarioError(f"mode must be ucl or pr, not {mode!r}")
        topo_d = dict(raw.get("topology", {"kind": "line"}))
        kind = topo_d.pop("kind", "line")
        topo = build_topology(kind, **topo_d)
        producers = topo.producers()
        consumers = topo.consumers()
        if not producers or not consumers:
            raise ScenarioError("topology needs at least one producer and one consumer")
        sim_d = raw.get("sim", {})
        duration_us = int(float(raw.get("duration_s", 10.0)) * 1e6)
        warmup_us = int(float(raw.get("warmup_s", 1.0)) * 1e6)
        if warmup_us >= duration_us:
            raise ScenarioError("warmup must be shorter than the duration")
        sources = []
        for i, s in enumerate(raw.get("sources", [])):
            schema = s.get("schema", "gps")
            if schema not in SCHEMAS:
                raise ScenarioError(f"unknown schema {schema!r}")
            sources.append(
                SourceSpec(
                    schema=schema,
                    source_id=s.get("source_id", f"S{i + 1}"),
                    rate=float(s["rate"]),
                    producer=s.get("producer", producers[i % len(producers)]),
                    start_us=int(float(s.get("start_s", 0.0)) * 1e6),
                )
            )
        if not sources:
            raise ScenarioError("at least one source is required")
        known = {s.source_id for s in sources}
        queries = []
        for i, q in enumerate(raw.get("queries", [])):
            text = q.get("text")
            subscribe = q.get("subscribe")
            if (text is None) == (subscribe is None):
                raise ScenarioError(f"query {i}: give exactly one of text/subscribe")
            if text is not None:
                ast = parse_query(text)
                diags = validate(ast)
                if diags:
                    raise ScenarioError(f"query {i}: {diags[0].message}")
                for src in ast.sources:
                    if src not in known:
                        raise ScenarioError(f"query {i}: unknown source {src!r}")
            elif subscribe not in known:
                raise ScenarioError(f"query {i}: unknown source {subscribe!r}")
            queries.append(
                QuerySpec(
                    text=text,
                    subscribe=subscribe,
                    consumer=q.get("consumer", consumers[i % len(consumers)]),
                    poll_rate=q.get("poll_rate"),
                )
            )
        if not queries:
            raise ScenarioError("at least one query or subscription is required")
        seed = int(raw.get("seed", 1)) if seed_override is None else seed_override
        return Scenario(
            name=str(raw.get("name", "scenario")),
            mode=mode,
            seed=seed,
            duration_us=duration_us,
            warmup_us=warmup_us,
            topology=topo,
            sources=sources,
            queries=queries,
            proc_us=int(sim_d.get("proc_us", 10)),
            pr_cycle_us=int(sim_d.get("pr_cycle_us", 30)),
            queue_pkts=int(sim_d.get("queue_pkts", DEFAULT_QUEUE_PKTS)),
            probe_rtt_us=int(sim_d.get("probe_rtt_us", DEFAULT_PROBE_RTT_US)),
            accuracy=sim_d.get("accuracy"),
            record_trace=bool(sim_d.get("record_trace", False)),
        )
    except KeyError as exc:
        raise ScenarioError(f"missing scenario field: {exc}") from None


def load_scenario(path, seed_override: Optional[int] = None) -> Scenario:
    """Read a scenario from a TOML or JSON file (by extension)."""
    p = Path(path)
    text = p.read_bytes()
    if p.suffix == ".json":
        raw = json.loads(text)
    else:
        try:
            import tomllib  # py311+
        except ModuleNotFoundError:
            import tomli as tomllib
        raw = tomllib.loads(text.decode("utf-8"))
    return scenario_from_dict(raw, seed_override)


class Link:
    """One direction of a physical link: egress serialisation, wire delay,
    and the receive queue at the far node. Packets are lost only here,
    when either bounded queue is full at the moment of entry."""

    __slots__ = (
        "key", "src_id", "dst_id", "delay_us", "tx_us", "buffer",
        "tx_busy", "ingress", "sent", "delivered", "drop_egress",
        "drop_ingress", "ledger", "dst_node", "in_face_at_dst", "sim",
    )

    def __init__(self, sim: "Simulation", src_id: str, dst_id: str,
                 delay_us: int, bandwidth: float, buffer_pkts: int, capacity: float):
        self.sim = sim
        self.key = f"{src_id}->{dst_id}"
        self.src_id = src_id
        self.dst_id = dst_id
        self.delay_us = delay_us
        self.tx_us = max(1, round(1_000_000 / bandwidth))
        self.buffer = buffer_pkts
        self.tx_busy = 0
        self.ingress: deque = deque()
        self.sent = 0
        self.delivered = 0
        self.drop_egress = 0
        self.drop_ingress = 0
        self.ledger = flowctl.FlowLedger(capacity)
        self.dst_node: Optional[NodeEngine] = None
        self.in_face_at_dst = LOCAL_FACE

    def send(self, pkt: Packet, t: int) -> None:
        busy = self.tx_busy
        if busy > t:
            if (busy - t) // self.tx_us >= self.buffer:
                self.drop_egress += 1
                self.sim._note_drop(self.key, pkt, t, "drop_egress")
                return
            start = busy
        else:
            start = t
        self.tx_busy = start + self.tx_us
        self.sent += 1
        self.sim.schedule(self.tx_busy + self.delay_us, self.sim._arrive, (self, pkt))

    def stats(self) -> dict:
        return {
            "sent": self.sent,
            "delivered": self.delivered,
            "dropped_egress": self.drop_egress,
            "dropped_ingress": self.drop_ingress,
        }


class ProducerApp:
    """Generates one or more sources at a producer node.

    In ucl mode every event is pushed as a DataStream packet, paced by the
    flow-control estimate. In pr mode nothing is pushed: events advance
    lazily with simulated time and a poll is answered with the newest one.
    """

    def __init__(self, sim: "Simulation", node: NodeEngine):
        self.sim = sim
        self.node = node
        self.sources: Dict[str, dict] = {}

    def add_source(self, spec: SourceSpec, keep_trace: bool) -> None:
        schema = tuple(a.name for a in SCHEMAS[spec.schema])
        gen = stream_rows(
            spec.schema, spec.source_id, spec.rate,
            self.sim.sc.duration_us, self.sim.sc.seed, spec.start_us,
        )
        prefix = stream_name(spec.source_id)
        st = {
            "spec": spec,
            "schema": schema,
            "gen": gen,
            "pending": next(gen, None),
            "prefix": prefix,
            "latest": None,
            "cursor": {},          # poll qid -> last answered ts
            "produced": 0,
            "produced_window": 0,
            "trace": [] if keep_trace else None,
            "flow": None,
            "next_slot": 0,
        }
        self.sources[spec.source_id] = st
        self.node.origin_streams.add(prefix)
        if self.sim.sc.mode == "ucl":
            st["flow"] = flowctl.ProducerRateState(prefix.uri, spec.rate)
            self.node.producer_flows[prefix.uri] = st["flow"]

    # ucl: one generation event per row
    def start_ucl(self) -> None:
        for st in self.sources.values():
            if st["pending"] is not None:
                self.sim.schedule(st["pending"][0], self._gen, st)

    def _gen(self, t: int, st: dict) -> None:
        row = st["pending"]
        self._account(st, row)
        st["latest"] = row
        flow = st["flow"]
        slot = st["next_slot"]
        send_at = slot if slot > t else t
        # rate-limit only while the grant sits below demand; the slot then
        # advances one allocation interval per packet
        if flow.estimate < st["spec"].rate:
            st["next_slot"] = send_at + int(1_000_000 // flow.estimate)
        else:
            st["next_slot"] = send_at
        pkt = Packet(DATA_STREAM, st["prefix"], body=TupleBatch(st["schema"], [row]))
        if send_at == t:
            self.sim._process(self.node, pkt, LOCAL_FACE, t)
        else:
            self.sim.schedule(send_at, self._paced_send, pkt)
        nxt = next(st["gen"], None)
        st["pending"] = nxt
        if nxt is not None:
            self.sim.schedule(nxt[0], self._gen, st)

    def _paced_send(self, t: int, pkt: Packet) -> None:
        self.sim._process(self.node, pkt, LOCAL_FACE, t)

    def _mgmt(self, t: int, st: dict) -> None:
        m = flowctl.emit_management(st["flow"], t)
        pkt = Packet(
            INTEREST,
            Name(("mgmt", "flow", st["spec"].source_id)),
            payload=m.encode_payload(),
            flags=FLAG_MANAGEMENT,
        )
        self.sim._process(self.node, pkt, LOCAL_FACE, t)
        nxt = t + flowctl.MANAGEMENT_PERIOD_US
        if nxt <= self.sim.sc.duration_us:
            self.sim.schedule(nxt, self._mgmt, st)

    # pr: advance lazily, answer with the latest item
    def _advance(self, st: dict, to_ts: int) -> None:
        pending = st["pending"]
        if pending is None or pending[0] > to_ts:
            return
        gen = st["gen"]
        while pending is not None and pending[0] <= to_ts:
            self._account(st, pending)
            st["latest"] = pending
            pending = next(gen, None)
        st["pending"] = pending

    def _account(self, st: dict, row: tuple) -> None:
        st["produced"] += 1
        if row[0] >= self.sim.sc.warmup_us:
            st["produced_window"] += 1
        if st["trace"] is not None:
            st["trace"].append(row)

    def on_interest(self, name: Name, now: int) -> Optional[TupleBatch]:
        if len(name) >= 5 and name[-3] == "poll":
            st = self.sources.get(name[1])
            if st is None or tuple(name[:2]) != tuple(st["prefix"]):
                return None
            self._advance(st, now)
            latest = st["latest"]
            qid = name[-2]
            if latest is None or st["cursor"].get(qid, -1) >= latest[0]:
                return TupleBatch(st["schema"], [])
            st["cursor"][qid] = latest[0]
            return TupleBatch(st["schema"], [latest])
        st = self.sources.get(name[-1])
        if st is not None and name == st["prefix"]:
            self._advance(st, now)
            latest = st["latest"]
            if latest is not None:
                return TupleBatch(st["schema"], [latest])
        return None


class Sub:
    """One consumer-side subscription or query registration."""

    __slots__ = (
        "qspec", "qname", "text", "qid", "sources", "poll_gap_us", "seq",
        "delivered", "delivered_window", "buckets", "latencies",
        "ce_count", "ce_latencies", "ce_list", "controls", "stream_prefix",
    )

    def __init__(self, qspec: QuerySpec, qname: Name, qid: str,
                 sources: Tuple[str, ...], poll_gap_us: int):
        self.qspec = qspec
        self.qname = qname
        self.text = qspec.text
        self.qid = qid
        self.sources = sources
        self.poll_gap_us = poll_gap_us
        self.seq = 0
        self.delivered = 0
        self.delivered_window = 0
        self.buckets: Dict[int, int] = {}
        self.latencies: List[int] = []
        self.ce_count = 0
        self.ce_latencies: List[int] = []
        self.ce_list: List[ComplexEvent] = []
        self.controls = {"adds": 0, "removes": 0, "polls": 0}
        self.stream_prefix = stream_name(sources[0])


class ConsumerApp:
    def __init__(self, sim: "Simulation", node: NodeEngine):
        self.sim = sim
        self.node = node
        self.subs: List[Sub] = []
        self.sub_of_source: Dict[str, Sub] = {}
        self.sub_of_qid: Dict[str, Sub] = {}
        self.last_ts: Dict[str, int] = {}
        self.reordered = 0
        self.stale_rows = 0
        self.empty_polls = 0

    def add_sub(self, sub: Sub) -> None:
        self.subs.append(sub)
        self.sub_of_qid[sub.qid] = sub
        for src in sub.sources:
            self.sub_of_source.setdefault(src, sub)

    # -- ucl control plane

    def send_add(self, t: int, sub: Sub) -> None:
        pkt = Packet(ADD_CONTINUOUS_INTEREST, sub.qname)
        sub.controls["adds"] += 1
        self.sim._hash(f"C|add|{sub.qname.uri}|{t}")
        self.sim._process(self.node, pkt, LOCAL_FACE, t)

    def send_remove(self, t: int, sub: Sub) -> None:
        pkt = Packet(REMOVE_CONTINUOUS_INTEREST, sub.qname)
        sub.controls["removes"] += 1
        self.sim._hash(f"C|remove|{sub.qname.uri}|{t}")
        self.sim._process(self.node, pkt, LOCAL_FACE, t)

    # -- pr polling

    def _poll(self, t: int, sub: Sub) -> None:
        sub.seq += 1
        name = sub.stream_prefix.extend("poll", sub.qid, str(sub.seq))
        sub.controls["polls"] += 1
        self.sim._process(self.node, Packet(INTEREST, name), LOCAL_FACE, t)
        nxt = t + sub.poll_gap_us
        if nxt <= self.sim.sc.duration_us:
            self.sim.schedule(nxt, self._poll, sub)

    # -- deliveries

    def deliver(self, pkt: Packet, t: int) -> None:
        body = pkt.body
        if pkt.ptype == DATA_STREAM:
            source = pkt.name[-1]
            sub = self.sub_of_source.get(source)
            if sub is not None:
                self._record_rows(sub, source, body.rows, t)
            return
        if body is None:
            self.empty_polls += 1
            return
        if isinstance(body, TupleBatch):
            # answer to a plain-subscription poll: /stream/<src>/poll/<qid>/<seq>
            sub = self.sub_of_qid.get(pkt.name[-2]) if len(pkt.name) >= 3 else None
            if sub is not None:
                self._record_rows(sub, pkt.name[1], body.rows, t, strict=False)
            return
        if isinstance(body, ComplexEvent):
            sub = self._sub_for_qname(body.qname)
            if sub is None:
                return
            sub.ce_count += 1
            sub.ce_latencies.append(t - body.ts)
            self.sim._hash(f"E|{body.qname}|{body.ts}|{body.payload_key()!r}|{t}")
            if self.sim.keep_ce:
                sub.ce_list.append(body)
            if body.kind == "tuples" and self.sim.sc.mode == "pr":
                self._record_rows(sub, sub.sources[0], body.value, t, strict=False)

    def _sub_for_qname(self, qname: str) -> Optional[Sub]:
        for sub in self.subs:
            if sub.qname.uri == qname:
                return sub
        return None

    def _record_rows(self, sub: Sub, source: str, rows, t: int, strict: bool = True) -> None:
        # strict marks the push path, where the network promises per-name FIFO
        # and a step backwards is an anomaly. Poll answers re-deliver window
        # contents by design, so old rows there are merely stale.
        warmup = self.sim.sc.warmup_us
        last_ts = self.last_ts
        key = f"{sub.qid}|{source}"
        last = last_ts.get(key, -1)
        hsh = self.sim._hash
        for row in rows:
            ts = row[0]
            if ts <= last:
                if strict:
                    self.reordered += 1
                else:
                    self.stale_rows += 1
                continue
            last = ts
            sub.delivered += 1
            sub.latencies.append(t - ts)
            sub.buckets[ts // 1_000_000] = sub.buckets.get(ts // 1_000_000, 0) + 1
            if ts >= warmup:
                sub.delivered_window += 1
            hsh(f"D|{key}|{ts}|{t}")
        last_ts[key] = last


class Simulation:
    def __init__(self, scenario: Scenario):
        self.sc = scenario
        self.topo = scenario.topology
        self.now = 0
        self._heap: List[tuple] = []
        self._seq = 0
        self.digest = hashlib.sha256()
        self.trace: Optional[List[tuple]] = [] if scenario.record_trace else None
        self.keep_ce = scenario.accuracy_on
        self.placements: List[dict] = []

        self.wall_seconds = 0.0
        self.report: Optional[dict] = None
        self.nodes: Dict[str, NodeEngine] = {}
        for node_id in self.topo.nodes():
            eng = NodeEngine(node_id, self.topo.roles[node_id],
                             scenario.proc_us, scenario.pr_cycle_us)
            self.nodes[node_id] = eng
        self.links: Dict[Tuple[str, str], Link] = {}
        for spec in self.topo.links:
            for a, b in ((spec.a, spec.b), (spec.b, spec.a)):
                buf = max(scenario.queue_pkts,
                          round(spec.bandwidth * spec.delay_us / 1e6))
                link = Link(self, a, b, spec.delay_us, spec.bandwidth, buf, spec.cap())
                self.links[(a, b)] = link
        for (a, b), link in self.links.items():
            src = self.nodes[a]
            face = len(src.links)
            src.links.append(link)
            src.peer_face[b] = face
            src.peer_role[b] = self.topo.roles[b]
            link.dst_node = self.nodes[b]
        for (a, b), link in self.links.items():
            link.in_face_at_dst = self.nodes[b].peer_face[a]

        self.producer_node_of: Dict[str, str] = {}
        self.rate_of: Dict[str, float] = {}
        self.producers: Dict[str, ProducerApp] = {}
        keep = scenario.accuracy_on
        for spec in scenario.sources:
            app = self.producers.get(spec.producer)
            if app is None:
                app = ProducerApp(self, self.nodes[spec.producer])
                self.producers[spec.producer] = app
                self.nodes[spec.producer].app_interest = app.on_interest
            app.add_source(spec, keep)
            self.producer_node_of[spec.source_id] = spec.producer
            self.rate_of[spec.source_id] = spec.rate
            self._install_routes(stream_name(spec.source_id), spec.producer)

        self.consumers: Dict[str, ConsumerApp] = {}
        for i, q in enumerate(scenario.queries):
            app = self.consumers.get(q.consumer)
            if app is None:
                app = ConsumerApp(self, self.nodes[q.consumer])
                self.consumers[q.consumer] = app
                self.nodes[q.consumer].app_deliver = app.deliver
            qid = f"q{i}"
            if q.text is not None:
                canonical = to_canonical_expression(parse_query(q.text))
                qname = Name(("ce", canonical))
                sources = parse_query(canonical).sources
            else:
                qname = stream_name(q.subscribe)
                sources = (q.subscribe,)
            rate = q.poll_rate or sum(self.rate_of[s] for s in sources)
            sub = Sub(q, qname, qid, tuple(sources), max(1, round(1e6 / rate)))
            app.add_sub(sub)

        self.flow_paths: Dict[str, List[Tuple[str, str]]] = {}
        for spec in scenario.sources:
            uri = stream_name(spec.source_id).uri
            consumer = next(
                (q.consumer for q in scenario.queries
                 if spec.source_id in self._query_sources(q)),
                None,
            )
            if consumer is not None:
                path = self.topo.shortest_path(spec.producer, consumer)
                self.flow_paths[uri] = list(zip(path, path[1:]))
            self.nodes[spec.producer].path_mu = self._path_mu

    def _query_sources(self, q: QuerySpec) -> Tuple[str, ...]:
        if q.text is not None:
            return parse_query(q.text).sources
        return (q.subscribe,)

    def _install_routes(self, prefix: Name, producer: str) -> None:
        """A FIB route toward the producer on every other node (BFS tree)."""
        for node_id in self.topo.nodes():
            if node_id == producer:
                continue
            path = self.topo.shortest_path(node_id, producer)
            self.nodes[node_id].fib.add_route(prefix, self.nodes[node_id].peer_face[path[1]])

    def _path_mu(self, flow_id: str) -> float:
        hops = self.flow_paths.get(flow_id)
        if not hops:
            return float("inf")
        return min(self.links[h].ledger.mu for h in hops)

    # -- event machinery ------------------------------------------------------

    def schedule(self, t: int, fn, arg) -> None:
        self._seq += 1
        heapq.heappush(self._heap, (t, self._seq, fn, arg))

    def _hash(self, text: str) -> None:
        self.digest.update(text.encode())

    def _note_drop(self, where: str, pkt: Packet, t: int, action: str) -> None:
        self._hash(f"L|{where}|{t}|{pkt.ptype}|{pkt.name.uri}")
        if self.trace is not None:
            self.trace.append((t, where, TYPE_NAMES[pkt.ptype], pkt.name.uri, action))

    def _arrive(self, t: int, arg: Tuple[Link, Packet]) -> None:
        link, pkt = arg
        q = link.ingress
        while q and q[0] <= t:
            q.popleft()
        if len(q) >= link.buffer:
            link.drop_ingress += 1
            self._note_drop(link.key, pkt, t, "drop_ingress")
            return
        link.delivered += 1
        if self.trace is not None:
            self.trace.append((t, link.dst_id, TYPE_NAMES[pkt.ptype], pkt.name.uri, "arrive"))
        done = self._process(link.dst_node, pkt, link.in_face_at_dst, t)
        q.append(done)

    def _process(self, node: NodeEngine, pkt: Packet, in_face: int, t: int) -> int:
        busy = node.busy_until
        base = (busy if busy > t else t) + node.proc_us
        effects, extra = node.handle(pkt, in_face, base)
        done = base + extra
        node.busy_until = done
        for eff in effects:
            kind = eff[0]
            if kind == "send":
                node.links[eff[1]].send(eff[2], done)
            elif kind == "local":
                if node.app_deliver is None:
                    node.bump("local_no_app")
                    continue
                if self.trace is not None:
                    p2 = eff[1]
                    self.trace.append(
                        (done, node.node_id, TYPE_NAMES[p2.ptype], p2.name.uri, "local")
                    )
                node.app_deliver(eff[1], done)
            elif kind == "probe":
                self._hash(f"C|probe|{eff[1].uri}|{done}")
                self.schedule(done + self.sc.probe_rtt_us, self._finish_probe, (node, eff[1]))
        return done

    def _finish_probe(self, t: int, arg: Tuple[NodeEngine, Name]) -> None:
        node, qname = arg
        state = node.qname_state[qname]
        target = self.producer_node_of[state.tree.source_names[0]]
        statuses = get_node_status(
            self.topo, node.node_id, target,
            link_mu=lambda a, b: self.links[(a, b)].ledger.mu,
            link_drops=lambda a, b: self.links[(a, b)].drop_egress
            + self.links[(a, b)].drop_ingress,
        )
        payload = encode_status_report(statuses)
        shortest = {
            src: self.topo.shortest_path(node.node_id, self.producer_node_of[src])
            for src in state.tree.source_names
        }
        effects = node.complete_placement(
            qname, payload, self.rate_of, self.topo.roles, shortest, t
        )
        for eff in effects:
            if eff[0] == "send":
                node.links[eff[1]].send(eff[2], t)
        if state.decision is not None:
            decision = state.decision.to_json()
            self.placements.append(decision)
            self._hash("P|" + json.dumps(decision, sort_keys=True))

    def _sweep(self, t: int, _arg) -> None:
        for node in self.nodes.values():
            node.pit.sweep(t)
        nxt = t + 1_000_000
        if nxt <= self.sc.duration_us:
            self.schedule(nxt, self._sweep, None)

    def _drain(self) -> None:
        heap = self._heap
        pop = heapq.heappop
        while heap:
            t, _seq, fn, arg = pop(heap)
            self.now = t
            fn(t, arg)

    # -- the run ---------------------------------------------------------------

    def run(self) -> dict:
        started = _time.monotonic()
        sc = self.sc
        if sc.mode == "ucl":
            for app in self.consumers.values():
                for sub in app.subs:
                    self.schedule(0, lambda t, s, a=app: a.send_add(t, s), sub)
            for app in self.producers.values():
                app.start_ucl()
                for st in app.sources.values():
                    if st["flow"] is not None:
                        self.schedule(flowctl.MANAGEMENT_PERIOD_US, app._mgmt, st)
        else:
            self._setup_pr()
            for app in self.consumers.values():
                for sub in app.subs:
                    self.schedule(sub.poll_gap_us, app._poll, sub)
        self.schedule(1_000_000, self._sweep, None)
        self._drain()
        if sc.mode == "ucl":
            t0 = max(self.now, sc.duration_us) + 1000
            for app in self.consumers.values():
                for sub in app.subs:
                    self.schedule(t0, lambda t, s, a=app: a.send_remove(t, s), sub)
            self._drain()
        else:
            for app in self.producers.values():
                for st in app.sources.values():
                    app._advance(st, sc.duration_us)
        final = self.now + 5_000_000
        for node in self.nodes.values():
            node.pit.sweep(final)
        self.wall_seconds = _time.monotonic() - started
        self.report = self._report()
        return self.report

    def _setup_pr(self) -> None:
        """Register each query's evaluation state at the consumer-adjacent broker."""
        for app in self.consumers.values():
            consumer = app.node.node_id
            broker = self.topo.neighbors(consumer)[0]
            eng = self.nodes[broker]
            for sub in app.subs:
                if sub.text is None:
                    continue
                if len(sub.sources) != 1:
                    raise ScenarioError("the poll baseline handles single-source queries")
                tree = eng.engine.get_tree(sub.text)
                eng.pr_execs[sub.qid] = PrExecutorState(sub.qname, tree, sub.sources[0])

    # -- reporting ---------------------------------------------------------------

    def _report(self) -> dict:
        sc = self.sc
        window_s = (sc.duration_us - sc.warmup_us) / 1e6
        produced_window = {
            sid: st["produced_window"]
            for app in self.producers.values()
            for sid, st in app.sources.items()
        }
        produced_total = {
            sid: st["produced"]
            for app in self.producers.values()
            for sid, st in app.sources.items()
        }
        traces = None
        if sc.accuracy_on:
            traces = {}
            for app in self.producers.values():
                for sid, st in app.sources.items():
                    traces[sid] = TupleBatch(st["schema"], st["trace"] or [])

        queries = {}
        for app in self.consumers.values():
            for sub in app.subs:
                produced = sum(produced_window[s] for s in sub.sources)
                entry = {
                    "qname": sub.qname.uri,
                    "query": sub.text,
                    "consumer": app.node.node_id,
                    "sources": list(sub.sources),
                    "produced_events": produced,
                    "delivered_events": sub.delivered_window,
                    "loss_rate": metrics.loss_rate(produced, min(sub.delivered_window, produced))
                    if produced else None,
                    "latency_us": metrics.latency_summary(sub.latencies),
                    "complex_events": sub.ce_count,
                    "ce_latency_us": metrics.latency_summary(sub.ce_latencies),
                    "throughput_mean_evps": sub.delivered_window / window_s,
                    "throughput_series": [
                        [sec, sub.buckets[sec]] for sec in sorted(sub.buckets)
                    ],
                    "control_packets": dict(sub.controls),
                    "accuracy": None,
                }
                if traces is not None and sub.text is not None:
                    truth = oracle.ground_truth(sub.text, traces, sub.qname.uri)
                    slots = oracle.predict_slots(sub.text, traces)
                    counts = metrics.compare_to_oracle(sub.ce_list, truth, slots)
                    entry["accuracy"] = counts.as_dict()
                    try:
                        entry["accuracy"]["f1_percent"] = counts.f1_percent()
                    except metrics.UndefinedF1:
                        entry["accuracy"]["f1_percent"] = None
                queries[sub.qname.uri] = entry

        flows = {}
        for app in self.producers.values():
            for sid, st in app.sources.items():
                if st["flow"] is not None:
                    flows[st["prefix"].uri] = {
                        "desired_evps": st["spec"].rate,
                        "final_estimate_evps": st["flow"].estimate,
                        "trace": [list(row) for row in st["flow"].trace],
                    }

        report = {
            "scenario": {
                "name": sc.name,
                "mode": sc.mode,
                "seed": sc.seed,
                "topology": sc.topology.kind,
                "duration_s": sc.duration_us / 1e6,
                "warmup_s": sc.warmup_us / 1e6,
                "sources": [
                    {
                        "source_id": s.source_id,
                        "schema": s.schema,
                        "rate_evps": s.rate,
                        "producer": s.producer,
                        "produced_total": produced_total[s.source_id],
                    }
                    for s in sc.sources
                ],
            },
            "queries": queries,
            "placements": self.placements,
            "links": {link.key: link.stats() for link in self.links.values()},
            "nodes": {nid: dict(n.counters) for nid, n in self.nodes.items()},
            "flows": flows,
            "pit_residual": {
                nid: [n.uri for n in eng.pit.names()]
                for nid, eng in self.nodes.items()
                if len(eng.pit)
            },
            "consumer_anomalies": {
                app.node.node_id: {
                    "reordered": app.reordered,
                    "stale_rows": app.stale_rows,
                    "empty_polls": app.empty_polls,
                }
                for app in self.consumers.values()
            },
            "trace_sha256": self.digest.hexdigest(),
        }
        return report


def run_scenario(scenario: Scenario) -> dict:
    return Simulation(scenario).run()
