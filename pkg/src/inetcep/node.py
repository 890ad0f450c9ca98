"""Per-node forwarding and query-plane behaviour.

One NodeEngine handles every packet a node receives and returns a list of
effects (sends, local deliveries, probe requests) for the runner to
execute. The classic pull pair works as usual: Interests walk the FIB and
leave PIT breadcrumbs, Data consumes them and populates the content
store. Continuous interests install standing PIT entries that the data
stream then follows downstream; a fresh stream packet additionally
triggers the query engine on the node hosting the query root.

Handling one AddContinuousInterest at the consumer-adjacent broker (the
coordinator) runs the whole deployment: parse and validate the embedded
query (reusing the cached plan for a resubmission), probe path status,
pick the optimal path, then send the operator announcements and the
onward Add down that path. Those routed packets carry their remaining
path in a plumbing field that never reaches the wire; everything else
routes by FIB and PIT state alone.
"""

from __future__ import annotations

from typing import Dict, List, Optional, Tuple

from . import flowctl
from .cep import ComplexEvent, PlanTree, QueryEngine
from .names import Name
from .packets import (
    ADD_CONTINUOUS_INTEREST,
    DATA,
    DATA_STREAM,
    FLAG_MANAGEMENT,
    INTEREST,
    REMOVE_CONTINUOUS_INTEREST,
    Packet,
    TupleBatch,
)
from .placement import (
    PlacementDecision,
    StatusTimeout,
    assign_operators,
    find_optimal_path,
    parse_status_report,
    sub_interest_names,
)
from .query import QueryError, parse_query, to_canonical_expression, validate
from .tables import ContentStore, Fib, Pit

LOCAL_FACE = -1

DEFAULT_PROC_US = 10
# extra inline work a periodic-request poll charges at the query node:
# the query is parsed, placed and processed again for every poll
PR_CYCLE_US = 30

MGMT_PREFIX = ("mgmt", "flow")
STATUS_NAME = Name(("node", "nodeStatus"))


class RoutedPacket(Packet):
    """A packet steered hop-by-hop along an explicit node sequence.

    Deployment traffic (onward Adds, operator announcements, removals)
    must follow the chosen path rather than the FIB; the remaining hops
    ride in ``route``. This is runner plumbing, not wire state.
    """

    __slots__ = ("route", "target", "plan_node", "sources")

    def __init__(self, base: Packet, route: List[str], target: str,
                 plan_node: Optional[int] = None, sources: Tuple[Name, ...] = ()):
        super().__init__(base.ptype, base.name, base.payload, base.hop_limit, base.flags, base.body)
        self.route = route
        self.target = target
        self.plan_node = plan_node
        self.sources = sources


class QueryState:
    """Coordinator-side record of one deployed query."""

    __slots__ = ("qname", "tree", "decision", "routes", "required_rate", "add_face")

    def __init__(self, qname: Name, tree: PlanTree, add_face: int):
        self.qname = qname
        self.tree = tree
        self.decision: Optional[PlacementDecision] = None
        self.routes: Dict[str, List[str]] = {}  # source id -> node path
        self.required_rate = 0.0
        self.add_face = add_face


class ExecutorState:
    """Root-operator evaluation state living on the assigned broker."""

    __slots__ = ("qname", "tree", "sources")

    def __init__(self, qname: Name, tree: PlanTree):
        self.qname = qname
        self.tree = tree
        self.sources = tree.source_names


class PrExecutorState:
    """Poll-driven evaluation for the periodic-request baseline."""

    __slots__ = ("qname", "tree", "source", "last_emit_ts", "max_ts")

    def __init__(self, qname: Name, tree: PlanTree, source: str):
        self.qname = qname
        self.tree = tree
        self.source = source
        self.last_emit_ts = -1
        self.max_ts = 0


class NodeEngine:
    """Forwarding tables, query engine and app hooks of one node."""

    def __init__(self, node_id: str, role: str, proc_us: int = DEFAULT_PROC_US,
                 pr_cycle_us: int = PR_CYCLE_US):
        self.node_id = node_id
        self.role = role
        self.proc_us = proc_us
        self.pr_cycle_us = pr_cycle_us
        self.cs = ContentStore()
        self.pit = Pit()
        self.fib = Fib()
        self.engine = QueryEngine()
        self.links: List[object] = []       # outbound channels, index == face id
        self.peer_face: Dict[str, int] = {}  # neighbour node id -> face id
        self.peer_role: Dict[str, str] = {}
        self.busy_until = 0
        self.counters: Dict[str, int] = {}
        self.queries: Dict[str, QueryState] = {}      # canonical -> state
        self.qname_state: Dict[Name, QueryState] = {}
        self.executors: Dict[Name, ExecutorState] = {}
        self.pr_execs: Dict[str, PrExecutorState] = {}
        self.origin_streams: set = set()  # stream prefixes this node produces
        # runner-provided hooks
        self.app_interest = None      # fn(name, now) -> Optional[body]
        self.app_deliver = None       # fn(pkt, now) -> None
        self.status_report = None     # fn(origin, target) -> bytes
        self.path_mu = None           # fn(flow_id) -> float
        self.producer_flows: Dict[str, flowctl.ProducerRateState] = {}

    # -- helpers ------------------------------------------------------------

    def bump(self, key: str, n: int = 1) -> None:
        self.counters[key] = self.counters.get(key, 0) + n

    def face_toward(self, peer: str) -> int:
        return self.peer_face[peer]

    def _forward_copies(self, pkt: Packet, faces, in_face: int) -> List[tuple]:
        if pkt.hop_limit <= 1:
            self.bump("hop_limit_exhausted")
            return []
        if len(faces) == 1:
            # nothing else holds the packet once it leaves a single face, so
            # the hot single-path case forwards it in place instead of copying
            face = faces[0]
            if face == in_face:
                return []
            if face == LOCAL_FACE:
                return [("local", pkt)]
            pkt.hop_limit -= 1
            return [("send", face, pkt)]
        out = []
        seen = set()
        for face in faces:
            if face == in_face or face in seen:
                continue
            seen.add(face)
            if face == LOCAL_FACE:
                out.append(("local", pkt))
                continue
            fwd = Packet(pkt.ptype, pkt.name, pkt.payload, pkt.hop_limit - 1, pkt.flags, pkt.body)
            out.append(("send", face, fwd))
        return out

    # -- dispatch -----------------------------------------------------------

    def handle(self, pkt: Packet, in_face: int, now: int) -> Tuple[List[tuple], int]:
        ptype = pkt.ptype
        if ptype == DATA_STREAM:
            return self.on_data_stream(pkt, in_face, now)
        if ptype == INTEREST:
            return self.on_interest(pkt, in_face, now), 0
        if ptype == DATA:
            return self.on_data(pkt, in_face, now)
        if ptype == ADD_CONTINUOUS_INTEREST:
            return self.on_add_continuous_interest(pkt, in_face, now), 0
        if ptype == REMOVE_CONTINUOUS_INTEREST:
            return self.on_remove_continuous_interest(pkt, in_face, now), 0
        self.bump("unknown_type_discarded")
        return [], 0

    # -- interest / data ------------------------------------------------------

    def on_interest(self, pkt: Packet, in_face: int, now: int) -> List[tuple]:
        if pkt.is_management:
            return self._on_management(pkt, in_face, now)
        name = pkt.name
        entry = self.cs.lookup(name)
        if entry is not None:
            self.bump("cs_hits")
            return self._forward_copies(
                Packet(DATA, name, body=entry.body), [in_face], in_face=-2
            )
        if self.app_interest is not None:
            body = self.app_interest(name, now)
            if body is not None:
                self.bump("app_answers")
                return self._forward_copies(Packet(DATA, name, body=body), [in_face], in_face=-2)
        existing = self.pit.lookup(name)
        if existing is not None:
            self.pit.add_face(name, in_face, now)
            self.bump("interest_collapsed")
            return []
        faces = self.fib.lookup(name)
        if not faces:
            self.bump("interest_no_route")
            return []
        self.pit.add_face(name, in_face, now)
        return self._forward_copies(pkt, faces[:1], in_face)

    def on_data(self, pkt: Packet, in_face: int, now: int) -> Tuple[List[tuple], int]:
        if pkt.is_management:
            self.bump("mgmt_data_discarded")
            return [], 0
        name = pkt.name
        entry = self.pit.lookup(name)
        if entry is None:
            self.bump("data_unsolicited")
            return [], 0
        extra = 0
        if entry.continuous:
            out = self._forward_copies(pkt, entry.faces, in_face)
            return out, 0
        # a poll response at the query node runs the full query cycle inline
        if self.pr_execs and len(name) >= 3 and name[-3] == "poll":
            exec_state = self.pr_execs.get(name[-2])
            if exec_state is not None and isinstance(pkt.body, TupleBatch):
                pkt, extra = self._pr_process(exec_state, pkt, now)
        faces = list(entry.faces)
        self.pit.drop(name)
        body_ts = now
        if isinstance(pkt.body, ComplexEvent):
            body_ts = pkt.body.ts
        self.cs.insert(name, pkt.body if pkt.body is not None else pkt.payload, body_ts)
        return self._forward_copies(pkt, faces, in_face), extra

    # -- continuous interests ---------------------------------------------------

    def _query_text(self, qname: Name) -> Optional[str]:
        """The query inside a name, None for a plain stream subscription."""
        tail = qname[-1]
        if "(" not in tail:
            return None
        return tail

    def on_add_continuous_interest(self, pkt: Packet, in_face: int, now: int) -> List[tuple]:
        qname = pkt.name
        route = getattr(pkt, "route", None)

        if len(qname) >= 3 and qname[-2] == "sub":
            return self._on_sub_add(pkt, in_face, now)

        text = self._query_text(qname)
        if text is not None:
            try:
                ast = parse_query(text)
                diags = validate(ast)
            except QueryError:
                diags = True
            if diags:
                self.bump("malformed_query_discarded")
                return []
            sources = tuple(Name(("stream", s)) for s in ast.sources)
        else:
            sources = (qname,)

        cached = self.cs.lookup(qname)
        if cached is not None:
            self.bump("cs_hits")
            out = self._forward_copies(Packet(DATA, qname, body=cached.body), [in_face], in_face=-2)
            if self.pit.lookup(qname) is not None:
                self.pit.add_face(qname, in_face, now, continuous=True, source_prefixes=sources)
            return out

        existing = self.pit.lookup(qname)
        if existing is not None:
            self.pit.add_face(qname, in_face, now, continuous=True, source_prefixes=sources)
            self.bump("add_collapsed")
            return []

        self.pit.add_face(qname, in_face, now, continuous=True, source_prefixes=sources)

        if route is not None:
            return self._forward_routed(pkt, now)

        from_consumer = self.peer_role.get(self._peer_of(in_face)) == "consumer"
        if text is not None and from_consumer and self.role == "broker":
            return self._coordinate(qname, text, in_face, now)

        faces = []
        for prefix in sources:
            faces += self.fib.lookup(prefix)[:1]
        if not faces:
            self.bump("add_no_route")
            return []
        return self._forward_copies(pkt, faces, in_face)

    def _peer_of(self, face: int) -> Optional[str]:
        for peer, idx in self.peer_face.items():
            if idx == face:
                return peer
        return None

    def _coordinate(self, qname: Name, text: str, in_face: int, now: int) -> List[tuple]:
        canonical = to_canonical_expression(parse_query(text))
        state = self.queries.get(canonical)
        if state is not None and state.decision is not None:
            # resubmission: the plan and its announcements already exist
            self.bump("query_reused")
            self.qname_state[qname] = state
            return []
        tree = self.engine.get_tree(text)
        state = QueryState(qname, tree, in_face)
        self.queries[canonical] = state
        self.qname_state[qname] = state
        self.bump("status_probes")
        self.bump("mgmt_interests_sent")
        probe = Packet(INTEREST, STATUS_NAME, flags=FLAG_MANAGEMENT)
        return [("probe", qname, probe)]

    def complete_placement(
        self,
        qname: Name,
        status_payload: Optional[bytes],
        rate_of: Dict[str, float],
        roles: Dict[str, str],
        shortest: Dict[str, List[str]],
        now: int,
    ) -> List[tuple]:
        """Probe reply arrived: choose the path, announce, forward the Add."""
        state = self.qname_state[qname]
        tree = state.tree
        self.bump("mgmt_data_received")
        try:
            paths = parse_status_report(status_payload)
        except StatusTimeout:
            # no status: fall back to plain FIB forwarding, no operator spread
            self.bump("status_timeouts")
            faces = self.fib.lookup(Name(("stream", tree.source_names[0])))[:1]
            if not faces:
                return []
            return [("send", faces[0], Packet(ADD_CONTINUOUS_INTEREST, qname))]
        required = sum(rate_of.get(s, 0.0) for s in tree.source_names)
        chosen, degraded = find_optimal_path(paths, required)
        assignments = assign_operators(tree, chosen.path, roles)
        for node in tree.nodes:
            node.assigned_node = assignments[node.node_id]
        state.required_rate = required
        state.decision = PlacementDecision.build(qname, tree, chosen, degraded, assignments, paths)
        if degraded:
            self.bump("degraded_placements")

        primary = tree.source_names[0]
        state.routes[primary] = list(chosen.path)
        for source in tree.source_names[1:]:
            state.routes[source] = shortest[source]

        effects: List[tuple] = []
        if assignments[0] == self.node_id:
            self.executors[qname] = ExecutorState(qname, tree)
        for sub_name, target in sub_interest_names(qname, assignments):
            plan_node = int(sub_name[-1])
            subtree_sources = tuple(
                Name(("stream", s))
                for s in _plan_sources(tree, plan_node)
            )
            if target == self.node_id:
                self._install_sub(sub_name, plan_node, subtree_sources, state.add_face, qname, now)
                continue
            base = Packet(ADD_CONTINUOUS_INTEREST, sub_name)
            routed = RoutedPacket(base, list(chosen.path[1:]), target, plan_node, subtree_sources)
            effects.append(("send", self.face_toward(chosen.path[1]), routed))
            self.bump("sub_interests_sent")
        for source, path in state.routes.items():
            if len(path) < 2:
                continue
            base = Packet(ADD_CONTINUOUS_INTEREST, qname)
            routed = RoutedPacket(base, list(path[2:]) , path[-1])
            routed.sources = tuple(Name(("stream", s)) for s in tree.source_names)
            effects.append(("send", self.face_toward(path[1]), routed))
        return effects

    def _install_sub(self, sub_name: Name, plan_node: int, sources: Tuple[Name, ...],
                     face: int, qname: Name, now: int) -> None:
        self.pit.add_face(sub_name, face, now, continuous=True, source_prefixes=sources)
        self.bump("sub_entries_installed")
        if plan_node == 0 and qname not in self.executors:
            text = qname[-1]
            tree = self.engine.get_tree(text)
            self.executors[qname] = ExecutorState(qname, tree)

    def _on_sub_add(self, pkt: Packet, in_face: int, now: int) -> List[tuple]:
        target = getattr(pkt, "target", None)
        if target == self.node_id or target is None:
            sub_name = pkt.name
            qname = Name(sub_name[:-2])
            self._install_sub(sub_name, getattr(pkt, "plan_node", 0) or int(sub_name[-1]),
                              getattr(pkt, "sources", ()), in_face, qname, now)
            return []
        return self._forward_routed(pkt, now)

    def _forward_routed(self, pkt: Packet, now: int) -> List[tuple]:
        route = pkt.route
        if not route:
            return []
        nxt = route.pop(0)
        if nxt == self.node_id and route:
            nxt = route.pop(0)
        if nxt == self.node_id:
            return []
        face = self.peer_face.get(nxt)
        if face is None:
            self.bump("route_broken")
            return []
        return [("send", face, pkt)]

    def on_remove_continuous_interest(self, pkt: Packet, in_face: int, now: int) -> List[tuple]:
        qname = pkt.name
        route = getattr(pkt, "route", None)
        entry = self.pit.lookup(qname)
        if entry is None:
            if route:
                return self._forward_routed(pkt, now)
            self.bump("remove_unmatched")
            return []
        survived = self.pit.remove_face(qname, in_face)
        if survived is not None and survived.faces:
            self.bump("remove_retained")
            return []
        if len(qname) >= 3 and qname[-2] == "sub":
            if qname[-1] == "0":
                self.executors.pop(Name(qname[:-2]), None)
            return []
        self.executors.pop(qname, None)
        state = self.qname_state.pop(qname, None)
        if state is not None and state.decision is not None:
            # coordinator: tear down announcements and upstream trails
            self.queries.pop(state.decision.canonical, None)
            effects: List[tuple] = []
            for item in state.decision.assignments:
                sub_name = qname.extend("sub", str(item["plan_node"]))
                target = item["node"]
                if target == self.node_id:
                    self.pit.drop(sub_name)
                    continue
                path = list(state.decision.path)
                base = Packet(REMOVE_CONTINUOUS_INTEREST, sub_name)
                effects.append(
                    ("send", self.face_toward(path[1]), RoutedPacket(base, path[2:], target))
                )
            for source, path in state.routes.items():
                if len(path) < 2:
                    continue
                base = Packet(REMOVE_CONTINUOUS_INTEREST, qname)
                effects.append(
                    ("send", self.face_toward(path[1]), RoutedPacket(base, list(path[2:]), path[-1]))
                )
            return effects
        if route is not None:
            return self._forward_routed(pkt, now)
        faces = []
        for prefix in entry.source_prefixes:
            faces += self.fib.lookup(prefix)[:1]
        return self._forward_copies(pkt, faces, in_face)

    # -- the data stream ---------------------------------------------------------

    def on_data_stream(self, pkt: Packet, in_face: int, now: int) -> Tuple[List[tuple], int]:
        name = pkt.name
        entries = self.pit.continuous_for_source(name)
        if not entries:
            if name in self.origin_streams:
                # a producer multicasts from the start; without a standing
                # entry yet the first broker hop is where packets die
                return self._forward_copies(pkt, range(len(self.links)), in_face), 0
            self.bump("stream_no_route")
            return [], 0
        batch: TupleBatch = pkt.body
        max_ts = batch.rows[-1][0]
        faces: List[int] = []
        triggered: List[Name] = []
        for entry in entries:
            for f in entry.faces:
                faces.append(f)
            if entry.last_ts < max_ts:
                entry.last_ts = max_ts
                if entry.name in self.executors:
                    triggered.append(entry.name)
            else:
                self.bump("stream_stale")
        effects = self._forward_copies(pkt, faces, in_face)
        for qname in triggered:
            effects += self._run_executor(self.executors[qname], name, batch, now)
        return effects, 0

    def _run_executor(self, state: ExecutorState, stream: Name, batch: TupleBatch,
                      now: int) -> List[tuple]:
        source = stream[-1]
        tree = state.tree
        self.engine.bind_schema(source, batch.schema)
        emissions: List[ComplexEvent] = []
        if tree.root.spec.kind == "predict":
            self.engine.feed(tree, source, batch.rows)
            emissions = self.engine.boundary_events(state.qname.uri, tree, batch.rows[-1][0])
        else:
            for row in batch.rows:
                self.engine.feed(tree, source, (row,))
                ce = self.engine.process(state.qname.uri, tree, row[0])
                if ce is not None:
                    emissions.append(ce)
        if not emissions:
            return []
        entry = self.pit.lookup(state.qname)
        faces = entry.faces if entry is not None else []
        effects: List[tuple] = []
        for ce in emissions:
            self.cs.insert(state.qname, ce, ce.ts)
            self.bump("complex_events_emitted")
            effects += self._forward_copies(Packet(DATA, state.qname, body=ce), faces, in_face=-2)
        return effects

    def _pr_process(self, state: PrExecutorState, pkt: Packet, now: int) -> Tuple[Packet, int]:
        """Per-poll query cycle: feed the delta, re-evaluate, replace payload."""
        batch: TupleBatch = pkt.body
        extra = self.pr_cycle_us
        self.bump("pr_cycles")
        if not batch.rows:
            return Packet(DATA, pkt.name, body=None), extra
        tree = state.tree
        self.engine.bind_schema(state.source, batch.schema)
        self.engine.feed(tree, state.source, batch.rows)
        state.max_ts = max(state.max_ts, batch.rows[-1][0])
        if tree.root.spec.kind == "predict":
            events = self.engine.boundary_events(state.qname.uri, tree, state.max_ts)
            body: object = events[-1] if events else None
        elif tree.root.spec.kind == "window":
            # a full window per poll is the one thing polls cannot afford;
            # ship the delta and let the consumer assemble
            body = ComplexEvent(state.qname.uri, state.max_ts, "tuples", list(batch.rows), batch.schema)
        else:
            if state.max_ts == state.last_emit_ts:
                body = None
            else:
                body = self.engine.process(state.qname.uri, tree, state.max_ts)
        if body is not None:
            state.last_emit_ts = state.max_ts
        return Packet(DATA, pkt.name, body=body), extra

    # -- management --------------------------------------------------------------

    def _on_management(self, pkt: Packet, in_face: int, now: int) -> List[tuple]:
        name = pkt.name
        if name[:2] != MGMT_PREFIX:
            self.bump("mgmt_unknown_discarded")
            return []
        if pkt.hop_limit <= 1:
            self.bump("hop_limit_exhausted")
            return []
        m = flowctl.ManagementPacket.decode_payload(pkt.payload)
        flow_name = Name.from_uri(m.flow_id)
        if m.direction == flowctl.FORWARD:
            if self.role == "consumer":
                reflect = flowctl.ManagementPacket(m.flow_id, m.stamped_rate, m.u_bit,
                                                   flowctl.FEEDBACK)
                back = Packet(INTEREST, name, payload=reflect.encode_payload(),
                              flags=FLAG_MANAGEMENT)
                self.bump("mgmt_reflected")
                return self._forward_copies(back, [in_face], in_face=-2)
            entries = self.pit.continuous_for_source(flow_name)
            faces = []
            for entry in entries:
                for f in entry.faces:
                    if f not in faces and f != in_face:
                        faces.append(f)
            out: List[tuple] = []
            for face in faces:
                if face == LOCAL_FACE:
                    continue
                copy = flowctl.ManagementPacket(m.flow_id, m.stamped_rate, m.u_bit, m.direction)
                link = self.links[face]
                flowctl.router_on_management(link.ledger, copy)
                fwd = Packet(INTEREST, name, payload=copy.encode_payload(), flags=FLAG_MANAGEMENT,
                             hop_limit=pkt.hop_limit - 1)
                out.append(("send", face, fwd))
            if not out:
                self.bump("mgmt_no_route")
            return out
        # feedback: walk back toward the producer
        if self.role == "producer" and m.flow_id in self.producer_flows:
            state = self.producer_flows[m.flow_id]
            advertised = self.path_mu(m.flow_id) if self.path_mu else state.desired_rate
            flowctl.producer_on_feedback(state, m, advertised, now)
            self.bump("mgmt_feedback_consumed")
            return []
        faces = self.fib.lookup(flow_name)[:1]
        out = []
        for face in faces:
            link = self.links[face]
            copy = flowctl.ManagementPacket(m.flow_id, m.stamped_rate, m.u_bit, m.direction)
            flowctl.router_on_management(link.ledger, copy)
            fwd = Packet(INTEREST, name, payload=copy.encode_payload(), flags=FLAG_MANAGEMENT,
                         hop_limit=pkt.hop_limit - 1)
            out.append(("send", face, fwd))
        if not out:
            self.bump("mgmt_no_route")
        return out


def _plan_sources(tree: PlanTree, plan_node: int) -> Tuple[str, ...]:
    from .query import QueryAst

    node = tree.nodes[plan_node]
    return QueryAst(node.spec).sources
