"""Rate-based hop-by-hop flow control.

Producers pace themselves to a rate estimate. Every management period
they emit a management packet stamped with that estimate; each router on
the data path tracks per-flow stamped rates on its egress link, computes
the link's advertised fair rate, and clamps the stamp down (setting the
u-bit) when it exceeds the fair share. The consumer reflects the packet
back; the producer adopts the clamped value, or raises its estimate back
toward demand when nobody clamped.

The advertised rate of a link of capacity C is

    mu = (C - C_R) / (n - n_R)

where C_R is the capacity consumed by restricted flows (flows whose
recorded rate sits below the advertised rate, so they cannot use a full
share), n = f + k*b counts forward flows plus feedback flows weighted by
k, and n_R counts the restricted among them. Restricted/unrestricted
labels are made consistent by refixing: reclassify against the new rate
until the partition stops moving. Converges to max-min fairness.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, List, Optional, Set

MANAGEMENT_PERIOD_US = 100_000
FEEDBACK_WEIGHT = 1  # k: how much link capacity a feedback flow is charged

FORWARD = "forward"
FEEDBACK = "feedback"


class NoUnrestrictedFlows(Exception):
    """Eq. evaluation has no unrestricted flow to give capacity to."""


@dataclass
class ManagementPacket:
    flow_id: str
    stamped_rate: float
    u_bit: bool
    direction: str = FORWARD

    def encode_payload(self) -> bytes:
        return f"{self.flow_id}|{self.stamped_rate!r}|{int(self.u_bit)}|{self.direction}".encode()

    @classmethod
    def decode_payload(cls, payload: bytes) -> "ManagementPacket":
        flow_id, rate, u, direction = payload.decode().split("|")
        return cls(flow_id, float(rate), bool(int(u)), direction)


class FlowLedger:
    """Per-directed-link flow accounting and fair-rate advertisement."""

    def __init__(self, capacity: float, k: int = FEEDBACK_WEIGHT):
        if capacity <= 0:
            raise ValueError("link capacity must be positive")
        self.capacity = capacity
        self.k = k
        self.rates: Dict[str, float] = {}
        self.restricted: Set[str] = set()
        self.feedback_flows: Set[str] = set()
        self.mu: float = capacity  # last advertisement, C / max(flows, 1) initially

    def advertised_rate(self) -> float:
        """Eq. value for the current sets; raises when nothing is unrestricted."""
        c_r = sum(self.rates[f] for f in self.restricted)
        n = len(self.rates) + self.k * len(self.feedback_flows)
        n_r = len(self.restricted)  # feedback flows carry no rate, never restricted
        if n - n_r <= 0:
            raise NoUnrestrictedFlows(f"{len(self.rates)} flows, all restricted")
        return (self.capacity - c_r) / (n - n_r)

    def reclassify(self) -> float:
        """Refix restricted/unrestricted labels until consistent.

        Returns the resulting advertisement; on NoUnrestrictedFlows the
        previous advertisement stands.
        """
        for _ in range(len(self.rates) + 2):
            try:
                mu = self.advertised_rate()
            except NoUnrestrictedFlows:
                return self.mu
            wanted = {f for f, r in self.rates.items() if r < mu}
            if wanted == self.restricted:
                self.mu = mu
                return mu
            self.restricted = wanted
        self.mu = mu  # partition cycles are impossible, but stay safe
        return mu


def router_on_management(ledger: FlowLedger, m: ManagementPacket) -> Optional[float]:
    """Per-hop handling on the egress link's ledger.

    Forward packets update the flow's recorded rate and get clamped to
    the advertised rate when they stamp at least that much. Feedback
    packets only register so Eq.'s n term can charge them. Returns the
    advertisement applied to forward packets.
    """
    if m.direction == FEEDBACK:
        ledger.feedback_flows.add(m.flow_id)
        return None
    ledger.rates[m.flow_id] = m.stamped_rate
    mu = ledger.reclassify()
    if m.stamped_rate >= mu:
        m.stamped_rate = mu
        m.u_bit = True
    return mu


@dataclass
class ProducerRateState:
    """Producer-side estimate for one flow, with its rate trace."""

    flow_id: str
    desired_rate: float
    estimate: float = field(default=0.0)
    last_allocation: float = field(default=float("inf"))
    trace: List[tuple] = field(default_factory=list)  # (t, estimate, stamped, u)

    def __post_init__(self):
        if self.desired_rate <= 0:
            raise ValueError("desired rate must be positive")
        if not self.estimate:
            self.estimate = self.desired_rate


def emit_management(state: ProducerRateState, now: int) -> ManagementPacket:
    """Called once per period: stamp the current estimate."""
    m = ManagementPacket(
        state.flow_id,
        state.estimate,
        u_bit=state.desired_rate < state.last_allocation,
        direction=FORWARD,
    )
    state.trace.append((now, state.estimate, m.stamped_rate, m.u_bit))
    return m


def producer_on_feedback(
    state: ProducerRateState, m: ManagementPacket, current_advertised: float, now: int = 0
) -> float:
    """Adopt the reflected allocation.

    A set u-bit means some router clamped (or demand already sat below
    the allocation): the stamp is the grant. A clear u-bit means the whole
    path had room: rise to the advertised rate, bounded by demand.
    """
    if m.u_bit:
        state.estimate = min(m.stamped_rate, state.desired_rate)
        state.last_allocation = m.stamped_rate
    else:
        state.estimate = min(current_advertised, state.desired_rate)
        state.last_allocation = current_advertised
    state.trace.append((now, state.estimate, m.stamped_rate, m.u_bit))
    return state.estimate


def initial_advertised(capacity: float, flow_count: int) -> float:
    return capacity / max(flow_count, 1)
