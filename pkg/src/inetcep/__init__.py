"""Content-centric networking with an in-network complex event processor.

The package couples a CCN forwarding plane (content store, PIT, FIB,
five packet types) with continuous queries placed and evaluated inside
the network, a lossless rate-based flow control loop, and a pull
baseline, all driven by a deterministic event simulator.
"""

from .cep import ComplexEvent, QueryEngine, build_operator_tree
from .names import InvalidName, Name
from .packets import (
    ADD_CONTINUOUS_INTEREST,
    DATA,
    DATA_STREAM,
    INTEREST,
    REMOVE_CONTINUOUS_INTEREST,
    Packet,
    TupleBatch,
    decode_packet,
    encode_packet,
)
from .query import (
    Diagnostic,
    QueryError,
    QuerySyntaxError,
    parse_query,
    to_canonical_expression,
    validate,
)
from .sim import Scenario, load_scenario, run_scenario, scenario_from_dict
from .topology import build_topology

__version__ = "0.1.0"

__all__ = [
    "ADD_CONTINUOUS_INTEREST",
    "DATA",
    "DATA_STREAM",
    "INTEREST",
    "REMOVE_CONTINUOUS_INTEREST",
    "ComplexEvent",
    "Diagnostic",
    "InvalidName",
    "Name",
    "Packet",
    "QueryEngine",
    "QueryError",
    "QuerySyntaxError",
    "Scenario",
    "TupleBatch",
    "build_operator_tree",
    "build_topology",
    "decode_packet",
    "encode_packet",
    "load_scenario",
    "parse_query",
    "run_scenario",
    "scenario_from_dict",
    "to_canonical_expression",
    "validate",
    "__version__",
]
