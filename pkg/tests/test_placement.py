"""Path probing, optimal-path choice and operator spreading."""

import itertools

import pytest

from inetcep.cep import build_operator_tree
from inetcep.names import Name
from inetcep.placement import (
    PathStatus,
    PlacementDecision,
    StatusTimeout,
    assign_operators,
    encode_status_report,
    find_optimal_path,
    get_node_status,
    parse_status_report,
    sub_interest_names,
)
from inetcep.query import parse_query
from inetcep.topology import build_topology


def test_path_status_wire_form_frozen():
    status = PathStatus(("n1", "n2"), 5, 7, 0, 2.5)
    assert status.encode() == "n1|n2=5|7|0|2.5"
    assert PathStatus.decode(status.encode()) == status


@pytest.mark.parametrize("line", ["n1|n2", "n1=1|2|3", "n1=1|2|3|x", "n1=1|2|3|4|5"])
def test_path_status_rejects_malformed_lines(line):
    with pytest.raises(ValueError):
        PathStatus.decode(line)


def test_status_report_round_trip_and_timeout():
    paths = [
        PathStatus(("c", "x", "p"), 3000, 5000, 0, 2000.0),
        PathStatus(("c", "y", "p"), 2000, 5000, 2, 900.0),
    ]
    assert parse_status_report(encode_status_report(paths)) == paths
    assert parse_status_report(b"") == []
    with pytest.raises(StatusTimeout):
        parse_status_report(None)


# -- path choice --------------------------------------------------------------

REQUIRED = 1000.0
FEASIBLE_MU = 2000.0
INFEASIBLE_MU = {"P1": 900.0, "P2": 800.0, "P3": 700.0}
DELAY = {"P1": 3000, "P2": 2000, "P3": 1000}
VIA = {"P1": "x", "P2": "y", "P3": "z"}

ALL_COMBOS = [
    (frozenset(), "P1", True),  # nothing feasible: best-rate path, degraded
    (frozenset({"P1"}), "P1", False),
    (frozenset({"P2"}), "P2", False),
    (frozenset({"P3"}), "P3", False),
    (frozenset({"P1", "P2"}), "P2", False),  # lowest delay among feasible
    (frozenset({"P1", "P3"}), "P3", False),
    (frozenset({"P2", "P3"}), "P3", False),
    (frozenset({"P1", "P2", "P3"}), "P3", False),
]


def three_paths(feasible):
    return [
        PathStatus(
            ("c", VIA[p], "p"),
            DELAY[p],
            5000,
            0,
            FEASIBLE_MU if p in feasible else INFEASIBLE_MU[p],
        )
        for p in ("P1", "P2", "P3")
    ]


@pytest.mark.parametrize("feasible,winner,degraded", ALL_COMBOS)
def test_every_feasibility_combination(feasible, winner, degraded):
    chosen, got_degraded = find_optimal_path(three_paths(feasible), REQUIRED)
    assert chosen.path == ("c", VIA[winner], "p")
    assert got_degraded is degraded


def test_feasibility_combinations_are_exhaustive():
    assert {c for c, _, _ in ALL_COMBOS} == {
        frozenset(s) for n in range(4) for s in itertools.combinations(("P1", "P2", "P3"), n)
    }


def test_delay_tie_prefers_bandwidth_then_node_order():
    a = PathStatus(("c", "a", "p"), 1000, 9000, 0, 2000.0)
    b = PathStatus(("c", "b", "p"), 1000, 5000, 0, 2000.0)
    assert find_optimal_path([b, a], REQUIRED)[0] is a
    b2 = PathStatus(("c", "b", "p"), 1000, 9000, 0, 2000.0)
    assert find_optimal_path([b2, a], REQUIRED)[0] is a


def test_degraded_tie_prefers_lower_delay():
    a = PathStatus(("c", "a", "p"), 5000, 5000, 0, 900.0)
    b = PathStatus(("c", "b", "p"), 2000, 5000, 0, 900.0)
    assert find_optimal_path([a, b], REQUIRED) == (b, True)


def test_no_candidates_is_an_error():
    with pytest.raises(ValueError):
        find_optimal_path([], REQUIRED)


# -- operator spreading ----------------------------------------------------------

ROLES = {"b1": "broker", "b2": "broker", "b3": "broker", "p1": "producer", "c1": "consumer"}
CHAIN3 = "AGGREGATE(avg,'latitude',FILTER(WINDOW(GPS_S1,4s),'latitude'<50))"
JOIN5 = (
    "JOIN(FILTER(WINDOW(GPS_S1,4s),'latitude'<50),"
    "FILTER(WINDOW(GPS_S2,4s),'latitude'<50),GPS_S1.'ts'=GPS_S2.'ts')"
)


def tree_of(text):
    return build_operator_tree(parse_query(text))


def test_chain_spreads_root_to_leaf():
    got = assign_operators(tree_of(CHAIN3), ("b1", "b2", "b3", "p1"), ROLES)
    assert got == {0: "b1", 1: "b2", 2: "b3"}


def test_single_operator_sits_next_to_the_producer():
    got = assign_operators(tree_of("WINDOW(GPS_S1,4s)"), ("b1", "b2", "b3", "p1"), ROLES)
    assert got == {0: "b3"}


def test_three_operators_on_two_brokers():
    got = assign_operators(tree_of(CHAIN3), ("b1", "b2", "p1"), ROLES)
    assert got == {0: "b1", 1: "b1", 2: "b2"}  # round-half-even keeps depth 1 up top


def test_join_tree_spreads_by_depth():
    got = assign_operators(tree_of(JOIN5), ("b1", "b2", "b3", "p1"), ROLES)
    assert got == {0: "b1", 1: "b2", 2: "b3", 3: "b2", 4: "b3"}


def test_path_without_brokers_is_refused():
    with pytest.raises(ValueError):
        assign_operators(tree_of(CHAIN3), ("p1",), ROLES)


def test_sub_interest_names_follow_plan_order():
    qname = Name(("ce", CHAIN3))
    got = sub_interest_names(qname, {1: "b2", 0: "b1", 2: "b3"})
    assert got == [
        (qname.extend("sub", "0"), "b1"),
        (qname.extend("sub", "1"), "b2"),
        (qname.extend("sub", "2"), "b3"),
    ]


def test_decision_json_is_deterministic():
    tree = tree_of(CHAIN3)
    chosen = PathStatus(("b1", "b2", "b3", "p1"), 3000, 5000, 0, 2000.0)
    probed = [chosen, PathStatus(("b1", "b4", "p1"), 2000, 5000, 1, 100.0)]
    assignments = assign_operators(tree, chosen.path, ROLES)

    def build():
        return PlacementDecision.build(
            Name(("ce", CHAIN3)), tree, chosen, False, assignments, probed
        ).to_json()

    first, second = build(), build()
    assert first == second
    assert first["path"] == ["b1", "b2", "b3", "p1"]
    assert first["degraded"] is False
    assert [a["node"] for a in first["assignments"]] == ["b1", "b2", "b3"]
    assert first["probed_paths"] == [p.encode() for p in probed]


# -- live status over a topology ----------------------------------------------------


def test_grid_status_lists_all_three_paths_in_order():
    topo = build_topology("manhattan")
    got = get_node_status(topo, "n4", "n6")
    assert [p.path for p in got] == [
        ("n4", "n2", "n1", "n6"),
        ("n4", "n3", "n1", "n6"),
        ("n4", "n7", "n1", "n6"),
    ]
    for p in got:
        assert (p.r_us, p.b_evps, p.qos, p.mu) == (3000, 100_000, 0, 100_000.0)


def test_grid_status_samples_live_link_state():
    topo = build_topology("manhattan")
    mus = {("n4", "n2"): 50.0, ("n2", "n1"): 20.0}
    got = get_node_status(
        topo,
        "n4",
        "n6",
        link_mu=lambda a, b: mus.get((a, b), 1e9),
        link_drops=lambda a, b: 3,
    )
    assert got[0].mu == 20.0
    assert all(p.qos == 9 for p in got)  # three hops, three drops each
