import random

import pytest

from pooldispatch.network import (ConnectivityError, Edge, EdgeProgress, Network,
                                  NetworkParseError, UnknownNodeError, load_network)

from conftest import csv_stream, grid_network


def test_load_minimal_graph():
    # one-way A->B plus return edge so the graph stays strongly connected
    net = load_network(
        csv_stream("node_id\nA\nB\n"),
        csv_stream("from_node,to_node,travel_time_s,distance_m\nA,B,60,500\nB,A,60,500\n"),
    )
    assert net.nodes == ["A", "B"]
    assert net.travel_time("A", "B") == 60.0
    assert net.travel_distance("A", "B") == 500.0


def test_load_rejects_undeclared_node():
    with pytest.raises(UnknownNodeError, match="Z"):
        load_network(
            csv_stream("node_id\nA\nB\n"),
            csv_stream("from_node,to_node,travel_time_s,distance_m\nA,Z,60,500\n"),
        )


def test_load_rejects_duplicate_node():
    with pytest.raises(NetworkParseError, match="duplicate"):
        load_network(csv_stream("node_id\nA\nA\n"),
                     csv_stream("from_node,to_node,travel_time_s,distance_m\n"))


def test_load_reports_line_numbers():
    with pytest.raises(NetworkParseError, match="line 3"):
        load_network(
            csv_stream("node_id\nA\nB\n"),
            csv_stream("from_node,to_node,travel_time_s,distance_m\nA,B,60,500\nB,A,sixty,500\n"),
        )


def test_connectivity_error_names_node():
    with pytest.raises(ConnectivityError, match="B"):
        Network(["A", "B"], [Edge("A", "B", 60.0, 500.0)])


def test_line_travel_times(line_net):
    assert line_net.travel_time("A", "A") == 0.0
    assert line_net.travel_time("A", "C") == 120.0
    assert line_net.travel_time("A", "D") == 180.0
    assert line_net.travel_distance("A", "A") == 0.0
    assert line_net.travel_distance("A", "C") == 1000.0


def test_parallel_edge_tie_broken_by_distance():
    net = Network(["A", "B"], [Edge("A", "B", 60.0, 500.0),
                               Edge("A", "B", 60.0, 400.0),
                               Edge("B", "A", 60.0, 500.0)])
    assert net.travel_time("A", "B") == 60.0
    assert net.travel_distance("A", "B") == 400.0
    assert net.best_edge("A", "B").distance == 400.0


def test_equal_time_paths_tie_broken_by_distance_then_lex():
    # two routes A->D with equal time; upper route shorter in distance
    nodes = ["A", "B", "C", "D"]
    edges = [
        Edge("A", "B", 60.0, 400.0), Edge("B", "D", 60.0, 400.0),
        Edge("A", "C", 60.0, 500.0), Edge("C", "D", 60.0, 500.0),
        Edge("D", "A", 60.0, 100.0),
    ]
    net = Network(nodes, edges)
    assert net.travel_time("A", "D") == 120.0
    assert net.travel_distance("A", "D") == 800.0
    assert net.path("A", "D") == ("A", "B", "D")
    # with equal distances the lexicographically smaller node sequence wins
    edges_eq = [
        Edge("A", "B", 60.0, 500.0), Edge("B", "D", 60.0, 500.0),
        Edge("A", "C", 60.0, 500.0), Edge("C", "D", 60.0, 500.0),
        Edge("D", "A", 60.0, 100.0),
    ]
    net_eq = Network(nodes, edges_eq)
    assert net_eq.path("A", "D") == ("A", "B", "D")


def test_triangle_inequality_and_determinism():
    net = grid_network(5, 5)
    rng = random.Random(7)
    nodes = net.nodes
    for _ in range(300):
        a, b, c = (rng.choice(nodes) for _ in range(3))
        assert net.travel_time(a, c) <= net.travel_time(a, b) + net.travel_time(b, c) + 1e-9
        assert net.travel_time(a, b) == net.travel_time(a, b)
        assert net.path(a, b) == net.path(a, b)


def test_path_distance_consistency():
    net = grid_network(4, 4)
    rng = random.Random(3)
    for _ in range(100):
        a, b = rng.choice(net.nodes), rng.choice(net.nodes)
        edges = net.path_edges(a, b)
        assert sum(e.distance for e in edges) == pytest.approx(net.travel_distance(a, b), abs=1e-9)
        assert sum(e.travel_time for e in edges) == pytest.approx(net.travel_time(a, b), abs=1e-9)


def test_unknown_node_query(line_net):
    with pytest.raises(UnknownNodeError):
        line_net.travel_time("A", "Z")


def test_mid_edge_position_queries(line_net):
    pos = EdgeProgress("A", "B", remaining_time=20.0, remaining_distance=150.0)
    assert line_net.travel_time_from(pos, "C") == 20.0 + 60.0
    assert line_net.travel_distance_from(pos, "C") == 150.0 + 500.0
    assert line_net.position_node(pos) == "B"
