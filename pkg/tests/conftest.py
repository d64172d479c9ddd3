import io

import pytest

from pooldispatch.demand import Kind, make_request
from pooldispatch.network import Edge, Network, load_network
from pooldispatch.schedule import ServiceParams


def line_network():
    """A-B-C-D line, bidirectional edges of 60 s / 500 m each."""
    nodes = ["A", "B", "C", "D"]
    edges = []
    for a, b in [("A", "B"), ("B", "C"), ("C", "D")]:
        edges.append(Edge(a, b, 60.0, 500.0))
        edges.append(Edge(b, a, 60.0, 500.0))
    return Network(nodes, edges)


def grid_network(rows, cols, edge_tt=60.0, edge_dist=500.0):
    """rows x cols grid, bidirectional edges between 4-neighbors."""
    nodes = [f"n{r}_{c}" for r in range(rows) for c in range(cols)]
    edges = []
    for r in range(rows):
        for c in range(cols):
            if r + 1 < rows:
                edges.append(Edge(f"n{r}_{c}", f"n{r + 1}_{c}", edge_tt, edge_dist))
                edges.append(Edge(f"n{r + 1}_{c}", f"n{r}_{c}", edge_tt, edge_dist))
            if c + 1 < cols:
                edges.append(Edge(f"n{r}_{c}", f"n{r}_{c + 1}", edge_tt, edge_dist))
                edges.append(Edge(f"n{r}_{c + 1}", f"n{r}_{c}", edge_tt, edge_dist))
    return Network(nodes, edges)


@pytest.fixture(scope="session")
def line_net():
    return line_network()


@pytest.fixture(scope="session")
def grid4():
    return grid_network(4, 4)


@pytest.fixture
def base_params():
    return ServiceParams()


def req(net, rid, o, d, t_e, kind=Kind.ON_DEMAND):
    return make_request(rid, o, d, t_e, kind, net)


def csv_stream(text):
    return io.StringIO(text)
