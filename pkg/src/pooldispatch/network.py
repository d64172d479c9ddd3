"""Road network with deterministic minimum-travel-time routing.

Travel times are constant for the whole simulation. Every query between the
same node pair returns the identical canonical path: ties in travel time are
broken by smaller distance, then by lexicographic node sequence.
"""
from __future__ import annotations

import csv
import heapq
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Optional, TextIO, Tuple, Union


class NetworkError(ValueError):
    """Base class for network loading and query errors."""


class NetworkParseError(NetworkError):
    pass


class UnknownNodeError(NetworkError):
    pass


class ConnectivityError(NetworkError):
    pass


@dataclass(frozen=True, slots=True)
class Edge:
    from_node: str
    to_node: str
    travel_time: float  # seconds, > 0
    distance: float     # meters, >= 0


@dataclass(frozen=True, slots=True)
class EdgeProgress:
    """Vehicle position mid-edge: committed to finish the current edge."""
    from_node: str
    to_node: str
    remaining_time: float
    remaining_distance: float


Position = Union[str, EdgeProgress]


class Network:
    """Directed road graph with cached single-source shortest path labels."""

    def __init__(self, nodes: Iterable[str], edges: Iterable[Edge]):
        self.nodes = sorted(set(nodes))
        self._node_set = set(self.nodes)
        self.edges: List[Edge] = list(edges)
        self._adjacency: Dict[str, List[Edge]] = {n: [] for n in self.nodes}
        for e in self.edges:
            if e.from_node not in self._node_set:
                raise UnknownNodeError(f"edge references undeclared node {e.from_node!r}")
            if e.to_node not in self._node_set:
                raise UnknownNodeError(f"edge references undeclared node {e.to_node!r}")
            if not (e.travel_time > 0.0) or e.travel_time != e.travel_time or e.travel_time == float("inf"):
                raise NetworkError(f"edge {e.from_node}->{e.to_node}: travel time must be finite and > 0")
            if not (e.distance >= 0.0) or e.distance == float("inf"):
                raise NetworkError(f"edge {e.from_node}->{e.to_node}: distance must be finite and >= 0")
            self._adjacency[e.from_node].append(e)
        # deterministic relaxation order
        for n in self.nodes:
            self._adjacency[n].sort(key=lambda e: (e.to_node, e.travel_time, e.distance))
        self._label_cache: Dict[str, Dict[str, Tuple[float, float, Tuple[str, ...]]]] = {}
        self._check_strong_connectivity()

    # -- validation --------------------------------------------------------

    def _check_strong_connectivity(self) -> None:
        if not self.nodes:
            return
        root = self.nodes[0]
        fwd = self._reachable(root, forward=True)
        if len(fwd) != len(self.nodes):
            missing = sorted(self._node_set - fwd)[0]
            raise ConnectivityError(f"node {missing!r} is not reachable from {root!r}")
        bwd = self._reachable(root, forward=False)
        if len(bwd) != len(self.nodes):
            missing = sorted(self._node_set - bwd)[0]
            raise ConnectivityError(f"node {root!r} is not reachable from {missing!r}")

    def _reachable(self, root: str, forward: bool) -> set:
        if forward:
            adj = {n: [e.to_node for e in self._adjacency[n]] for n in self.nodes}
        else:
            adj = {n: [] for n in self.nodes}
            for e in self.edges:
                adj[e.to_node].append(e.from_node)
        seen = {root}
        stack = [root]
        while stack:
            u = stack.pop()
            for v in adj[u]:
                if v not in seen:
                    seen.add(v)
                    stack.append(v)
        return seen

    # -- shortest paths ----------------------------------------------------

    def _labels_from(self, source: str) -> Dict[str, Tuple[float, float, Tuple[str, ...]]]:
        """Dijkstra with (time, distance, node sequence) labels.

        The heap order itself implements the tie-breaking contract: the first
        time a node is settled its label is minimal in time, then distance,
        then lexicographic path.
        """
        cached = self._label_cache.get(source)
        if cached is not None:
            return cached
        if source not in self._node_set:
            raise UnknownNodeError(f"unknown node {source!r}")
        settled: Dict[str, Tuple[float, float, Tuple[str, ...]]] = {}
        heap: List[Tuple[float, float, Tuple[str, ...]]] = [(0.0, 0.0, (source,))]
        while heap:
            t, d, path = heapq.heappop(heap)
            node = path[-1]
            if node in settled:
                continue
            settled[node] = (t, d, path)
            for e in self._adjacency[node]:
                if e.to_node not in settled:
                    heapq.heappush(heap, (t + e.travel_time, d + e.distance, path + (e.to_node,)))
        self._label_cache[source] = settled
        return settled

    def _label(self, a: str, b: str) -> Tuple[float, float, Tuple[str, ...]]:
        if b not in self._node_set:
            raise UnknownNodeError(f"unknown node {b!r}")
        labels = self._labels_from(a)
        try:
            return labels[b]
        except KeyError:
            raise ConnectivityError(f"node {b!r} is not reachable from {a!r}") from None

    def travel_time(self, a: str, b: str) -> float:
        """Minimum total travel time in seconds; 0 for a == b."""
        return self._label(a, b)[0]

    def travel_distance(self, a: str, b: str) -> float:
        """Distance in meters along the canonical minimum-time path."""
        return self._label(a, b)[1]

    def path(self, a: str, b: str) -> Tuple[str, ...]:
        """Canonical minimum-time node sequence from a to b (inclusive)."""
        return self._label(a, b)[2]

    def path_edges(self, a: str, b: str) -> List[Edge]:
        """Edges realized along path(a, b); parallel edges resolved by (time, distance)."""
        nodes = self.path(a, b)
        out = []
        for u, v in zip(nodes, nodes[1:]):
            out.append(self.best_edge(u, v))
        return out

    def best_edge(self, a: str, b: str) -> Edge:
        candidates = [e for e in self._adjacency[a] if e.to_node == b]
        if not candidates:
            raise NetworkError(f"no edge {a!r}->{b!r}")
        return min(candidates, key=lambda e: (e.travel_time, e.distance))

    # -- position-aware queries (mid-edge starts) ---------------------------

    def travel_time_from(self, pos: Position, b: str) -> float:
        if isinstance(pos, EdgeProgress):
            return pos.remaining_time + self.travel_time(pos.to_node, b)
        return self.travel_time(pos, b)

    def travel_distance_from(self, pos: Position, b: str) -> float:
        if isinstance(pos, EdgeProgress):
            return pos.remaining_distance + self.travel_distance(pos.to_node, b)
        return self.travel_distance(pos, b)

    def position_node(self, pos: Position) -> str:
        """Node a plan departs from: the committed edge head if mid-edge."""
        if isinstance(pos, EdgeProgress):
            return pos.to_node
        return pos


def _read_rows(source: TextIO, expected_header: List[str], what: str) -> Iterable[Tuple[int, List[str]]]:
    reader = csv.reader(source)
    header = next(reader, None)
    if header is None:
        return
    header = [h.strip() for h in header]
    if header != expected_header:
        raise NetworkParseError(
            f"{what}: expected header {','.join(expected_header)!r}, got {','.join(header)!r}")
    for lineno, row in enumerate(reader, start=2):
        if not row or all(not c.strip() for c in row):
            continue
        yield lineno, [c.strip() for c in row]


def load_network(nodes_source: TextIO, edges_source: TextIO) -> Network:
    """Load a network from two CSV streams.

    nodes CSV header: node_id
    edges CSV header: from_node,to_node,travel_time_s,distance_m

    :raises NetworkParseError: malformed rows, with the offending line number
    :raises UnknownNodeError: edges referencing undeclared nodes
    :raises ConnectivityError: graph not strongly connected
    """
    nodes: List[str] = []
    seen = set()
    for lineno, row in _read_rows(nodes_source, ["node_id"], "nodes CSV"):
        if len(row) != 1 or not row[0]:
            raise NetworkParseError(f"nodes CSV line {lineno}: expected a single node id")
        if row[0] in seen:
            raise NetworkParseError(f"nodes CSV line {lineno}: duplicate node id {row[0]!r}")
        seen.add(row[0])
        nodes.append(row[0])

    edges: List[Edge] = []
    for lineno, row in _read_rows(edges_source, ["from_node", "to_node", "travel_time_s", "distance_m"], "edges CSV"):
        if len(row) != 4:
            raise NetworkParseError(f"edges CSV line {lineno}: expected 4 fields")
        try:
            tt = float(row[2])
            dist = float(row[3])
        except ValueError as exc:
            raise NetworkParseError(f"edges CSV line {lineno}: {exc}") from None
        if row[0] not in seen:
            raise UnknownNodeError(f"edges CSV line {lineno}: undeclared node {row[0]!r}")
        if row[1] not in seen:
            raise UnknownNodeError(f"edges CSV line {lineno}: undeclared node {row[1]!r}")
        edges.append(Edge(row[0], row[1], tt, dist))
    return Network(nodes, edges)
