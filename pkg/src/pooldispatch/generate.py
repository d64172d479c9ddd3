"""Synthetic scenario generation: grid networks and Poisson demand.

Produces the same CSV schemas the simulator consumes, so generated scenarios
run unmodified. Origins and destinations are uniform over the nodes; request
times follow a Poisson process with the configured rate over the horizon.
"""
from __future__ import annotations

import csv
import random
from pathlib import Path
from typing import List, Optional, Tuple


def grid_network_rows(rows: int, cols: int, edge_travel_time: float = 60.0,
                      edge_distance: float = 500.0) -> Tuple[List[str], List[Tuple[str, str, float, float]]]:
    nodes = [f"n{r}_{c}" for r in range(rows) for c in range(cols)]
    edges: List[Tuple[str, str, float, float]] = []
    for r in range(rows):
        for c in range(cols):
            here = f"n{r}_{c}"
            if r + 1 < rows:
                edges.append((here, f"n{r + 1}_{c}", edge_travel_time, edge_distance))
                edges.append((f"n{r + 1}_{c}", here, edge_travel_time, edge_distance))
            if c + 1 < cols:
                edges.append((here, f"n{r}_{c + 1}", edge_travel_time, edge_distance))
                edges.append((f"n{r}_{c + 1}", here, edge_travel_time, edge_distance))
    return nodes, edges


def poisson_requests(nodes: List[str], rate_per_hour: float, duration_s: float,
                     seed: int, count: Optional[int] = None) -> List[Tuple[int, str, str, float]]:
    """(id, origin, destination, earliest pick-up) rows.

    Arrival times come from exponential gaps at the given rate; when `count`
    is set, exactly that many requests are spread over the horizon instead.
    """
    rng = random.Random(f"{seed}/demand")
    times: List[float] = []
    if count is not None:
        times = sorted(round(rng.uniform(0.0, duration_s), 0) for _ in range(count))
    else:
        t = 0.0
        while True:
            t += rng.expovariate(rate_per_hour / 3600.0)
            if t > duration_s:
                break
            times.append(round(t, 0))
    out = []
    for i, t in enumerate(times, start=1):
        origin, destination = rng.sample(nodes, 2)
        out.append((i, origin, destination, float(t)))
    return out


def write_scenario(out_dir, rows: int, cols: int, seed: int,
                   rate_per_hour: Optional[float] = None,
                   count: Optional[int] = None,
                   duration_s: float = 7200.0,
                   edge_travel_time: float = 60.0,
                   edge_distance: float = 500.0,
                   config_overrides: Optional[dict] = None) -> Path:
    """Write nodes.csv, edges.csv, requests.csv and scenario.cfg."""
    if rate_per_hour is None and count is None:
        raise ValueError("either a request rate or a request count is required")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    nodes, edges = grid_network_rows(rows, cols, edge_travel_time, edge_distance)
    with open(out / "nodes.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["node_id"])
        for n in nodes:
            w.writerow([n])
    with open(out / "edges.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["from_node", "to_node", "travel_time_s", "distance_m"])
        for e in edges:
            w.writerow([e[0], e[1], repr(e[2]), repr(e[3])])
    with open(out / "requests.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["request_id", "origin_node", "destination_node", "earliest_pickup_s", "kind"])
        for rid, o, d, t in poisson_requests(nodes, rate_per_hour or 0.0, duration_s, seed, count):
            w.writerow([rid, o, d, repr(t), "auto"])
    cfg_lines = [f"seed={seed}"]
    for key, value in sorted((config_overrides or {}).items()):
        cfg_lines.append(f"{key}={value}")
    (out / "scenario.cfg").write_text("\n".join(cfg_lines) + "\n", encoding="utf-8")
    return out
