"""Offline planners for pre-booked requests.

Two planners produce the initial vehicle schedules before the simulated day
starts: a sequential insertion baseline and the forward batch optimization
(batch the requests by earliest pick-up time, enumerate bundles per batch,
connect bundles and vehicles in a plan graph, and solve a chain-assignment
ILP over a rolling window of batches, fixing the head batch each step).
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Dict, FrozenSet, List, Optional, Sequence, Tuple

from .bundles import RequestBundle, build_request_bundles
from .demand import Request
from .ilp import BinaryProgram, Constraint, Solution, solve
from .network import Network
from .schedule import (ServiceParams, StopSpec, TIME_EPS, VehiclePlan, empty_plan,
                       insert_request, plan_cost_mc, simulate_timing)


@dataclass(frozen=True, slots=True)
class VehicleStart:
    vehicle_id: int
    location: str
    available_time: float = 0.0


@dataclass(slots=True)
class OfflinePlan:
    """Per-vehicle pre-booked schedules plus the rejected request ids."""
    vehicle_plans: Dict[int, VehiclePlan]
    starts: Dict[int, VehicleStart]
    rejected: List[int]

    def accepted_ids(self) -> List[int]:
        out = []
        for plan in self.vehicle_plans.values():
            out.extend(plan.request_ids())
        return sorted(out)

    def objective_mc(self, requests: Dict[int, Request], params: ServiceParams,
                     net: Network) -> float:
        total = 0.0
        for vid, plan in self.vehicle_plans.items():
            total += plan_cost_mc(plan, self.starts[vid].location, requests, params, net)
        return total


def _clamped_specs(plan: VehiclePlan) -> Tuple[StopSpec, ...]:
    """Freeze boarding stops at their planned service times (binding promise)."""
    out = []
    for s in plan.stops:
        clamp = s.planned_service if s.boarding else 0.0
        out.append(StopSpec(s.location, s.boarding, s.alighting, clamp))
    return tuple(out)


def _finalize(plans: Dict[int, VehiclePlan], starts: Dict[int, VehicleStart],
              requests: Dict[int, Request], params: ServiceParams, net: Network,
              rejected: List[int]) -> OfflinePlan:
    final: Dict[int, VehiclePlan] = {}
    for vid, plan in plans.items():
        if not plan.stops:
            continue
        start = starts[vid]
        res = simulate_timing(_clamped_specs(plan), start.location, start.available_time,
                              requests, params, net, vehicle_id=vid)
        if not res.ok:
            raise AssertionError(f"offline plan for vehicle {vid} lost feasibility: {res.violation}")
        final[vid] = res.plan
    return OfflinePlan(final, dict(starts), sorted(rejected))


# ---------------------------------------------------------------------------
# insertion baseline
# ---------------------------------------------------------------------------

def plan_insertion(pre_booked: Sequence[Request],
                   vehicles: Sequence[VehicleStart],
                   requests: Dict[int, Request],
                   params: ServiceParams,
                   net: Network,
                   max_candidate_vehicles: int = 25) -> OfflinePlan:
    """Insertion baseline: requests in ascending (earliest pick-up, id) order
    are inserted into the schedules of the nearest candidate vehicles.

    Proximity uses the travel time from the vehicle's expected position at the
    request's earliest pick-up time (the last scheduled stop before it, or the
    initial position) to the request origin. Only the best insertion among the
    ``max_candidate_vehicles`` nearest vehicles is committed.
    """
    starts = {v.vehicle_id: v for v in vehicles}
    plans: Dict[int, VehiclePlan] = {v.vehicle_id: empty_plan(v.vehicle_id) for v in vehicles}
    rejected: List[int] = []
    for req in sorted(pre_booked, key=lambda r: (r.earliest_pickup, r.id)):
        ranked = []
        for vid in sorted(plans):
            expected = starts[vid].location
            for stop in plans[vid].stops:
                if stop.planned_departure <= req.earliest_pickup:
                    expected = stop.location
                else:
                    break
            ranked.append((net.travel_time(expected, req.origin), vid))
        ranked.sort()
        best: Optional[Tuple[float, int, VehiclePlan]] = None
        for _, vid in ranked[:max_candidate_vehicles]:
            start = starts[vid]
            out = insert_request(plans[vid], req, start.location, start.available_time,
                                 requests, params, net)
            if out is None:
                continue
            new_plan, delta = out
            if best is None or delta < best[0]:
                best = (delta, vid, new_plan)
        if best is None:
            rejected.append(req.id)
        else:
            plans[best[1]] = best[2]
    return _finalize(plans, starts, requests, params, net, rejected)


# ---------------------------------------------------------------------------
# forward batch optimization
# ---------------------------------------------------------------------------

def make_batches(pre_booked: Sequence[Request], batch_size: int) -> List[List[Request]]:
    """Stable sort by (earliest pick-up, id), then consecutive chunks."""
    if batch_size < 1:
        raise ValueError("batch size must be >= 1")
    ordered = sorted(pre_booked, key=lambda r: (r.earliest_pickup, r.id))
    return [ordered[i:i + batch_size] for i in range(0, len(ordered), batch_size)]


@dataclass(frozen=True, slots=True)
class BundleNode:
    node_id: int
    batch_index: int
    bundle: RequestBundle

    @property
    def cost_mc(self) -> float:
        return self.bundle.cost_mc

    @property
    def start_location(self) -> str:
        return self.bundle.best_schedule.stops[0].location

    @property
    def end_location(self) -> str:
        return self.bundle.best_schedule.stops[-1].location

    @property
    def start_time(self) -> float:
        return self.bundle.best_schedule.stops[0].planned_service

    @property
    def end_time(self) -> float:
        return self.bundle.best_schedule.stops[-1].planned_departure


@dataclass(frozen=True, slots=True)
class GraphEdge:
    source: Tuple  # ("v", vid) | ("b", node_id) | ("nu",)
    target: Tuple
    cost_mc: float


@dataclass(slots=True)
class PlanGraph:
    bundle_nodes: List[BundleNode]
    vehicle_nodes: List[VehicleStart]
    edges: List[GraphEdge]


def build_plan_graph(window_bundles: Sequence[Dict[FrozenSet[int], RequestBundle]],
                     vehicle_nodes: Sequence[VehicleStart],
                     params: ServiceParams,
                     net: Network,
                     first_batch_index: int = 0) -> PlanGraph:
    """Connect bundle nodes and vehicle nodes of one rolling window.

    An edge (m, n) exists when the vehicle finishing m reaches n's start
    location no later than n's planned start time (early arrival waits), with
    cost distance(m end -> n start) + n's bundle cost. The hypothetical sink
    receives an edge from every node at cost 0 and feeds every vehicle node.
    """
    nodes: List[BundleNode] = []
    node_id = 0
    for offset, bundles in enumerate(window_bundles):
        for key in sorted(bundles, key=lambda s: (len(s), sorted(s))):
            nodes.append(BundleNode(node_id, first_batch_index + offset, bundles[key]))
            node_id += 1
    edges: List[GraphEdge] = []
    for v in sorted(vehicle_nodes, key=lambda v: v.vehicle_id):
        for n in nodes:
            arrival = v.available_time + net.travel_time(v.location, n.start_location)
            if arrival <= n.start_time + TIME_EPS:
                cost = params.dist_rate_mc_per_m * net.travel_distance(v.location, n.start_location)
                edges.append(GraphEdge(("v", v.vehicle_id), ("b", n.node_id), cost + n.cost_mc))
    for m in nodes:
        for n in nodes:
            if m.node_id == n.node_id:
                continue
            arrival = m.end_time + net.travel_time(m.end_location, n.start_location)
            if arrival <= n.start_time + TIME_EPS:
                cost = params.dist_rate_mc_per_m * net.travel_distance(m.end_location, n.start_location)
                edges.append(GraphEdge(("b", m.node_id), ("b", n.node_id), cost + n.cost_mc))
    for v in sorted(vehicle_nodes, key=lambda v: v.vehicle_id):
        edges.append(GraphEdge(("v", v.vehicle_id), ("nu",), 0.0))
    for n in nodes:
        edges.append(GraphEdge(("b", n.node_id), ("nu",), 0.0))
    for v in sorted(vehicle_nodes, key=lambda v: v.vehicle_id):
        edges.append(GraphEdge(("nu",), ("v", v.vehicle_id), 0.0))
    return PlanGraph(nodes, list(vehicle_nodes), edges)


def solve_batch_ilp(graph: PlanGraph, fleet_size: int,
                    node_budget: int = 200_000) -> Tuple[List[GraphEdge], float]:
    """Optimal edge selection of the chain-assignment program.

    Flow conservation at every node, degree <= 1 per non-sink node, sink
    degree <= fleet size, and each request covered at most once.
    """
    edges = graph.edges
    if not edges:
        return [], 0.0
    var_of = {id(e): j for j, e in enumerate(edges)}
    objective = [round(e.cost_mc) for e in edges]
    incoming: Dict[Tuple, List[int]] = {}
    outgoing: Dict[Tuple, List[int]] = {}
    for j, e in enumerate(edges):
        incoming.setdefault(e.target, []).append(j)
        outgoing.setdefault(e.source, []).append(j)
    node_keys = sorted(set(incoming) | set(outgoing))
    constraints: List[Constraint] = []
    for key in node_keys:
        coeffs: Dict[int, float] = {}
        for j in incoming.get(key, []):
            coeffs[j] = coeffs.get(j, 0.0) + 1.0
        for j in outgoing.get(key, []):
            coeffs[j] = coeffs.get(j, 0.0) - 1.0
        constraints.append(Constraint(coeffs, "==", 0.0))
    for key in node_keys:
        if key == ("nu",):
            continue
        if key in incoming:
            constraints.append(Constraint({j: 1.0 for j in incoming[key]}, "<=", 1.0))
        if key in outgoing:
            constraints.append(Constraint({j: 1.0 for j in outgoing[key]}, "<=", 1.0))
    constraints.append(Constraint({j: 1.0 for j in incoming.get(("nu",), [])}, "<=", float(fleet_size)))
    constraints.append(Constraint({j: 1.0 for j in outgoing.get(("nu",), [])}, "<=", float(fleet_size)))
    # each request assigned at most once (edges into bundles containing it)
    request_groups: Dict[int, List[int]] = {}
    by_node = {("b", n.node_id): n for n in graph.bundle_nodes}
    for j, e in enumerate(edges):
        node = by_node.get(e.target)
        if node is None:
            continue
        for rid in node.bundle.requests:
            request_groups.setdefault(rid, []).append(j)
    groups = []
    for rid in sorted(request_groups):
        constraints.append(Constraint({j: 1.0 for j in request_groups[rid]}, "<=", 1.0))
        groups.append(sorted(request_groups[rid]))
    program = BinaryProgram(len(edges), [float(c) for c in objective], constraints,
                            branch_groups=groups)
    solution = solve(program, node_budget=node_budget)
    if not solution.ok:
        raise AssertionError("batch ILP reported infeasible; the empty selection is always feasible")
    chosen = [e for j, e in enumerate(edges) if solution.values[j] == 1]
    return chosen, solution.objective


def _decode_chains(selected: List[GraphEdge],
                   graph: PlanGraph) -> Dict[int, List[BundleNode]]:
    succ: Dict[Tuple, Tuple] = {}
    for e in selected:
        if e.source != ("nu",) and e.target != ("nu",):
            succ[e.source] = e.target
        elif e.source != ("nu",) and e.target == ("nu",):
            pass
    by_node = {("b", n.node_id): n for n in graph.bundle_nodes}
    chains: Dict[int, List[BundleNode]] = {}
    for v in graph.vehicle_nodes:
        chain = []
        key = ("v", v.vehicle_id)
        while key in succ:
            key = succ[key]
            chain.append(by_node[key])
        chains[v.vehicle_id] = chain
    return chains


def plan_fbo(pre_booked: Sequence[Request],
             vehicles: Sequence[VehicleStart],
             requests: Dict[int, Request],
             params: ServiceParams,
             net: Network,
             batch_size: int = 20,
             window_batches: int = 2,
             grade_cap: Optional[int] = None,
             node_budget: int = 200_000) -> OfflinePlan:
    """Forward batch optimization with a rolling window.

    Solves the chain assignment over ``window_batches + 1`` consecutive
    batches, fixes every selected bundle of the head batch (updating each
    vehicle to the end of its fixed partial schedule), slides the window by
    one batch and repeats. Head-batch requests that were not selected in
    their window are rejected permanently.
    """
    starts = {v.vehicle_id: v for v in vehicles}
    if not pre_booked:
        return OfflinePlan({}, dict(starts), [])
    batches = make_batches(pre_booked, batch_size)
    bundle_cache: List[Dict[FrozenSet[int], RequestBundle]] = [
        build_request_bundles(batch, requests, params, net, grade_cap=grade_cap)
        for batch in batches
    ]
    current: Dict[int, VehicleStart] = {v.vehicle_id: v for v in vehicles}
    fixed_specs: Dict[int, List[StopSpec]] = {v.vehicle_id: [] for v in vehicles}
    rejected: List[int] = []
    for j in range(len(batches)):
        window = bundle_cache[j:j + window_batches + 1]
        graph = build_plan_graph(window, sorted(current.values(), key=lambda v: v.vehicle_id),
                                 params, net, first_batch_index=j)
        selected, _ = solve_batch_ilp(graph, len(vehicles), node_budget=node_budget)
        chains = _decode_chains(selected, graph)
        fixed_ids = set()
        for vid in sorted(chains):
            chain = chains[vid]
            head = []
            for node in chain:
                if node.batch_index == j:
                    head.append(node)
                else:
                    break
            if any(node.batch_index == j for node in chain[len(head):]):
                raise AssertionError("head-batch bundle appeared after a later batch in a chain")
            for node in head:
                best = node.bundle.best_schedule
                fixed_specs[vid].extend(
                    StopSpec(s.location, s.boarding, s.alighting,
                             s.planned_service if s.boarding else 0.0)
                    for s in best.stops)
                fixed_ids.update(node.bundle.requests)
                current[vid] = VehicleStart(vid, node.end_location, node.end_time)
        for req in batches[j]:
            if req.id not in fixed_ids:
                rejected.append(req.id)
    plans: Dict[int, VehiclePlan] = {}
    for vid, specs in fixed_specs.items():
        start = starts[vid]
        res = simulate_timing(specs, start.location, start.available_time, requests,
                              params, net, vehicle_id=vid)
        if not res.ok:
            raise AssertionError(f"fixed FBO chain for vehicle {vid} infeasible: {res.violation}")
        plans[vid] = res.plan
    return _finalize(plans, starts, requests, params, net, rejected)


# ---------------------------------------------------------------------------
# serialization (consumed by the online phase and written as an artifact)
# ---------------------------------------------------------------------------

def offline_plan_to_dict(plan: OfflinePlan) -> dict:
    vehicles = {}
    for vid in sorted(plan.vehicle_plans):
        vplan = plan.vehicle_plans[vid]
        vehicles[str(vid)] = {
            "start_node": plan.starts[vid].location,
            "stops": [
                {
                    "node": s.location,
                    "boarding": list(s.boarding),
                    "alighting": list(s.alighting),
                    "planned_arrival": s.planned_arrival,
                    "planned_service": s.planned_service,
                    "planned_departure": s.planned_departure,
                }
                for s in vplan.stops
            ],
        }
    return {"vehicles": vehicles, "rejected": list(plan.rejected)}


def offline_plan_to_json(plan: OfflinePlan) -> str:
    return json.dumps(offline_plan_to_dict(plan), indent=2, sort_keys=True)


def offline_plan_from_dict(data: dict, starts: Dict[int, VehicleStart],
                           requests: Dict[int, Request], params: ServiceParams,
                           net: Network) -> OfflinePlan:
    plans: Dict[int, VehiclePlan] = {}
    for vid_str, entry in data["vehicles"].items():
        vid = int(vid_str)
        specs = tuple(
            StopSpec(s["node"], tuple(s["boarding"]), tuple(s["alighting"]),
                     s["planned_service"] if s["boarding"] else 0.0)
            for s in entry["stops"])
        start = starts[vid]
        res = simulate_timing(specs, start.location, start.available_time, requests,
                              params, net, vehicle_id=vid)
        if not res.ok:
            raise ValueError(f"stored offline plan for vehicle {vid} is infeasible: {res.violation}")
        for stored, replayed in zip(entry["stops"], res.plan.stops):
            if abs(stored["planned_service"] - replayed.planned_service) > 1e-6:
                raise ValueError(f"stored offline plan for vehicle {vid} does not replay")
        plans[vid] = res.plan
    return OfflinePlan(plans, dict(starts), sorted(data["rejected"]))
