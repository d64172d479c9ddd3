"""Deterministic time-stepped fleet simulation.

Per step: reveal pre-booked horizon content, collect the on-demand requests
of the step, run the global assignment, reposition idle vehicles, then move
vehicles along their plans performing boardings (never before the earliest
pick-up time) and alightings. Vehicles commit per edge: replanning only
takes effect once the current edge is finished.

Empty vehicles defer departure toward a far-future stop (or the locked
suffix anchor) until the latest moment that still reaches it on time, so
they stay where demand left them and remain available for repositioning;
customer-visible times are unchanged because early arrival would wait at
the stop anyway.
"""
from __future__ import annotations

import json
import random
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

from .demand import Kind, Request
from .network import EdgeProgress, Network, Position
from .offline import OfflinePlan, VehicleStart, offline_plan_to_dict, plan_fbo, plan_insertion
from .online import AssignmentRound, OnlineCoordinator
from .repositioning import (IdleVehicle, RepositionTarget, collect_targets,
                            eligible_vehicles, match_repositioning)
from .schedule import ServiceParams, Stop, TIME_EPS, VehiclePlan, empty_plan

_GUARD_TAIL = 2 * 86400.0  # hard stop this long after the last earliest pick-up


@dataclass(slots=True)
class VehicleRuntime:
    vehicle_id: int
    start_node: str
    position: Position
    plan: VehiclePlan
    onboard_pickup_times: Dict[int, float] = field(default_factory=dict)
    odometer: float = 0.0
    repo_target: Optional[str] = None
    busy_until: float = 0.0
    stop_arrival: Optional[float] = None
    stop_boarded: bool = False

    def available_time(self, now: float) -> float:
        return max(now, self.busy_until)

    def set_plan(self, plan: VehiclePlan) -> None:
        # any replan invalidates the per-stop execution markers
        self.plan = plan
        self.stop_arrival = None
        self.stop_boarded = False

    @property
    def status(self) -> str:
        if self.plan.stops or self.onboard_pickup_times:
            return "serving"
        if self.repo_target is not None:
            return "repositioning"
        return "idle"

    def is_quiescent(self) -> bool:
        return (not self.plan.stops and self.plan.anchor is None
                and not self.onboard_pickup_times and self.repo_target is None
                and not isinstance(self.position, EdgeProgress))


@dataclass(slots=True)
class RequestRecord:
    request: Request
    accepted: Optional[bool] = None
    pickup_time: Optional[float] = None
    dropoff_time: Optional[float] = None
    vehicle: Optional[int] = None


@dataclass(slots=True)
class SimOutput:
    config: Dict[str, object]
    records: Dict[int, RequestRecord]
    trajectory: List[Tuple[float, int, str, int, str, float]]
    events: List[dict]
    offline_plan: OfflinePlan
    requests: Dict[int, Request]

    def fleet_distance_m(self) -> float:
        return sum(ev["distance_m"] for ev in self.events if ev["event"] == "edge")


class SimulationError(RuntimeError):
    pass


class Simulation:
    """One scenario run; see :func:`run_simulation` for the common entry."""

    def __init__(self, net: Network, requests: Sequence[Request], params: ServiceParams,
                 fleet_size: int, step: float, short_horizon: float,
                 revelation_horizon: float, repositioning: bool, repo_min_lead: float,
                 planner: str, batch_size: int, window_batches: int,
                 insert_max_vehicles: int, seed: int,
                 initial_positions: Optional[Sequence[str]] = None,
                 config: Optional[Dict[str, object]] = None):
        self.net = net
        self.params = params
        self.step = float(step)
        self.short_horizon = short_horizon
        self.revelation_horizon = revelation_horizon
        self.repositioning = repositioning
        self.repo_min_lead = repo_min_lead
        self.planner = planner
        self.batch_size = batch_size
        self.window_batches = window_batches
        self.insert_max_vehicles = insert_max_vehicles
        self.seed = seed
        self.config = dict(config or {})
        self.requests = {r.id: r for r in requests}
        if len(self.requests) != len(requests):
            raise SimulationError("duplicate request ids")
        if initial_positions is None:
            rng = random.Random(f"{seed}/vehicle-positions")
            initial_positions = [rng.choice(net.nodes) for _ in range(fleet_size)]
        elif len(initial_positions) != fleet_size:
            raise SimulationError("initial positions do not match the fleet size")
        self.starts = [VehicleStart(i, node, 0.0) for i, node in enumerate(initial_positions)]
        self.events: List[dict] = []
        self.records: Dict[int, RequestRecord] = {
            r.id: RequestRecord(r) for r in requests}
        self.trajectory: List[Tuple[float, int, str, int, str, float]] = []

    # -- offline phase -------------------------------------------------------

    def _plan_offline(self, pre_booked: List[Request]) -> OfflinePlan:
        starts = self.starts
        if self.planner == "fbo":
            plan = plan_fbo(pre_booked, starts, self.requests, self.params, self.net,
                            batch_size=self.batch_size, window_batches=self.window_batches)
        elif self.planner == "i":
            plan = plan_insertion(pre_booked, starts, self.requests, self.params, self.net,
                                  max_candidate_vehicles=self.insert_max_vehicles)
        else:
            raise SimulationError(f"unknown planner {self.planner!r}")
        return plan

    # -- main loop ------------------------------------------------------------

    def run(self) -> SimOutput:
        for rid in sorted(self.requests):
            r = self.requests[rid]
            self.events.append({"event": "request", "time": r.request_time, "request": rid,
                                "kind": r.kind.value, "earliest_pickup": r.earliest_pickup})
        pre_booked = [self.requests[rid] for rid in sorted(self.requests)
                      if self.requests[rid].kind is Kind.PRE_BOOKED]
        offline = self._plan_offline(pre_booked)
        for rid in offline.rejected:
            self.records[rid].accepted = False
        for rid in offline.accepted_ids():
            self.records[rid].accepted = True
        self.events.append({"event": "offline_plan", "time": 0.0,
                            "accepted": offline.accepted_ids(),
                            "rejected": list(offline.rejected)})

        vehicles: Dict[int, VehicleRuntime] = {}
        for s in self.starts:
            vehicles[s.vehicle_id] = VehicleRuntime(
                s.vehicle_id, s.location, s.location, empty_plan(s.vehicle_id))
        coordinator = OnlineCoordinator(self.requests, offline, self.params, self.net,
                                        self.short_horizon, self.revelation_horizon)

        on_demand = sorted((r for r in self.requests.values() if r.kind is Kind.ON_DEMAND),
                           key=lambda r: (r.request_time, r.id))
        next_od = 0
        now = 0.0
        guard = max([r.earliest_pickup for r in self.requests.values()], default=0.0) + _GUARD_TAIL
        while True:
            coordinator.reveal(now, vehicles)
            new_requests: List[Request] = []
            while next_od < len(on_demand) and on_demand[next_od].request_time <= now + TIME_EPS:
                new_requests.append(on_demand[next_od])
                next_od += 1
            round_result = coordinator.assign(now, vehicles, new_requests)
            for vid in sorted(vehicles):
                if vehicles[vid].plan.stops:
                    vehicles[vid].repo_target = None
            for rid in round_result.accepted:
                self.records[rid].accepted = True
            for rid in round_result.rejected:
                self.records[rid].accepted = False
            self.events.append({
                "event": "assignment_round", "time": now,
                "accepted": round_result.accepted, "rejected": round_result.rejected,
                "reassigned": {str(k): list(v) for k, v in sorted(round_result.reassigned.items())},
                "objective_mc": round_result.objective_mc,
                "active": round_result.active_count,
            })
            if self.repositioning and round_result.rejected:
                self._reposition(now, vehicles, round_result)
            for vid in sorted(vehicles):
                self._advance(vehicles[vid], coordinator, now, now + self.step)
            now += self.step
            for vid in sorted(vehicles):
                v = vehicles[vid]
                self.trajectory.append((now, vid, self.net.position_node(v.position),
                                        len(v.onboard_pickup_times), v.status,
                                        round(v.odometer, 6)))
            if next_od >= len(on_demand) and coordinator.all_prebooked_resolved() and \
                    all(v.is_quiescent() for v in vehicles.values()):
                break
            if now > guard:
                raise SimulationError("simulation did not quiesce; invariant broken")
        self.events.append({"event": "end", "time": now})
        return SimOutput(self.config, self.records, self.trajectory, self.events,
                         offline, self.requests)

    # -- repositioning ---------------------------------------------------------

    def _reposition(self, now: float, vehicles: Dict[int, VehicleRuntime],
                    round_result: AssignmentRound) -> None:
        origins = [self.requests[rid].origin for rid in round_result.rejected
                   if self.requests[rid].kind is Kind.ON_DEMAND]
        targets = collect_targets(origins, now)
        idle: List[IdleVehicle] = []
        for vid in sorted(vehicles):
            v = vehicles[vid]
            if v.plan.stops or v.onboard_pickup_times:
                continue
            idle.append(IdleVehicle(vid, v.position, v.plan.anchor))
        if not idle or not targets:
            return
        costs = eligible_vehicles(idle, targets, now, self.repo_min_lead, self.net)
        for i, k in match_repositioning(idle, targets, costs):
            v = vehicles[idle[i].vehicle_id]
            v.repo_target = targets[k].location
            self.events.append({"event": "reposition", "time": now,
                                "vehicle": idle[i].vehicle_id,
                                "target": targets[k].location,
                                "effective_tt_s": costs[(i, k)]})

    # -- vehicle motion ----------------------------------------------------------

    def _emit_board(self, v: VehicleRuntime, coordinator: OnlineCoordinator,
                    stop: Stop, when: float) -> None:
        for rid in stop.boarding:
            v.onboard_pickup_times[rid] = when
            rec = self.records[rid]
            rec.pickup_time = when
            rec.vehicle = v.vehicle_id
            self.events.append({"event": "board", "time": when, "request": rid,
                                "vehicle": v.vehicle_id, "node": stop.location})

    def _emit_alight(self, v: VehicleRuntime, coordinator: OnlineCoordinator,
                     stop: Stop, when: float) -> None:
        for rid in stop.alighting:
            if rid not in v.onboard_pickup_times:
                raise SimulationError(f"request {rid} alights from vehicle {v.vehicle_id} "
                                      "without being on board")
            del v.onboard_pickup_times[rid]
            self.records[rid].dropoff_time = when
            coordinator.mark_completed(rid)
            self.events.append({"event": "alight", "time": when, "request": rid,
                                "vehicle": v.vehicle_id, "node": stop.location})

    def _pop_stop(self, v: VehicleRuntime) -> None:
        v.plan = VehiclePlan(v.plan.vehicle_id, v.plan.stops[1:], v.plan.anchor)
        v.stop_arrival = None
        v.stop_boarded = False

    def _enter_edge(self, v: VehicleRuntime, target: str, now: float) -> None:
        node = v.position
        edge = self.net.path_edges(node, target)[0]
        self.events.append({"event": "edge", "time": now, "vehicle": v.vehicle_id,
                            "from_node": edge.from_node, "to_node": edge.to_node,
                            "exit_time": now + edge.travel_time,
                            "distance_m": edge.distance})
        v.position = EdgeProgress(edge.from_node, edge.to_node, edge.travel_time, edge.distance)

    def _service_start(self, stop: Stop) -> Optional[float]:
        """Earliest service moment of a future stop (None when unconstrained)."""
        bounds = []
        if stop.min_service_time > 0:
            bounds.append(stop.min_service_time)
        for rid in stop.boarding:
            bounds.append(self.requests[rid].earliest_pickup)
        return max(bounds) if bounds else None

    def _advance(self, v: VehicleRuntime, coordinator: OnlineCoordinator,
                 t_from: float, t_to: float) -> None:
        now = t_from
        while now < t_to - TIME_EPS:
            pos = v.position
            if isinstance(pos, EdgeProgress):
                dt = min(pos.remaining_time, t_to - now)
                share = dt / pos.remaining_time
                v.odometer += pos.remaining_distance * share
                if dt >= pos.remaining_time - TIME_EPS:
                    now += pos.remaining_time
                    v.position = pos.to_node
                else:
                    v.position = EdgeProgress(pos.from_node, pos.to_node,
                                              pos.remaining_time - dt,
                                              pos.remaining_distance - pos.remaining_distance * share)
                    now = t_to
                continue
            stops = v.plan.stops
            if stops and stops[0].location == pos:
                stop = stops[0]
                if v.stop_arrival is None:
                    v.stop_arrival = now
                    self._emit_alight(v, coordinator, stop, now)
                if not stop.boarding:
                    v.busy_until = v.stop_arrival + self.params.boarding_duration
                    if v.busy_until > t_to + TIME_EPS:
                        now = t_to
                        continue
                    now = max(now, v.busy_until)
                    self._pop_stop(v)
                    continue
                service = max(v.stop_arrival, self._service_start(stop) or v.stop_arrival)
                if service > t_to + TIME_EPS:
                    now = t_to
                    continue
                if not v.stop_boarded:
                    self._emit_board(v, coordinator, stop, service)
                    v.stop_boarded = True
                    v.busy_until = service + self.params.boarding_duration
                if v.busy_until > t_to + TIME_EPS:
                    now = t_to
                    continue
                now = max(now, v.busy_until)
                self._pop_stop(v)
                continue
            if stops:
                target = stops[0].location
                departure = now
                if not v.onboard_pickup_times:
                    s_star = self._service_start(stops[0])
                    if s_star is not None:
                        slack = s_star - self.net.travel_time(pos, target)
                        departure = max(now, slack)
                if departure > t_to + TIME_EPS:
                    now = t_to
                    continue
                now = max(now, departure)
                self._enter_edge(v, target, now)
                continue
            if v.plan.anchor is not None:
                anchor = v.plan.anchor
                if anchor.location == pos:
                    now = t_to
                    continue
                departure = anchor.arrival_deadline - self.net.travel_time(pos, anchor.location)
                if departure > t_to + TIME_EPS:
                    now = t_to
                    continue
                now = max(now, departure)
                self._enter_edge(v, anchor.location, now)
                continue
            if v.repo_target is not None and v.repo_target != pos:
                self._enter_edge(v, v.repo_target, now)
                continue
            if v.repo_target == pos:
                v.repo_target = None
                continue
            now = t_to


def write_outputs(output: SimOutput, out_dir) -> None:
    """Write the artifact files of one run into a directory."""
    import csv
    from pathlib import Path

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "requests.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["request_id", "kind", "accepted", "pickup_s", "dropoff_s",
                    "waiting_s", "detour_s", "direct_s", "direct_m"])
        for rid in sorted(output.records):
            rec = output.records[rid]
            r = rec.request
            if rec.pickup_time is not None and rec.dropoff_time is not None:
                waiting = rec.pickup_time - r.earliest_pickup
                detour = (rec.dropoff_time - rec.pickup_time) - r.direct_time
                w.writerow([rid, r.kind.value, 1, repr(rec.pickup_time), repr(rec.dropoff_time),
                            repr(waiting), repr(detour), repr(r.direct_time), repr(r.direct_distance)])
            else:
                w.writerow([rid, r.kind.value, 1 if rec.accepted else 0, "", "", "", "",
                            repr(r.direct_time), repr(r.direct_distance)])
    with open(out / "vehicles.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["time_s", "vehicle", "node", "onboard", "status", "odometer_m"])
        for row in output.trajectory:
            w.writerow([repr(row[0]), row[1], row[2], row[3], row[4], repr(row[5])])
    with open(out / "events.jsonl", "w", encoding="utf-8") as fh:
        for ev in output.events:
            fh.write(json.dumps(ev, sort_keys=True) + "\n")
    with open(out / "offline_plan.json", "w", encoding="utf-8") as fh:
        fh.write(json.dumps(offline_plan_to_dict(output.offline_plan), indent=2, sort_keys=True))
        fh.write("\n")
    with open(out / "config.resolved", "w", encoding="utf-8") as fh:
        for key in sorted(output.config):
            fh.write(f"{key}={output.config[key]}\n")
