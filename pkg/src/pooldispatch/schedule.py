"""Stop sequences, timing simulation, feasibility checks, cost and insertion.

A vehicle plan is an ordered list of stops. Timing is earliest-feasible: the
vehicle departs toward the next stop as soon as possible and waits at a
pick-up location when it arrives before the earliest pick-up time. Costs are
kept in integer milli-cents (1 EUR = 100000 milli-cents) so that optimality
comparisons in the solvers are exact.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

from .demand import Request
from .network import Network, Position

# slack for float comparisons of times (seconds)
TIME_EPS = 1e-9

MILLICENTS_PER_EUR = 100000


@dataclass(frozen=True, slots=True)
class ServiceParams:
    """Operating parameters of the pooling service.

    :param max_wait: maximum customer waiting time after the earliest pick-up
        time, seconds (closed interval: pick-up exactly at the bound is fine)
    :param max_detour_factor: allowed relative in-vehicle extra time
    :param dist_cost_per_km: EUR per driven km
    :param time_cost_per_h: EUR per customer trip hour (waiting plus ride)
    :param assignment_reward: EUR credited per served customer
    :param capacity: seats per vehicle
    :param boarding_duration: seconds a stop adds before departure
    """
    max_wait: float = 360.0
    max_detour_factor: float = 0.4
    dist_cost_per_km: float = 0.25
    time_cost_per_h: float = 16.2
    assignment_reward: float = 10000.0
    capacity: int = 4
    boarding_duration: float = 0.0

    def __post_init__(self):
        if min(self.max_wait, self.max_detour_factor, self.dist_cost_per_km,
               self.time_cost_per_h, self.assignment_reward, self.boarding_duration) < 0:
            raise ValueError("service parameters must be non-negative")
        if self.capacity < 1:
            raise ValueError("capacity must be at least 1")

    @property
    def dist_rate_mc_per_m(self) -> float:
        """Milli-cents per meter, derived exactly from the decimal EUR/km rate."""
        return float(Fraction(str(self.dist_cost_per_km)) * MILLICENTS_PER_EUR / 1000)

    @property
    def time_rate_mc_per_s(self) -> float:
        return float(Fraction(str(self.time_cost_per_h)) * MILLICENTS_PER_EUR / 3600)

    @property
    def reward_mc(self) -> float:
        return float(Fraction(str(self.assignment_reward)) * MILLICENTS_PER_EUR)


def mc_to_eur(mc: float) -> float:
    return mc / MILLICENTS_PER_EUR


@dataclass(frozen=True, slots=True)
class StopSpec:
    """A stop before timing: where, who boards, who alights.

    ``min_service_time`` carries the planned service time of offline
    (pre-booked) stops: the vehicle never serves such a stop earlier, which
    keeps replanning from shifting promised pre-booked times.
    """
    location: str
    boarding: Tuple[int, ...] = ()
    alighting: Tuple[int, ...] = ()
    min_service_time: float = 0.0


@dataclass(frozen=True, slots=True)
class Stop:
    location: str
    boarding: Tuple[int, ...]
    alighting: Tuple[int, ...]
    planned_arrival: float
    planned_service: float   # boarding moment: max(arrival, earliest pick-ups, clamp)
    planned_departure: float
    min_service_time: float = 0.0

    def spec(self) -> StopSpec:
        return StopSpec(self.location, self.boarding, self.alighting, self.min_service_time)


@dataclass(frozen=True, slots=True)
class Anchor:
    """Locked suffix anchor: the first offline stop beyond the revelation
    horizon. No stop may come after it and it must stay reachable no later
    than its planned arrival time."""
    location: str
    arrival_deadline: float


@dataclass(frozen=True, slots=True)
class VehiclePlan:
    vehicle_id: Optional[int]
    stops: Tuple[Stop, ...]
    anchor: Optional[Anchor] = None

    def request_ids(self) -> Tuple[int, ...]:
        ids = set()
        for s in self.stops:
            ids.update(s.boarding)
            ids.update(s.alighting)
        return tuple(sorted(ids))

    def specs(self) -> Tuple[StopSpec, ...]:
        return tuple(s.spec() for s in self.stops)


@dataclass(frozen=True, slots=True)
class Violation:
    """First violated feasibility constraint of a candidate stop sequence."""
    kind: str            # earliest_pickup | latest_pickup | detour | capacity | structure | anchor
    request_id: Optional[int] = None
    detail: str = ""


@dataclass(frozen=True, slots=True)
class TimingResult:
    plan: Optional[VehiclePlan]
    violation: Optional[Violation]

    @property
    def ok(self) -> bool:
        return self.plan is not None


def merge_adjacent_stops(specs: Sequence[StopSpec]) -> Tuple[StopSpec, ...]:
    """Canonical form: consecutive stops at the same location become one stop."""
    merged: List[StopSpec] = []
    for s in specs:
        if merged and merged[-1].location == s.location:
            prev = merged[-1]
            merged[-1] = StopSpec(
                location=s.location,
                boarding=tuple(sorted(prev.boarding + s.boarding)),
                alighting=tuple(sorted(prev.alighting + s.alighting)),
                min_service_time=max(prev.min_service_time, s.min_service_time),
            )
        else:
            merged.append(StopSpec(s.location, tuple(sorted(s.boarding)),
                                   tuple(sorted(s.alighting)), s.min_service_time))
    return tuple(merged)


def simulate_timing(specs: Sequence[StopSpec],
                    start_pos: Position,
                    start_time: float,
                    requests: Dict[int, Request],
                    params: ServiceParams,
                    net: Network,
                    anchor: Optional[Anchor] = None,
                    onboard_pickup_times: Optional[Dict[int, float]] = None,
                    vehicle_id: Optional[int] = None,
                    latent_detour: bool = False) -> TimingResult:
    """Compute earliest-feasible stop times, or report the first violated constraint.

    :param specs: untimed stop sequence (board-before-alight order expected)
    :param start_pos: vehicle position (node, or committed edge progress)
    :param start_time: earliest departure time of the vehicle
    :param onboard_pickup_times: actual pick-up times of customers already on
        board; their detour constraint is checked against these times
    :param latent_detour: accept sequences whose in-vehicle span only fits if
        later insertions delay the pick-up within its window (drop-off no
        later than earliest pick-up + max wait + allowed ride time). Unlike
        the strict rule, this acceptance is preserved when requests are
        removed from a sequence, which makes incremental bundle growth
        complete; callers filter strictly before exposing results.
    :return: TimingResult with either a timed plan or a violation
    """
    onboard_pickup_times = onboard_pickup_times or {}
    onboard = set(onboard_pickup_times)
    picked: Dict[int, float] = dict(onboard_pickup_times)
    open_onboard = set(onboard)
    occupancy = len(open_onboard)
    if occupancy > params.capacity:
        return TimingResult(None, Violation("capacity", None, "onboard exceeds capacity"))

    stops: List[Stop] = []
    now = float(start_time)
    pos = start_pos
    for spec in specs:
        # structural checks
        for rid in spec.boarding:
            if rid in picked:
                return TimingResult(None, Violation("structure", rid, "boards twice or already onboard"))
            if rid not in requests:
                return TimingResult(None, Violation("structure", rid, "unknown request"))
        arrival = now + net.travel_time_from(pos, spec.location)
        pos = spec.location
        # alight first, at arrival
        for rid in spec.alighting:
            if rid not in picked:
                return TimingResult(None, Violation("structure", rid, "alights before boarding"))
            if rid not in open_onboard:
                return TimingResult(None, Violation("structure", rid, "alights twice"))
            if rid not in requests:
                return TimingResult(None, Violation("structure", rid, "unknown request"))
            open_onboard.discard(rid)
            occupancy -= 1
            allowed = requests[rid].direct_time * (1.0 + params.max_detour_factor)
            if latent_detour and rid not in onboard:
                # latest conceivable pick-up is t_e + max_wait
                if arrival - (requests[rid].earliest_pickup + params.max_wait) > allowed + TIME_EPS:
                    return TimingResult(None, Violation(
                        "detour", rid,
                        f"drop-off {arrival:.3f}s beyond any pick-up window"))
            elif arrival - picked[rid] > allowed + TIME_EPS:
                return TimingResult(None, Violation(
                    "detour", rid,
                    f"in-vehicle {arrival - picked[rid]:.3f}s > {allowed:.3f}s"))
        # board at the service moment
        service = arrival
        if spec.min_service_time > service:
            service = spec.min_service_time
        for rid in spec.boarding:
            t_e = requests[rid].earliest_pickup
            if t_e > service:
                service = t_e
        for rid in spec.boarding:
            req = requests[rid]
            if service - req.earliest_pickup > params.max_wait + TIME_EPS:
                return TimingResult(None, Violation(
                    "latest_pickup", rid,
                    f"pick-up {service:.3f}s > {req.earliest_pickup + params.max_wait:.3f}s"))
            picked[rid] = service
            open_onboard.add(rid)
            occupancy += 1
        if occupancy > params.capacity:
            over = sorted(spec.boarding)[0] if spec.boarding else None
            return TimingResult(None, Violation("capacity", over, f"occupancy {occupancy} > {params.capacity}"))
        departure = service + params.boarding_duration
        stops.append(Stop(spec.location, tuple(sorted(spec.boarding)), tuple(sorted(spec.alighting)),
                          arrival, service, departure, spec.min_service_time))
        now = departure
    if open_onboard:
        rid = sorted(open_onboard)[0]
        return TimingResult(None, Violation("structure", rid, "boarded but never alights"))
    if anchor is not None:
        anchor_arrival = now + net.travel_time_from(pos, anchor.location)
        if anchor_arrival > anchor.arrival_deadline + TIME_EPS:
            return TimingResult(None, Violation(
                "anchor", None,
                f"anchor at {anchor.location!r} reached {anchor_arrival:.3f}s > {anchor.arrival_deadline:.3f}s"))
    return TimingResult(VehiclePlan(vehicle_id, tuple(stops), anchor), None)


def strict_detour_ok(plan: VehiclePlan, requests: Dict[int, Request], params: ServiceParams,
                     onboard_pickup_times: Optional[Dict[int, float]] = None) -> bool:
    """Check the actual in-vehicle spans of a timed plan (strict constraint 3)."""
    picked: Dict[int, float] = dict(onboard_pickup_times or {})
    for s in plan.stops:
        for rid in s.alighting:
            allowed = requests[rid].direct_time * (1.0 + params.max_detour_factor)
            if s.planned_arrival - picked[rid] > allowed + TIME_EPS:
                return False
        for rid in s.boarding:
            picked[rid] = s.planned_service
    return True


def plan_distance(plan: VehiclePlan, start_pos: Position, net: Network) -> float:
    """Driven meters: start leg, inter-stop legs, and the leg to the anchor."""
    total = 0.0
    pos = start_pos
    for s in plan.stops:
        total += net.travel_distance_from(pos, s.location)
        pos = s.location
    if plan.anchor is not None:
        total += net.travel_distance_from(pos, plan.anchor.location)
    return total


def plan_cost_mc(plan: VehiclePlan, start_pos: Position, requests: Dict[int, Request],
                 params: ServiceParams, net: Network,
                 counted: Optional[Iterable[int]] = None) -> float:
    """Schedule cost in milli-cents.

    cost = dist_rate * driven_m + time_rate * sum_i(dropoff_i - earliest_i)
           - reward * |served|

    ``counted`` restricts the customer terms to the given ids (used online,
    where revealed-but-inactive pre-booked stops only contribute distance).
    """
    dist = plan_distance(plan, start_pos, net)
    counted_set = None if counted is None else set(counted)
    dur = 0.0
    n = 0
    for s in plan.stops:
        for rid in s.alighting:
            if counted_set is not None and rid not in counted_set:
                continue
            dur += s.planned_arrival - requests[rid].earliest_pickup
            n += 1
    return params.dist_rate_mc_per_m * dist + params.time_rate_mc_per_s * dur - params.reward_mc * n


def plan_cost_eur(plan: VehiclePlan, start_pos: Position, requests: Dict[int, Request],
                  params: ServiceParams, net: Network) -> float:
    """Eq-style schedule cost in EUR (empty plan costs 0)."""
    return mc_to_eur(plan_cost_mc(plan, start_pos, requests, params, net))


def candidate_insertions(specs: Sequence[StopSpec], request: Request) -> Iterable[Tuple[StopSpec, ...]]:
    """All stop sequences that add the request's pick-up and drop-off.

    Pick-up index i and drop-off index j >= i enumerate slot positions in the
    existing sequence. Stops stay at event granularity (one boarding or
    alighting per stop); co-located consecutive stops cost no travel, so this
    loses no pooling options and keeps insertion growth complete: removing
    the two events from any feasible sequence yields its parent sequence.
    """
    base = list(specs)
    n = len(base)
    pick = StopSpec(request.origin, (request.id,), ())
    drop = StopSpec(request.destination, (), (request.id,))
    for i in range(n + 1):
        for j in range(i, n + 1):
            yield tuple(base[:i] + [pick] + base[i:j] + [drop] + base[j:])


def insert_request(plan: VehiclePlan,
                   request: Request,
                   start_pos: Position,
                   start_time: float,
                   requests: Dict[int, Request],
                   params: ServiceParams,
                   net: Network,
                   onboard_pickup_times: Optional[Dict[int, float]] = None) -> Optional[Tuple[VehiclePlan, float]]:
    """Best feasible insertion of one request into a plan.

    Tries every pick-up/drop-off placement, keeps all constraints for all
    requests (including the locked suffix anchor) and returns the plan with
    the smallest cost difference, or None when no placement is feasible.
    Ties are broken by earliest pick-up index, then earliest drop-off index;
    enumeration order realizes that rule.

    :return: (new plan, cost delta in milli-cents) or None
    """
    if request.id in plan.request_ids() or (onboard_pickup_times and request.id in onboard_pickup_times):
        raise ValueError(f"request {request.id} already in plan")
    all_requests = requests if request.id in requests else {**requests, request.id: request}
    base_cost = plan_cost_mc(plan, start_pos, all_requests, params, net)
    best: Optional[Tuple[float, VehiclePlan]] = None
    for cand in candidate_insertions(plan.specs(), request):
        res = simulate_timing(cand, start_pos, start_time, all_requests, params, net,
                              anchor=plan.anchor, onboard_pickup_times=onboard_pickup_times,
                              vehicle_id=plan.vehicle_id)
        if not res.ok:
            continue
        cost = plan_cost_mc(res.plan, start_pos, all_requests, params, net)
        if best is None or cost < best[0]:
            best = (cost, res.plan)
    if best is None:
        return None
    return best[1], best[0] - base_cost


def empty_plan(vehicle_id: Optional[int] = None, anchor: Optional[Anchor] = None) -> VehiclePlan:
    return VehiclePlan(vehicle_id, (), anchor)
