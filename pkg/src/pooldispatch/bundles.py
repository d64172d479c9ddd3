"""Incremental construction of feasible request bundles and their
vehicle-anchored counterparts.

A request bundle collects all feasible stop permutations serving one request
set, timed for a hypothetical vehicle that is immediately available at the
first boarding stop. Construction grows bundles grade by grade: a request is
inserted into every stored permutation of the parent bundle, and a grade-N
set is only attempted when all its grade-(N-1) subsets proved feasible.

Removing a request from a sequence shifts pick-ups earlier, which can blow
the strict in-vehicle bound of another rider whose drop-off is held back by
a waiting stop; subset feasibility is therefore not monotone under the
strict detour rule. To keep the incremental growth exhaustive, sequences are
grown and pruned under the latent detour acceptance (provably monotone, see
simulate_timing) and filtered strictly only when bundles are emitted.

Vehicle bundles anchor the same search at a concrete vehicle: its position,
availability, customers on board (mandatory in every schedule), revealed
offline stops whose order is locked, and the locked suffix anchor.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from itertools import combinations
from typing import Dict, FrozenSet, Iterable, List, Optional, Sequence, Tuple

from .demand import Request
from .network import Network, Position
from .schedule import (Anchor, ServiceParams, StopSpec, VehiclePlan,
                       candidate_insertions, plan_cost_mc, simulate_timing,
                       strict_detour_ok)


@dataclass(frozen=True, slots=True)
class RequestBundle:
    requests: FrozenSet[int]
    schedules: Tuple[VehiclePlan, ...]   # every feasible permutation, timed
    cost_mc: float                       # minimum schedule cost
    best_schedule: VehiclePlan

    @property
    def grade(self) -> int:
        return len(self.requests)


@dataclass(frozen=True, slots=True)
class VehicleBundle:
    vehicle_id: int
    requests: FrozenSet[int]             # active requests incl. onboard
    schedules: Tuple[VehiclePlan, ...]
    cost_mc: float
    best_schedule: VehiclePlan


@dataclass(frozen=True, slots=True)
class VehicleContext:
    """Planning-relevant vehicle state for anchored schedule search."""
    vehicle_id: int
    position: Position
    available_time: float
    onboard_pickup_times: Dict[int, float] = field(default_factory=dict)
    skeleton: Tuple[StopSpec, ...] = ()   # revealed offline stops, order locked
    anchor: Optional[Anchor] = None


def _hypothetical_start(specs: Sequence[StopSpec], requests: Dict[int, Request]) -> Tuple[str, float]:
    first = specs[0]
    start_time = min(requests[r].earliest_pickup for r in first.boarding)
    return first.location, start_time


def _schedule_key(plan: VehiclePlan):
    return tuple((s.location, s.boarding, s.alighting) for s in plan.stops)


def _bundle_from_plans(requests_set: FrozenSet[int], plans: List[VehiclePlan],
                       requests: Dict[int, Request], params: ServiceParams,
                       net: Network) -> RequestBundle:
    costed = []
    for p in plans:
        start = p.stops[0].location
        costed.append((plan_cost_mc(p, start, requests, params, net), _schedule_key(p), p))
    costed.sort(key=lambda t: (t[0], t[1]))
    return RequestBundle(requests_set, tuple(p for _, _, p in costed), costed[0][0], costed[0][2])


def build_request_bundles(batch_requests: Sequence[Request],
                          requests: Dict[int, Request],
                          params: ServiceParams,
                          net: Network,
                          grade_cap: Optional[int] = None) -> Dict[FrozenSet[int], RequestBundle]:
    """All feasible request bundles over a batch, up to grade_cap.

    :param batch_requests: the batch (any order; processed by (t_e, id))
    :param requests: lookup for every referenced request
    :return: bundle per feasible request set, keyed by the id set
    """
    order = sorted(batch_requests, key=lambda r: (r.earliest_pickup, r.id))
    latent: Dict[FrozenSet[int], List[VehiclePlan]] = {}
    for req in order:
        # grade 1
        specs = (StopSpec(req.origin, (req.id,), ()), StopSpec(req.destination, (), (req.id,)))
        loc, t0 = _hypothetical_start(specs, requests)
        res = simulate_timing(specs, loc, t0, requests, params, net, latent_detour=True)
        if res.ok:
            latent[frozenset((req.id,))] = [res.plan]
        # grow existing bundles (built from earlier requests only) by req
        parents = sorted((s for s in latent if req.id not in s),
                         key=lambda s: (len(s), sorted(s)))
        for parent_set in parents:
            target = parent_set | {req.id}
            if grade_cap is not None and len(target) > grade_cap:
                continue
            # necessary condition: every grade-(N-1) subset must exist
            if len(target) >= 3 and any(
                    target - {x} not in latent for x in parent_set):
                continue
            found: List[VehiclePlan] = []
            for parent_plan in latent[parent_set]:
                for cand in candidate_insertions(parent_plan.specs(), req):
                    loc, t0 = _hypothetical_start(cand, requests)
                    res = simulate_timing(cand, loc, t0, requests, params, net,
                                          latent_detour=True)
                    if res.ok:
                        found.append(res.plan)
            if found:
                latent[target] = found
    out: Dict[FrozenSet[int], RequestBundle] = {}
    for s, plans in latent.items():
        strict = [p for p in plans if strict_detour_ok(p, requests, params)]
        if strict:
            out[s] = _bundle_from_plans(s, strict, requests, params, net)
    return out


def pair_feasibility(candidates: Sequence[Request],
                     requests: Dict[int, Request],
                     params: ServiceParams,
                     net: Network) -> Dict[FrozenSet[int], bool]:
    """Latent grade-2 bundle existence for every candidate pair.

    Condition-2 pruning must use the latent acceptance: a vehicle-anchored
    pair can be strictly feasible (late arrival shortens the ride) while the
    hypothetical-vehicle pair bundle is only latently so.
    """
    result: Dict[FrozenSet[int], bool] = {}
    for a, b in combinations(sorted(candidates, key=lambda r: r.id), 2):
        # inserting b into the bare (a) ride enumerates all six event orders
        base = (StopSpec(a.origin, (a.id,), ()), StopSpec(a.destination, (), (a.id,)))
        found = False
        for cand in candidate_insertions(base, b):
            loc, t0 = _hypothetical_start(cand, requests)
            if simulate_timing(cand, loc, t0, requests, params, net, latent_detour=True).ok:
                found = True
                break
        result[frozenset((a.id, b.id))] = found
    return result


def _interleave_dropoffs(skeleton: Sequence[StopSpec], onboard_ids: Sequence[int],
                         requests: Dict[int, Request]) -> Iterable[Tuple[StopSpec, ...]]:
    """All stop sequences placing each onboard drop-off, skeleton order kept."""
    seqs = [tuple(skeleton)]
    for rid in sorted(onboard_ids):
        drop = StopSpec(requests[rid].destination, (), (rid,))
        grown = []
        seen = set()
        for seq in seqs:
            for i in range(len(seq) + 1):
                cand = seq[:i] + (drop,) + seq[i:]
                if cand not in seen:
                    seen.add(cand)
                    grown.append(cand)
        seqs = grown
    return seqs


def root_schedules(ctx: VehicleContext, requests: Dict[int, Request],
                   params: ServiceParams, net: Network) -> List[VehiclePlan]:
    """Feasible schedules serving exactly the mandatory content of a vehicle:
    onboard drop-offs in any order around the locked skeleton."""
    plans = []
    for seq in _interleave_dropoffs(ctx.skeleton, list(ctx.onboard_pickup_times), requests):
        res = simulate_timing(seq, ctx.position, ctx.available_time, requests, params, net,
                              anchor=ctx.anchor, onboard_pickup_times=ctx.onboard_pickup_times,
                              vehicle_id=ctx.vehicle_id)
        if res.ok:
            plans.append(res.plan)
    return plans


def build_vehicle_bundles(ctx: VehicleContext,
                          candidates: Sequence[Request],
                          pair_feasible: Dict[FrozenSet[int], bool],
                          requests: Dict[int, Request],
                          params: ServiceParams,
                          net: Network) -> Dict[FrozenSet[int], VehicleBundle]:
    """All feasible vehicle-anchored bundles over the candidate requests.

    Keys are the active request sets (onboard included). The onboard-only
    bundle is included whenever customers are on board, because serving them
    is mandatory.
    """
    onboard = frozenset(ctx.onboard_pickup_times)
    roots = root_schedules(ctx, requests, params, net)
    if not roots:
        return {}
    # condition 1: reachable before the latest pick-up time
    reachable = []
    for req in sorted(candidates, key=lambda r: (r.earliest_pickup, r.id)):
        earliest_arrival = ctx.available_time + net.travel_time_from(ctx.position, req.origin)
        if earliest_arrival <= req.earliest_pickup + params.max_wait + 1e-9:
            reachable.append(req)

    latent: Dict[FrozenSet[int], List[VehiclePlan]] = {frozenset(): roots}
    for req in reachable:
        parents = sorted((s for s in latent if req.id not in s),
                         key=lambda s: (len(s), sorted(s)))
        for parent_set in parents:
            # condition 2: the request pair bundle must exist
            if any(not pair_feasible.get(frozenset((req.id, other)), False)
                   for other in parent_set):
                continue
            target = parent_set | {req.id}
            # condition 3: every lower-grade vehicle bundle must exist
            if len(target) >= 2 and any(
                    target - {x} not in latent for x in parent_set):
                continue
            found: List[VehiclePlan] = []
            for parent_plan in latent[parent_set]:
                for cand in candidate_insertions(parent_plan.specs(), req):
                    res = simulate_timing(cand, ctx.position, ctx.available_time, requests,
                                          params, net, anchor=ctx.anchor,
                                          onboard_pickup_times=ctx.onboard_pickup_times,
                                          vehicle_id=ctx.vehicle_id, latent_detour=True)
                    if res.ok:
                        found.append(res.plan)
            if found:
                latent[target] = found

    out: Dict[FrozenSet[int], VehicleBundle] = {}
    for active_set, plans in latent.items():
        served = active_set | onboard
        if not served:
            continue  # an empty bundle serves nobody and never enters the assignment
        strict = [p for p in plans
                  if strict_detour_ok(p, requests, params, ctx.onboard_pickup_times)]
        if strict:
            out[served] = _vehicle_bundle(ctx, served, strict, requests, params, net)
    return out


def _vehicle_bundle(ctx: VehicleContext, served: FrozenSet[int], plans: List[VehiclePlan],
                    requests: Dict[int, Request], params: ServiceParams,
                    net: Network) -> VehicleBundle:
    costed = []
    for p in plans:
        costed.append((plan_cost_mc(p, ctx.position, requests, params, net, counted=served),
                       _schedule_key(p), p))
    costed.sort(key=lambda t: (t[0], t[1]))
    return VehicleBundle(ctx.vehicle_id, served, tuple(p for _, _, p in costed),
                         costed[0][0], costed[0][2])


def merge_schedule_into(bundles: Dict[FrozenSet[int], VehicleBundle],
                        ctx: VehicleContext, plan: VehiclePlan, served: FrozenSet[int],
                        requests: Dict[int, Request], params: ServiceParams,
                        net: Network) -> None:
    """Add one known-feasible schedule (e.g. the incumbent plan) to the map."""
    existing = bundles.get(served)
    plans = list(existing.schedules) if existing else []
    key = _schedule_key(plan)
    if any(_schedule_key(p) == key for p in plans):
        return
    plans.append(plan)
    bundles[served] = _vehicle_bundle(ctx, served, plans, requests, params, net)
