"""Rolling-horizon online assignment of on-demand and revealed pre-booked
requests.

The coordinator owns the offline plan remainder and the activation state.
Each step it first reveals: pre-booked requests whose earliest pick-up time
enters the short-term horizon become active (reassignable) online requests,
and the offline stops up to their drop-offs move verbatim into the owning
vehicle's plan, so the current plan always stays feasible. Stops planned
within the revelation horizon are exposed the same way; the first offline
stop beyond it becomes the locked suffix anchor.

Assignment then builds vehicle bundles over all active requests, always
injects each vehicle's incumbent plan (which guarantees the must-serve
coverage rows stay feasible), and solves the assignment ILP: at most one
bundle per vehicle, every assigned request covered exactly once (moves to
another vehicle are allowed), every new request at most once. Uncovered new
requests are rejected for good.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, FrozenSet, List, Optional, Sequence, Set, Tuple

from .bundles import (VehicleBundle, VehicleContext, build_vehicle_bundles,
                      merge_schedule_into, pair_feasibility, root_schedules)
from .demand import Kind, Request
from .ilp import BinaryProgram, Constraint, solve
from .network import Network
from .offline import OfflinePlan
from .schedule import (Anchor, ServiceParams, Stop, StopSpec, VehiclePlan,
                       simulate_timing)


@dataclass(slots=True)
class AssignmentRound:
    time: float
    accepted: List[int]
    rejected: List[int]
    reassigned: Dict[int, Tuple[int, int]]
    objective_mc: float
    active_count: int


class OnlineInvariantError(AssertionError):
    """A previously accepted request lost all feasible schedules."""


class OnlineCoordinator:
    """Per-step reveal and assignment over the engine's vehicle runtimes.

    Vehicle runtime objects must expose: vehicle_id, plan (VehiclePlan),
    position, onboard_pickup_times (dict), available_time(t) -> float.
    """

    def __init__(self, requests: Dict[int, Request], offline: OfflinePlan,
                 params: ServiceParams, net: Network,
                 short_horizon: float, revelation_horizon: float):
        if revelation_horizon < short_horizon:
            raise ValueError("revelation horizon must be >= short-term horizon")
        self.requests = requests
        self.params = params
        self.net = net
        self.short_horizon = short_horizon
        self.revelation_horizon = revelation_horizon
        # remainder: per vehicle the not-yet-revealed offline stops, in order
        self.remainder: Dict[int, List[Stop]] = {
            vid: list(plan.stops) for vid, plan in offline.vehicle_plans.items()}
        self.offline_owner: Dict[int, int] = {}
        for vid, plan in offline.vehicle_plans.items():
            for rid in plan.request_ids():
                self.offline_owner[rid] = vid
        self.pending_prebooked: List[int] = sorted(
            self.offline_owner, key=lambda rid: (requests[rid].earliest_pickup, rid))
        self.active_owner: Dict[int, int] = {}   # assigned requests -> owning vehicle
        self.completed: Set[int] = set()
        self.rejected_new: Set[int] = set()

    # -- reveal -------------------------------------------------------------

    def reveal(self, now: float, vehicles: Dict[int, object]) -> List[int]:
        """Activate pre-booked requests entering the short-term horizon and
        expose offline stops inside the revelation horizon. Returns the newly
        activated request ids."""
        activated: List[int] = []
        while self.pending_prebooked and \
                self.requests[self.pending_prebooked[0]].earliest_pickup <= now + self.short_horizon:
            rid = self.pending_prebooked.pop(0)
            self.active_owner[rid] = self.offline_owner[rid]
            activated.append(rid)
        for vid in sorted(self.remainder):
            queue = self.remainder[vid]
            if not queue:
                self._set_anchor(vehicles[vid], None)
                continue
            active_ids = set(self.active_owner)
            cut = 0
            for i, stop in enumerate(queue):
                touched = set(stop.boarding) | set(stop.alighting)
                # gate on the promised service moment; the earliest-feasible
                # arrival of a clamped stop can lie hours earlier
                if stop.planned_service <= now + self.revelation_horizon + 1e-9 or \
                        touched & active_ids:
                    cut = i + 1
            # never split a request: a revealed boarding drags its alighting in
            changed = True
            while changed and cut:
                changed = False
                open_ids = set()
                for stop in queue[:cut]:
                    open_ids.update(stop.boarding)
                    open_ids.difference_update(stop.alighting)
                if open_ids:
                    for i in range(cut, len(queue)):
                        open_ids.difference_update(queue[i].alighting)
                        if not open_ids:
                            cut = i + 1
                            changed = True
                            break
            if cut:
                exposed = queue[:cut]
                del queue[:cut]
                vehicle = vehicles[vid]
                specs = list(s.spec() for s in vehicle.plan.stops)
                specs.extend(s.spec() for s in exposed)
                res = simulate_timing(specs, vehicle.position, vehicle.available_time(now),
                                      self.requests, self.params, self.net,
                                      anchor=self._anchor_for(vid),
                                      onboard_pickup_times=vehicle.onboard_pickup_times,
                                      vehicle_id=vid)
                if not res.ok:
                    raise OnlineInvariantError(
                        f"vehicle {vid} cannot absorb revealed offline stops: {res.violation}")
                vehicle.set_plan(res.plan)
            else:
                self._set_anchor(vehicles[vid], self._anchor_for(vid))
        return activated

    def _anchor_for(self, vid: int) -> Optional[Anchor]:
        queue = self.remainder.get(vid)
        if queue:
            # the binding moment of a clamped boarding stop is its service
            # time; reaching it then replays the rest of the offline plan
            return Anchor(queue[0].location, queue[0].planned_service)
        return None

    def _set_anchor(self, vehicle, anchor: Optional[Anchor]) -> None:
        if vehicle.plan.anchor != anchor:
            vehicle.set_plan(VehiclePlan(vehicle.plan.vehicle_id, vehicle.plan.stops, anchor))

    # -- assignment ---------------------------------------------------------

    def assign(self, now: float, vehicles: Dict[int, object],
               new_requests: Sequence[Request]) -> AssignmentRound:
        """One global assignment round (batch reply to new requests)."""
        candidates: List[Request] = []
        onboard_ids: Set[int] = set()
        for vid in sorted(vehicles):
            onboard_ids.update(vehicles[vid].onboard_pickup_times)
        waiting_assigned = [rid for rid in sorted(self.active_owner)
                            if rid not in onboard_ids and rid not in self.completed]
        candidates.extend(self.requests[rid] for rid in waiting_assigned)
        candidates.extend(new_requests)
        if not candidates and not onboard_ids:
            return AssignmentRound(now, [], [], {}, 0.0, 0)

        contexts: Dict[int, VehicleContext] = {}
        bundles: Dict[int, Dict[FrozenSet[int], VehicleBundle]] = {}
        pair_ok = pair_feasibility(candidates, self.requests, self.params, self.net)
        for vid in sorted(vehicles):
            vehicle = vehicles[vid]
            ctx = VehicleContext(
                vehicle_id=vid,
                position=vehicle.position,
                available_time=vehicle.available_time(now),
                onboard_pickup_times=dict(vehicle.onboard_pickup_times),
                skeleton=self._skeleton_of(vehicle.plan),
                anchor=vehicle.plan.anchor,
            )
            contexts[vid] = ctx
            vehicle_bundles = build_vehicle_bundles(ctx, candidates, pair_ok,
                                                    self.requests, self.params, self.net)
            self._inject_incumbent(ctx, vehicle, vehicle_bundles)
            bundles[vid] = vehicle_bundles

        selection = self._solve_assignment(now, vehicles, bundles,
                                           waiting_assigned, [r.id for r in new_requests],
                                           onboard_ids)
        return self._commit(now, vehicles, contexts, bundles, selection,
                            waiting_assigned, new_requests)

    def _skeleton_of(self, plan: VehiclePlan) -> Tuple[StopSpec, ...]:
        """Stops of revealed but not yet activated (inactive) requests; their
        relative order is locked for online edits."""
        out = []
        for s in plan.stops:
            ids = set(s.boarding) | set(s.alighting)
            if ids and not ids & set(self.active_owner) and not ids & self.completed:
                out.append(s.spec())
            elif ids & self.completed and not ids & set(self.active_owner):
                continue
        return tuple(out)

    def _inject_incumbent(self, ctx: VehicleContext, vehicle,
                          bundles: Dict[FrozenSet[int], VehicleBundle]) -> None:
        served = frozenset(
            rid for rid in vehicle.plan.request_ids()
            if rid in self.active_owner and rid not in self.completed
        ) | frozenset(ctx.onboard_pickup_times)
        if not served:
            return
        specs = []
        for s in vehicle.plan.stops:
            ids = set(s.boarding) | set(s.alighting)
            live = {rid for rid in ids if rid not in self.completed}
            if not live:
                continue
            if all(rid in ctx.onboard_pickup_times and rid in s.boarding for rid in live):
                continue  # boarding already happened
            specs.append(s.spec())
        res = simulate_timing(specs, ctx.position, ctx.available_time, self.requests,
                              self.params, self.net, anchor=ctx.anchor,
                              onboard_pickup_times=ctx.onboard_pickup_times,
                              vehicle_id=ctx.vehicle_id)
        if not res.ok:
            raise OnlineInvariantError(
                f"incumbent plan of vehicle {ctx.vehicle_id} became infeasible: {res.violation}")
        merge_schedule_into(bundles, ctx, res.plan, served, self.requests, self.params, self.net)

    def _solve_assignment(self, now, vehicles, bundles, waiting_assigned, new_ids, onboard_ids):
        variables: List[Tuple[int, FrozenSet[int]]] = []
        for vid in sorted(bundles):
            for served in sorted(bundles[vid], key=lambda s: tuple(sorted(s))):
                variables.append((vid, served))
        index = {key: j for j, key in enumerate(variables)}
        objective = [round(bundles[vid][served].cost_mc) for vid, served in variables]
        constraints: List[Constraint] = []
        for vid in sorted(bundles):
            coeffs = {index[(vid, served)]: 1.0 for served in bundles[vid]}
            if coeffs:
                constraints.append(Constraint(coeffs, "<=", 1.0))
        groups: List[List[int]] = []
        must_serve = sorted(set(waiting_assigned) | onboard_ids)
        for rid in must_serve:
            coeffs = {j: 1.0 for j, (vid, served) in enumerate(variables) if rid in served}
            if not coeffs:
                raise OnlineInvariantError(
                    f"assigned request {rid} has no feasible schedule on any vehicle at t={now}")
            constraints.append(Constraint(coeffs, "==", 1.0))
            groups.append(sorted(coeffs))
        for rid in sorted(new_ids):
            coeffs = {j: 1.0 for j, (vid, served) in enumerate(variables) if rid in served}
            if coeffs:
                constraints.append(Constraint(coeffs, "<=", 1.0))
                groups.append(sorted(coeffs))
        program = BinaryProgram(len(variables), [float(c) for c in objective], constraints,
                                branch_groups=groups)
        solution = solve(program)
        if not solution.ok:
            raise OnlineInvariantError(
                f"assignment ILP infeasible at t={now}: an accepted request lost all schedules")
        chosen = {}
        for j, (vid, served) in enumerate(variables):
            if solution.values[j] == 1:
                chosen[vid] = served
        return chosen, solution.objective

    def _commit(self, now, vehicles, contexts, bundles, selection,
                waiting_assigned, new_requests):
        chosen, objective_mc = selection
        old_owner = dict(self.active_owner)
        accepted: List[int] = []
        rejected: List[int] = []
        reassigned: Dict[int, Tuple[int, int]] = {}
        covered: Dict[int, int] = {}
        for vid in sorted(vehicles):
            vehicle = vehicles[vid]
            if vid in chosen:
                bundle = bundles[vid][chosen[vid]]
                vehicle.set_plan(bundle.best_schedule)
                for rid in chosen[vid]:
                    covered[rid] = vid
            else:
                if vehicle.onboard_pickup_times:
                    raise OnlineInvariantError(
                        f"vehicle {vid} carries customers but received no schedule at t={now}")
                ctx = contexts[vid]
                roots = root_schedules(ctx, self.requests, self.params, self.net)
                if not roots:
                    raise OnlineInvariantError(
                        f"vehicle {vid} lost its locked stops at t={now}")
                vehicle.set_plan(roots[0])
        for rid, vid in sorted(covered.items()):
            before = old_owner.get(rid)
            self.active_owner[rid] = vid
            if before is not None and before != vid:
                reassigned[rid] = (before, vid)
        for req in sorted(new_requests, key=lambda r: r.id):
            if req.id in covered:
                accepted.append(req.id)
            else:
                rejected.append(req.id)
                self.rejected_new.add(req.id)
        return AssignmentRound(now, accepted, rejected, reassigned, float(objective_mc),
                               len(covered))

    # -- lifecycle ----------------------------------------------------------

    def mark_completed(self, rid: int) -> None:
        self.completed.add(rid)
        self.active_owner.pop(rid, None)

    def all_prebooked_resolved(self) -> bool:
        return not self.pending_prebooked and not self.active_owner and \
            not any(self.remainder.values())
