"""Bundle construction against an independent brute-force enumerator.

The oracle enumerates every pickup/drop-off event ordering, merges adjacent
same-location events into stops, and times the result with its own forward
arithmetic. Pruning a prefix is sound because appending events never makes
earlier arrivals later nor service times earlier.
"""
import random
from fractions import Fraction

import pytest

from pooldispatch.bundles import (VehicleContext, build_request_bundles,
                                  build_vehicle_bundles, pair_feasibility,
                                  root_schedules)
from pooldispatch.schedule import (Anchor, ServiceParams, StopSpec, empty_plan,
                                   insert_request, mc_to_eur, plan_cost_mc,
                                   simulate_timing)

from conftest import grid_network, req

TIME_TOL = 1e-9


def _rates(params):
    dist_rate = float(Fraction(str(params.dist_cost_per_km)) * 100)
    time_rate = float(Fraction(str(params.time_cost_per_h)) * Fraction(100000, 3600))
    reward = float(Fraction(str(params.assignment_reward)) * 100000)
    return dist_rate, time_rate, reward


def oracle_bundles(instance, requests, params, net):
    """Feasible request sets over `instance` and their minimum schedule costs.

    Single DFS over partial event sequences; every completed prefix (each
    picked request dropped) is one feasible schedule of its served set.
    """
    dist_rate, time_rate, reward = _rates(params)
    results = {}

    def evaluate(seq):
        """Forward-time the event sequence; None when a constraint breaks."""
        first_rid = seq[0][1]
        pos = requests[first_rid].origin
        t = requests[first_rid].earliest_pickup
        pickup_t, dropoff_t = {}, {}
        onboard = 0
        legs = 0.0
        for kind, rid in seq:
            loc = requests[rid].origin if kind == "p" else requests[rid].destination
            arrival = t + net.travel_time(pos, loc)
            legs += net.travel_distance(pos, loc)
            if kind == "d":
                onboard -= 1
                dropoff_t[rid] = arrival
                limit = requests[rid].direct_time * (1 + params.max_detour_factor)
                if arrival - pickup_t[rid] > limit + TIME_TOL:
                    return None
                t = arrival + params.boarding_duration
            else:
                service = max(arrival, requests[rid].earliest_pickup)
                if service > requests[rid].earliest_pickup + params.max_wait + TIME_TOL:
                    return None
                pickup_t[rid] = service
                onboard += 1
                if onboard > params.capacity:
                    return None
                t = service + params.boarding_duration
            pos = loc
        return pickup_t, dropoff_t, legs

    def explore(seq, picked, dropped):
        timing = evaluate(seq)
        if timing is None:
            return
        pickup_t, dropoff_t, legs = timing
        if picked and len(dropped) == len(picked):
            served = frozenset(picked)
            dur = sum(t - requests[rid].earliest_pickup for rid, t in dropoff_t.items())
            cost = dist_rate * legs + time_rate * dur - reward * len(dropoff_t)
            prev = results.get(served)
            if prev is None or cost < prev:
                results[served] = cost
        for r in instance:
            if r.id not in picked:
                seq.append(("p", r.id))
                explore(seq, picked | {r.id}, dropped)
                seq.pop()
            elif r.id not in dropped:
                seq.append(("d", r.id))
                explore(seq, picked, dropped | {r.id})
                seq.pop()

    for r in instance:
        explore([("p", r.id)], {r.id}, set())
    return results


def random_instance(net, rng, n, horizon=1800.0):
    nodes = net.nodes
    out = []
    for i in range(n):
        o, d = rng.sample(nodes, 2)
        out.append(req(net, i + 1, o, d, round(rng.uniform(0.0, horizon))))
    return out


def test_single_request_bundle_cost(line_net, base_params):
    r = req(line_net, 1, "A", "C", 0.0)
    bundles = build_request_bundles([r], {1: r}, base_params, line_net)
    assert set(bundles) == {frozenset((1,))}
    assert mc_to_eur(bundles[frozenset((1,))].cost_mc) == pytest.approx(-9999.21, abs=1e-12)


def test_identical_route_pair_pools(line_net, base_params):
    r1 = req(line_net, 1, "A", "C", 0.0)
    r2 = req(line_net, 2, "A", "C", 0.0)
    lookup = {1: r1, 2: r2}
    bundles = build_request_bundles([r1, r2], lookup, base_params, line_net)
    pair = bundles.get(frozenset((1, 2)))
    assert pair is not None
    # the shared zero-detour ride (both board at A, both alight at C) is optimal:
    # 1 km driven, both riders 120 s, two rewards
    best = pair.best_schedule
    assert [s.location for s in best.stops] == ["A", "A", "C", "C"]
    assert best.stops[-1].planned_arrival == 120.0
    assert pair.cost_mc == 25.0 * 1000 + 450.0 * 240 - 2 * 1e9


def test_opposed_requests_cannot_pool(line_net):
    params = ServiceParams(max_wait=60.0)
    r1 = req(line_net, 1, "A", "D", 0.0)
    r2 = req(line_net, 2, "D", "A", 0.0)
    lookup = {1: r1, 2: r2}
    bundles = build_request_bundles([r1, r2], lookup, params, line_net)
    assert frozenset((1, 2)) not in bundles
    assert set(bundles) == {frozenset((1,)), frozenset((2,))}


def test_bundles_match_bruteforce_oracle(base_params):
    net = grid_network(4, 4)
    rng = random.Random(2026)
    for trial in range(30):
        n = rng.randint(2, 5)
        instance = random_instance(net, rng, n, horizon=1200.0)
        lookup = {r.id: r for r in instance}
        expected = oracle_bundles(instance, lookup, base_params, net)
        got = build_request_bundles(instance, lookup, base_params, net)
        assert set(got) == set(expected)
        for key, bundle in got.items():
            assert round(bundle.cost_mc) == round(expected[key])


def test_subset_monotonicity(base_params):
    net = grid_network(4, 4)
    rng = random.Random(55)
    for trial in range(10):
        instance = random_instance(net, rng, 5, horizon=900.0)
        lookup = {r.id: r for r in instance}
        got = build_request_bundles(instance, lookup, base_params, net)
        for key in got:
            for rid in key:
                if len(key) > 1:
                    assert key - {rid} in got


def test_grade_cap_limits_output(base_params):
    net = grid_network(3, 3)
    rng = random.Random(8)
    instance = random_instance(net, rng, 5, horizon=300.0)
    lookup = {r.id: r for r in instance}
    capped = build_request_bundles(instance, lookup, base_params, net, grade_cap=2)
    assert all(len(k) <= 2 for k in capped)
    full = build_request_bundles(instance, lookup, base_params, net)
    assert {k for k in full if len(k) <= 2} == set(capped)


def idle_ctx(vid, node):
    return VehicleContext(vehicle_id=vid, position=node, available_time=0.0)


def test_vehicle_bundle_grade1_matches_insertion(line_net, base_params):
    r = req(line_net, 1, "A", "C", 0.0)
    lookup = {1: r}
    ctx = idle_ctx(0, "A")
    pairs = pair_feasibility([r], lookup, base_params, line_net)
    vbs = build_vehicle_bundles(ctx, [r], pairs, lookup, base_params, line_net)
    assert set(vbs) == {frozenset((1,))}
    plan, delta = insert_request(empty_plan(vehicle_id=0), r, "A", 0.0, lookup, base_params, line_net)
    assert vbs[frozenset((1,))].cost_mc == plan_cost_mc(plan, "A", lookup, base_params, line_net)
    assert vbs[frozenset((1,))].best_schedule.specs() == plan.specs()


def test_vehicle_bundle_condition1_prunes(line_net):
    params = ServiceParams(max_wait=60.0)
    r = req(line_net, 1, "A", "C", 0.0)
    ctx = idle_ctx(0, "D")
    vbs = build_vehicle_bundles(ctx, [r], {}, {1: r}, params, line_net)
    assert vbs == {}


def test_vehicle_bundle_condition2_prunes_without_feasibility_check(line_net, base_params, monkeypatch):
    r1 = req(line_net, 1, "A", "C", 0.0)
    r2 = req(line_net, 2, "B", "D", 0.0)
    lookup = {1: r1, 2: r2}
    calls = []
    import pooldispatch.bundles as bundles_mod
    original = bundles_mod.simulate_timing

    def spy(specs, *args, **kwargs):
        calls.append(tuple(sorted(set().union(*(s.boarding for s in specs)))))
        return original(specs, *args, **kwargs)

    monkeypatch.setattr(bundles_mod, "simulate_timing", spy)
    pair_false = {frozenset((1, 2)): False}
    vbs = build_vehicle_bundles(idle_ctx(0, "A"), [r1, r2], pair_false, lookup, base_params, line_net)
    assert frozenset((1, 2)) not in vbs
    assert all(len(boarders) <= 1 for boarders in calls)  # pair never timed


def test_vehicle_bundle_respects_anchor_and_onboard(line_net, base_params):
    # vehicle carrying request 9 with a locked anchor at D
    r9 = req(line_net, 9, "A", "C", 0.0)
    r1 = req(line_net, 1, "B", "C", 0.0)
    lookup = {9: r9, 1: r1}
    ctx = VehicleContext(vehicle_id=3, position="A", available_time=30.0,
                         onboard_pickup_times={9: 0.0}, anchor=Anchor("D", 400.0))
    pairs = pair_feasibility([r1], lookup, base_params, line_net)
    vbs = build_vehicle_bundles(ctx, [r1], pairs, lookup, base_params, line_net)
    # onboard-only bundle is mandatory content
    assert frozenset((9,)) in vbs
    for bundle in vbs.values():
        assert 9 in bundle.requests
        for plan in bundle.schedules:
            assert plan.anchor == ctx.anchor


def test_root_schedule_of_idle_vehicle_is_empty_plan(line_net, base_params):
    roots = root_schedules(idle_ctx(4, "B"), {}, base_params, line_net)
    assert len(roots) == 1
    assert roots[0].stops == ()
