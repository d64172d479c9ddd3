"""Service KPIs computed from simulation outputs.

All aggregate values are recomputed from the raw records and cross-checked
against the event log where both exist; an inconsistency is a hard error.
The same KPIs can be rebuilt from a run directory's files alone, which the
CLI uses to verify that stored reports match the raw logs exactly.
"""
from __future__ import annotations

import csv
import json
import math
from pathlib import Path
from typing import Dict, List, Optional, Sequence

from .demand import Kind
from .engine import SimOutput
from .schedule import ServiceParams, mc_to_eur

DEFAULT_VEHICLE_DAY_COST_EUR = 25.0
DEFAULT_DISTANCE_COST_EUR_PER_KM = 0.25


class KpiError(ValueError):
    pass


def break_even_fare(fleet_size: int, fleet_distance_km: float, served_direct_km: float,
                    vehicle_day_cost: float = DEFAULT_VEHICLE_DAY_COST_EUR,
                    distance_cost_per_km: float = DEFAULT_DISTANCE_COST_EUR_PER_KM) -> Optional[float]:
    """Fare per served direct km at which fix plus distance costs break even.

    Returns None when no direct distance was served (undefined fare).
    """
    if served_direct_km <= 0.0:
        return None
    return (vehicle_day_cost * fleet_size + distance_cost_per_km * fleet_distance_km) / served_direct_km


def relative_saved_distance(fleet_distance_km: float,
                            served_direct_km: float) -> Optional[float]:
    """Sharing efficiency: saved share of the summed served direct distances."""
    if served_direct_km <= 0.0:
        return None
    return (served_direct_km - fleet_distance_km) / served_direct_km


def _percentile(sorted_values: Sequence[float], q: float) -> float:
    if not sorted_values:
        return math.nan
    if len(sorted_values) == 1:
        return sorted_values[0]
    pos = q * (len(sorted_values) - 1)
    lo = int(math.floor(pos))
    hi = int(math.ceil(pos))
    if lo == hi:
        return sorted_values[lo]
    frac = pos - lo
    return sorted_values[lo] * (1.0 - frac) + sorted_values[hi] * frac


def _stats(values: List[float]) -> Dict[str, float]:
    if not values:
        return {"count": 0, "mean": None, "p50": None, "p90": None}
    ordered = sorted(values)
    return {
        "count": len(values),
        "mean": sum(ordered) / len(ordered),
        "p50": _percentile(ordered, 0.5),
        "p90": _percentile(ordered, 0.9),
    }


def compute_kpis(output: SimOutput, params: ServiceParams, fleet_size: int,
                 vehicle_day_cost: float = DEFAULT_VEHICLE_DAY_COST_EUR,
                 distance_cost_per_km: float = DEFAULT_DISTANCE_COST_EUR_PER_KM) -> Dict[str, object]:
    """Aggregate one run into the fixed KPI schema."""
    served = {"od": [], "pb": []}
    rejected = {"od": 0, "pb": 0}
    waiting = {"od": [], "pb": []}
    detour = {"od": [], "pb": []}
    served_direct_m = 0.0
    served_duration_s = 0.0
    board_events = {ev["request"]: ev for ev in output.events if ev["event"] == "board"}
    alight_events = {ev["request"]: ev for ev in output.events if ev["event"] == "alight"}
    for rid in sorted(output.records):
        rec = output.records[rid]
        kind = rec.request.kind.value
        if rec.pickup_time is not None and rec.dropoff_time is not None:
            served[kind].append(rid)
            waiting[kind].append(rec.pickup_time - rec.request.earliest_pickup)
            detour[kind].append((rec.dropoff_time - rec.pickup_time) - rec.request.direct_time)
            served_direct_m += rec.request.direct_distance
            served_duration_s += rec.dropoff_time - rec.request.earliest_pickup
            if board_events.get(rid, {}).get("time") != rec.pickup_time or \
                    alight_events.get(rid, {}).get("time") != rec.dropoff_time:
                raise KpiError(f"event log and request record disagree for request {rid}")
        else:
            if rec.accepted:
                raise KpiError(f"request {rid} was accepted but never served")
            rejected[kind] += 1
    fleet_distance_m = output.fleet_distance_m()
    odo_total = 0.0
    last_odo: Dict[int, float] = {}
    for row in output.trajectory:
        last_odo[row[1]] = row[5]
    odo_total = sum(last_odo.values())
    if abs(odo_total - fleet_distance_m) > 1e-3 * max(1.0, fleet_distance_m):
        raise KpiError(f"odometer total {odo_total} disagrees with edge log {fleet_distance_m}")
    n_served = len(served["od"]) + len(served["pb"])
    objective_mc = (params.dist_rate_mc_per_m * fleet_distance_m
                    + params.time_rate_mc_per_s * served_duration_s
                    - params.reward_mc * n_served)
    fare = break_even_fare(fleet_size, fleet_distance_m / 1000.0, served_direct_m / 1000.0,
                           vehicle_day_cost, distance_cost_per_km)
    rsd = relative_saved_distance(fleet_distance_m / 1000.0, served_direct_m / 1000.0)
    return {
        "served": {"od": len(served["od"]), "pb": len(served["pb"]), "total": n_served},
        "rejected": {"od": rejected["od"], "pb": rejected["pb"],
                     "total": rejected["od"] + rejected["pb"]},
        "fleet_distance_km": fleet_distance_m / 1000.0,
        "served_direct_km": served_direct_m / 1000.0,
        "relative_saved_distance": rsd,
        "break_even_fare_eur_per_km": fare,
        "objective_eur": mc_to_eur(objective_mc),
        "waiting_s": {kind: _stats(waiting[kind]) for kind in ("od", "pb")},
        "detour_s": {kind: _stats(detour[kind]) for kind in ("od", "pb")},
    }


def compute_kpis_from_dir(run_dir) -> Dict[str, object]:
    """Rebuild the KPI report from a run directory's raw files."""
    from .config import parse_config

    run = Path(run_dir)
    cfg = parse_config((run / "config.resolved").read_text(encoding="utf-8"), run)
    params = cfg.service_params()
    served = {"od": [], "pb": []}
    rejected = {"od": 0, "pb": 0}
    waiting = {"od": [], "pb": []}
    detour = {"od": [], "pb": []}
    served_direct_m = 0.0
    served_duration_s = 0.0
    with open(run / "requests.csv", newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            kind = row["kind"]
            if row["pickup_s"]:
                rid = int(row["request_id"])
                served[kind].append(rid)
                waiting[kind].append(float(row["waiting_s"]))
                detour[kind].append(float(row["detour_s"]))
                served_direct_m += float(row["direct_m"])
                pickup = float(row["pickup_s"])
                earliest = pickup - float(row["waiting_s"])
                served_duration_s += float(row["dropoff_s"]) - earliest
            elif row["accepted"] == "0":
                rejected[kind] += 1
            else:
                raise KpiError(f"request {row['request_id']} accepted but never served")
    fleet_distance_m = 0.0
    with open(run / "events.jsonl", encoding="utf-8") as fh:
        for line in fh:
            ev = json.loads(line)
            if ev.get("event") == "edge":
                fleet_distance_m += ev["distance_m"]
    last_odo: Dict[str, float] = {}
    with open(run / "vehicles.csv", newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            last_odo[row["vehicle"]] = float(row["odometer_m"])
    odo_total = sum(last_odo.values())
    if abs(odo_total - fleet_distance_m) > 1e-3 * max(1.0, fleet_distance_m):
        raise KpiError(f"odometer total {odo_total} disagrees with edge log {fleet_distance_m}")
    n_served = len(served["od"]) + len(served["pb"])
    objective_mc = (params.dist_rate_mc_per_m * fleet_distance_m
                    + params.time_rate_mc_per_s * served_duration_s
                    - params.reward_mc * n_served)
    fleet_size = int(cfg["fleet_size"])
    return {
        "served": {"od": len(served["od"]), "pb": len(served["pb"]), "total": n_served},
        "rejected": {"od": rejected["od"], "pb": rejected["pb"],
                     "total": rejected["od"] + rejected["pb"]},
        "fleet_distance_km": fleet_distance_m / 1000.0,
        "served_direct_km": served_direct_m / 1000.0,
        "relative_saved_distance": relative_saved_distance(fleet_distance_m / 1000.0,
                                                           served_direct_m / 1000.0),
        "break_even_fare_eur_per_km": break_even_fare(fleet_size, fleet_distance_m / 1000.0,
                                                      served_direct_m / 1000.0),
        "objective_eur": mc_to_eur(objective_mc),
        "waiting_s": {kind: _stats(waiting[kind]) for kind in ("od", "pb")},
        "detour_s": {kind: _stats(detour[kind]) for kind in ("od", "pb")},
    }
