"""Reactive repositioning of idle vehicles toward rejected request origins.

Each rejected on-demand request marks its origin as a target for one run.
Idle vehicles are matched one-to-one to targets minimizing total (effective)
travel time; a vehicle whose next pre-booked stop starts at t_b only
qualifies when t_b leaves time for the detour plus the configured buffer,
and its cost is credited for ending up closer to that stop.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.optimize import linear_sum_assignment

from .network import Network, Position
from .schedule import Anchor


@dataclass(frozen=True, slots=True)
class RepositionTarget:
    location: str
    created_at: float


@dataclass(frozen=True, slots=True)
class IdleVehicle:
    vehicle_id: int
    position: Position
    next_prebooked: Optional[Anchor]  # location and start time of the next locked stop


def collect_targets(rejected_origins: Sequence[str], now: float) -> List[RepositionTarget]:
    """One target per rejected on-demand request origin (duplicates kept)."""
    return [RepositionTarget(node, now) for node in rejected_origins]


def eligible_vehicles(vehicles: Sequence[IdleVehicle],
                      targets: Sequence[RepositionTarget],
                      now: float,
                      min_lead_time: float,
                      net: Network) -> Dict[Tuple[int, int], float]:
    """Effective travel time per (vehicle index, target index), eligible only.

    Vehicles without a pre-booked stop cost the plain travel time. With a
    next pre-booked stop at p_b starting at t_b, a vehicle qualifies for
    target p_r only when t_b - now > min_lead_time + tt(v,r) + tt(r,b), and
    costs tt(v,r) + tt(r,b) - tt(v,b).
    """
    costs: Dict[Tuple[int, int], float] = {}
    for i, veh in enumerate(vehicles):
        for k, target in enumerate(targets):
            to_target = net.travel_time_from(veh.position, target.location)
            if veh.next_prebooked is None:
                costs[(i, k)] = to_target
                continue
            onward = net.travel_time(target.location, veh.next_prebooked.location)
            direct = net.travel_time_from(veh.position, veh.next_prebooked.location)
            if veh.next_prebooked.arrival_deadline - now > min_lead_time + to_target + onward:
                costs[(i, k)] = to_target + onward - direct
    return costs


def match_repositioning(vehicles: Sequence[IdleVehicle],
                        targets: Sequence[RepositionTarget],
                        costs: Dict[Tuple[int, int], float]) -> List[Tuple[int, int]]:
    """Maximum-cardinality, minimum-total-cost one-to-one matching.

    Returns (vehicle index, target index) pairs. Equal-cost alternatives are
    broken toward lower vehicle index, then lower target index, by an exact
    integer perturbation below the cost resolution.
    """
    if not vehicles or not targets or not costs:
        return []
    n_v, n_t = len(vehicles), len(targets)
    # integer milliseconds keep the assignment arithmetic exact
    big = 10 ** 12
    scale = n_v * n_t + 1
    matrix = np.full((n_v, n_t), float(big) * scale, dtype=np.float64)
    for (i, k), cost in costs.items():
        matrix[i, k] = float(round(cost * 1000)) * scale + (i * n_t + k)
    rows, cols = linear_sum_assignment(matrix)
    out = []
    for i, k in zip(rows.tolist(), cols.tolist()):
        if matrix[i, k] < float(big) * scale:
            out.append((i, k))
    return sorted(out)
