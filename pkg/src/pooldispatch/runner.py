"""Scenario orchestration: config file -> simulation -> artifacts."""
from __future__ import annotations

import json
import time
from pathlib import Path
from typing import Dict, Optional, Tuple

from .config import ScenarioConfig
from .demand import Kind, load_requests, request_kind_tokens, split_prebooking, subsample
from .engine import SimOutput, Simulation, write_outputs
from .kpi import compute_kpis
from .network import Network, load_network
from .offline import OfflinePlan, VehicleStart, plan_fbo, plan_insertion
from .schedule import mc_to_eur


def load_scenario_inputs(cfg: ScenarioConfig):
    with open(cfg.path("nodes"), encoding="utf-8") as nodes_fh, \
            open(cfg.path("edges"), encoding="utf-8") as edges_fh:
        net = load_network(nodes_fh, edges_fh)
    with open(cfg.path("requests"), encoding="utf-8") as fh:
        requests = load_requests(fh, net)
    with open(cfg.path("requests"), encoding="utf-8") as fh:
        tokens = request_kind_tokens(fh)
    seed = int(cfg["seed"])
    fraction = float(cfg["subsample"])
    if fraction < 1.0:
        requests = subsample(requests, fraction, seed)
    fixed = [r for r in requests if tokens.get(r.id) != "auto"]
    auto = [r for r in requests if tokens.get(r.id) == "auto"]
    on_demand, pre_booked = split_prebooking(auto, float(cfg["prebook_share"]), seed)
    merged = sorted(fixed + on_demand + pre_booked, key=lambda r: r.id)
    return net, merged


def run_scenario(cfg: ScenarioConfig) -> Tuple[SimOutput, Dict[str, object]]:
    net, requests = load_scenario_inputs(cfg)
    params = cfg.service_params()
    sim = Simulation(
        net=net,
        requests=requests,
        params=params,
        fleet_size=int(cfg["fleet_size"]),
        step=float(cfg["delta_t"]),
        short_horizon=float(cfg["t_h_short"]),
        revelation_horizon=float(cfg["t_h_rev"]),
        repositioning=bool(cfg["repositioning"]),
        repo_min_lead=float(cfg["t_repo"]),
        planner=str(cfg["planner"]),
        batch_size=int(cfg["n_batch_max_s"]),
        window_batches=int(cfg["n_batch_c"]),
        insert_max_vehicles=int(cfg["n_insert_max_v"]),
        seed=int(cfg["seed"]),
        config=cfg.resolved(),
    )
    output = sim.run()
    kpis = compute_kpis(output, params, int(cfg["fleet_size"]))
    return output, kpis


def run_and_write(cfg: ScenarioConfig, out_dir) -> Dict[str, object]:
    output, kpis = run_scenario(cfg)
    out = Path(out_dir)
    write_outputs(output, out)
    with open(out / "kpis.json", "w", encoding="utf-8") as fh:
        json.dump(kpis, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return kpis


def plan_offline_only(cfg: ScenarioConfig, method: str) -> Tuple[OfflinePlan, Dict[str, object]]:
    """Run one offline planner and report objective plus wall time."""
    net, requests = load_scenario_inputs(cfg)
    params = cfg.service_params()
    lookup = {r.id: r for r in requests}
    pre_booked = [r for r in requests if r.kind is Kind.PRE_BOOKED]
    import random as _random
    rng = _random.Random(f"{int(cfg['seed'])}/vehicle-positions")
    starts = [VehicleStart(i, rng.choice(net.nodes), 0.0)
              for i in range(int(cfg["fleet_size"]))]
    began = time.perf_counter()
    if method == "fbo":
        plan = plan_fbo(pre_booked, starts, lookup, params, net,
                        batch_size=int(cfg["n_batch_max_s"]),
                        window_batches=int(cfg["n_batch_c"]))
    elif method == "i":
        plan = plan_insertion(pre_booked, starts, lookup, params, net,
                              max_candidate_vehicles=int(cfg["n_insert_max_v"]))
    else:
        raise ValueError(f"unknown offline method {method!r}")
    elapsed = time.perf_counter() - began
    objective = plan.objective_mc(lookup, params, net)
    summary = {
        "method": method,
        "pre_booked": len(pre_booked),
        "accepted": len(plan.accepted_ids()),
        "rejected": len(plan.rejected),
        "objective_eur": mc_to_eur(objective),
        "wall_time_s": elapsed,
    }
    return plan, summary
