"""Command line entry points.

Subcommands: generate (synthetic scenarios), run (full simulation),
plan-offline (offline planners only, with an objective/wall-time comparison),
sweep (cartesian parameter grids), kpi (recompute and verify a run's report).
"""
from __future__ import annotations

import argparse
import itertools
import json
import sys
from pathlib import Path

from .config import DEFAULTS, ConfigError, load_config, parse_config
from .generate import write_scenario
from .kpi import compute_kpis_from_dir
from .offline import offline_plan_to_json
from .runner import plan_offline_only, run_and_write


def _add_seed(parser):
    parser.add_argument("--seed", type=int, default=None, help="override the scenario seed")


def _load_cfg(args):
    cfg = load_config(args.config)
    if getattr(args, "seed", None) is not None:
        cfg.values["seed"] = int(args.seed)
    for token in getattr(args, "set", None) or []:
        if "=" not in token:
            raise ConfigError(f"--set expects key=value, got {token!r}")
        key, _, value = token.partition("=")
        override = parse_config(f"{key.strip()}={value.strip()}", cfg.base_dir)
        cfg.values[key.strip()] = override.values[key.strip()]
    return cfg


def cmd_generate(args) -> int:
    out = write_scenario(
        args.out, rows=args.rows, cols=args.cols, seed=args.seed,
        rate_per_hour=args.rate, count=args.requests, duration_s=args.duration,
        edge_travel_time=args.edge_tt, edge_distance=args.edge_dist,
        config_overrides=dict(kv.split("=", 1) for kv in args.set or []),
    )
    print(f"scenario written to {out}")
    return 0


def cmd_run(args) -> int:
    cfg = _load_cfg(args)
    out_dir = Path(args.out) if args.out else cfg.base_dir / f"run_seed{cfg['seed']}"
    kpis = run_and_write(cfg, out_dir)
    print(json.dumps(kpis, indent=2, sort_keys=True))
    print(f"artifacts in {out_dir}", file=sys.stderr)
    return 0


def cmd_plan_offline(args) -> int:
    cfg = _load_cfg(args)
    methods = args.method or ["fbo", "i"]
    out_dir = Path(args.out) if args.out else cfg.base_dir
    out_dir.mkdir(parents=True, exist_ok=True)
    rows = []
    for method in methods:
        plan, summary = plan_offline_only(cfg, method)
        rows.append(summary)
        with open(out_dir / f"offline_plan_{method}.json", "w", encoding="utf-8") as fh:
            fh.write(offline_plan_to_json(plan))
            fh.write("\n")
    header = f"{'method':8} {'prebooked':>9} {'accepted':>8} {'rejected':>8} " \
             f"{'objective_eur':>16} {'wall_time_s':>12}"
    print(header)
    for s in rows:
        print(f"{s['method']:8} {s['pre_booked']:>9} {s['accepted']:>8} {s['rejected']:>8} "
              f"{s['objective_eur']:>16.2f} {s['wall_time_s']:>12.3f}")
    with open(out_dir / "offline_comparison.json", "w", encoding="utf-8") as fh:
        json.dump(rows, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return 0


def _parse_list(text, cast):
    return [cast(tok) for tok in text.split(",") if tok.strip()]


def cmd_sweep(args) -> int:
    cfg = _load_cfg(args)
    shares = _parse_list(args.shares, float) if args.shares else [float(cfg["prebook_share"]) * 100]
    fleets = _parse_list(args.fleet_sizes, int) if args.fleet_sizes else [int(cfg["fleet_size"])]
    horizons = _parse_list(args.horizons, float) if args.horizons else [float(cfg["t_h_short"])]
    seeds = _parse_list(args.seeds, int) if args.seeds else [int(cfg["seed"])]
    repositioning = ([tok == "on" for tok in args.repositioning.split(",")]
                     if args.repositioning else [bool(cfg["repositioning"])])
    out_root = Path(args.out)
    out_root.mkdir(parents=True, exist_ok=True)
    summary = []
    for share, fleet, horizon, repo, seed in itertools.product(
            shares, fleets, horizons, repositioning, seeds):
        run_cfg = load_config(args.config)
        for token in args.set or []:
            key, _, value = token.partition("=")
            override = parse_config(f"{key.strip()}={value.strip()}", run_cfg.base_dir)
            run_cfg.values[key.strip()] = override.values[key.strip()]
        run_cfg.values.update({
            "prebook_share": share / 100.0,
            "fleet_size": fleet,
            "repositioning": repo,
            "seed": seed,
        })
        if args.horizons:
            # horizon pairs vary together (short-term == revelation)
            run_cfg.values["t_h_short"] = horizon
            run_cfg.values["t_h_rev"] = horizon
        name = f"share{share:g}_fleet{fleet}_hor{horizon:g}_repo{'on' if repo else 'off'}_seed{seed}"
        kpis = run_and_write(run_cfg, out_root / name)
        entry = {"name": name, "prebook_share_pct": share, "fleet_size": fleet,
                 "t_h_short": horizon, "repositioning": repo, "seed": seed}
        entry.update({
            "served_total": kpis["served"]["total"],
            "served_od": kpis["served"]["od"],
            "served_pb": kpis["served"]["pb"],
            "rejected_total": kpis["rejected"]["total"],
            "objective_eur": kpis["objective_eur"],
            "fleet_distance_km": kpis["fleet_distance_km"],
            "relative_saved_distance": kpis["relative_saved_distance"],
            "break_even_fare_eur_per_km": kpis["break_even_fare_eur_per_km"],
        })
        summary.append(entry)
        print(f"{name}: served {entry['served_total']} "
              f"objective {entry['objective_eur']:.2f} EUR")
    with open(out_root / "summary.json", "w", encoding="utf-8") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")
    import csv as _csv
    if summary:
        with open(out_root / "summary.csv", "w", newline="", encoding="utf-8") as fh:
            w = _csv.DictWriter(fh, fieldnames=list(summary[0]))
            w.writeheader()
            w.writerows(summary)
    return 0


def cmd_kpi(args) -> int:
    run_dir = Path(args.run_dir)
    recomputed = compute_kpis_from_dir(run_dir)
    print(json.dumps(recomputed, indent=2, sort_keys=True))
    stored_path = run_dir / "kpis.json"
    if stored_path.exists():
        stored = json.loads(stored_path.read_text(encoding="utf-8"))
        if stored != recomputed:
            print("stored kpis.json does not match the recomputation", file=sys.stderr)
            return 1
        print("stored kpis.json matches the recomputation", file=sys.stderr)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="pooldispatch",
                                     description="ride-pooling fleet simulator with pre-booking")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="write a synthetic grid scenario")
    p.add_argument("--out", required=True)
    p.add_argument("--rows", type=int, default=8)
    p.add_argument("--cols", type=int, default=8)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--requests", type=int, default=None, help="exact request count")
    p.add_argument("--rate", type=float, default=None, help="requests per hour")
    p.add_argument("--duration", type=float, default=7200.0)
    p.add_argument("--edge-tt", type=float, default=60.0)
    p.add_argument("--edge-dist", type=float, default=500.0)
    p.add_argument("--set", action="append", metavar="KEY=VALUE",
                   help="extra scenario.cfg entries")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("run", help="run one scenario")
    p.add_argument("config")
    p.add_argument("--out", default=None)
    p.add_argument("--set", action="append", metavar="KEY=VALUE")
    _add_seed(p)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("plan-offline", help="run offline planners and compare them")
    p.add_argument("config")
    p.add_argument("--method", action="append", choices=["fbo", "i"])
    p.add_argument("--out", default=None)
    p.add_argument("--set", action="append", metavar="KEY=VALUE")
    _add_seed(p)
    p.set_defaults(func=cmd_plan_offline)

    p = sub.add_parser("sweep", help="cartesian scenario grid")
    p.add_argument("config")
    p.add_argument("--out", required=True)
    p.add_argument("--shares", default=None, help="pre-booking shares in percent, e.g. 0,25,50")
    p.add_argument("--fleet-sizes", default=None)
    p.add_argument("--horizons", default=None, help="short-term horizons in seconds")
    p.add_argument("--seeds", default=None)
    p.add_argument("--repositioning", default=None, help="on,off")
    p.add_argument("--set", action="append", metavar="KEY=VALUE")
    _add_seed(p)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("kpi", help="recompute KPIs from a run directory")
    p.add_argument("run_dir")
    p.set_defaults(func=cmd_kpi)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    raise SystemExit(main())
