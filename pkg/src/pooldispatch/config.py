"""Flat key=value scenario configuration.

Keys mirror the simulation's main parameter names; every key is optional and
falls back to the base value, so an empty file reproduces the base case.
Paths are resolved relative to the config file location.
"""
from __future__ import annotations

from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Dict, Optional

from .schedule import ServiceParams

DEFAULTS: Dict[str, object] = {
    "delta_t": 60.0,              # simulation time step, s
    "delta_max_wait": 360.0,      # maximum customer waiting time, s
    "delta_max_detour": 0.4,      # maximum customer detour factor
    "c_dis": 0.25,                # distance dependent cost, EUR/km
    "c_vot": 16.2,                # value of time, EUR/h
    "p": 10000.0,                 # assignment reward, EUR
    "n_batch_c": 2,               # batches within one optimization window (FBO)
    "n_batch_max_s": 20,          # max requests per batch (FBO)
    "n_insert_max_v": 25,         # max vehicles searched (insertion)
    "t_h_short": 720.0,           # short-term horizon, s
    "t_h_rev": 720.0,             # revelation horizon, s
    "t_repo": 3600.0,             # min lead until next pre-booked stop, s
    "fleet_size": 200,
    "c_v": 4,                     # vehicle capacity
    "boarding_duration": 0.0,
    "planner": "fbo",             # offline planner: fbo | i
    "repositioning": True,
    "prebook_share": 0.25,        # share applied to kind=auto requests
    "subsample": 1.0,             # kept fraction of the request file
    "seed": 0,
    "nodes": "nodes.csv",
    "edges": "edges.csv",
    "requests": "requests.csv",
}

_BOOL_TRUE = {"1", "true", "yes", "on"}
_BOOL_FALSE = {"0", "false", "no", "off"}


class ConfigError(ValueError):
    pass


@dataclass(slots=True)
class ScenarioConfig:
    values: Dict[str, object]
    base_dir: Path

    def __getitem__(self, key: str):
        return self.values[key]

    def service_params(self) -> ServiceParams:
        return ServiceParams(
            max_wait=float(self.values["delta_max_wait"]),
            max_detour_factor=float(self.values["delta_max_detour"]),
            dist_cost_per_km=float(self.values["c_dis"]),
            time_cost_per_h=float(self.values["c_vot"]),
            assignment_reward=float(self.values["p"]),
            capacity=int(self.values["c_v"]),
            boarding_duration=float(self.values["boarding_duration"]),
        )

    def path(self, key: str) -> Path:
        return (self.base_dir / str(self.values[key])).resolve()

    def resolved(self) -> Dict[str, object]:
        return dict(self.values)


def _convert(key: str, raw: str):
    default = DEFAULTS[key]
    if isinstance(default, bool):
        token = raw.strip().lower()
        if token in _BOOL_TRUE:
            return True
        if token in _BOOL_FALSE:
            return False
        raise ConfigError(f"{key}: expected a boolean, got {raw!r}")
    if isinstance(default, int) and not isinstance(default, bool):
        return int(raw)
    if isinstance(default, float):
        return float(raw)
    return raw.strip()


def parse_config(text: str, base_dir: Path) -> ScenarioConfig:
    values = dict(DEFAULTS)
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key=value, got {raw!r}")
        key, _, value = line.partition("=")
        key = key.strip()
        if key not in DEFAULTS:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        try:
            values[key] = _convert(key, value.strip())
        except ValueError as exc:
            raise ConfigError(f"line {lineno}: {exc}") from None
    if values["planner"] not in ("fbo", "i"):
        raise ConfigError("planner must be 'fbo' or 'i'")
    if values["t_h_rev"] < values["t_h_short"]:
        raise ConfigError("t_h_rev must be >= t_h_short")
    return ScenarioConfig(values, base_dir)


def load_config(path) -> ScenarioConfig:
    p = Path(path)
    return parse_config(p.read_text(encoding="utf-8"), p.parent)
