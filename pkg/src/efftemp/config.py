"""Experiment configuration: closed YAML schema, defaults, and presets.

A configuration is a nested mapping with the sections model, ansatz,
objective, optimizer, run, and analysis.  Unknown sections or keys are
rejected with the allowed set named, so typos fail loudly.  Named presets
ship the published per-family optimizer rows and step counts; explicit
config values override preset values, which override defaults.
"""

from __future__ import annotations

import copy
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import yaml

from .ansatz import AnsatzSpec, ansatz_spec
from .model import DEFAULT_DIM_CAP, Lattice, XXZParams, build_lattice
from .objectives import ObjectiveSpec, objective_spec
from .optimize import AdamConfig, LBFGSConfig, Schedule

__all__ = [
    "ConfigError",
    "Config",
    "PRESETS",
    "load_config",
    "validate_config",
    "config_snapshot",
]


class ConfigError(ValueError):
    """Configuration fails schema validation."""


_BOOL = "bool"
_INT = "int"
_FLOAT = "float"
_STR = "str"
_OPT_INT = "int|null"
_FIELD_SPEC = "float|list"  # uniform value or per-site list
_GRID = "list|mapping|null"

# section -> key -> (type, default)
SCHEMA = {
    "model": {
        "lattice": (_STR, "chain"),
        "Lx": (_INT, 4),
        "Ly": (_INT, 1),
        "pbc": (_BOOL, True),
        "Jx": (_FLOAT, 1.0),
        "Jy": (_FLOAT, 1.0),
        "Jz": (_FLOAT, 1.0),
        "h": (_FIELD_SPEC, 0.0),
        "use_sectors": ("bool|null", None),
        "dim_cap": (_INT, DEFAULT_DIM_CAP),
    },
    "ansatz": {
        "kind": (_STR, "vec"),
        "chi": (_INT, 0),
        "width": (_INT, 0),
        "depth": (_INT, 0),
    },
    "objective": {
        "kind": (_STR, "energy"),
        "target": (_STR, "ground"),
        "beta": (_FLOAT, 0.0),
        "beta_grid": (_GRID, None),
        "phase_seed": (_OPT_INT, None),
    },
    "optimizer": {
        "kind": (_STR, "adam"),
        "lr0": (_FLOAT, 1e-3),
        "schedule": (_STR, "constant"),
        "period": (_INT, 1),
        "warm_steps": (_INT, 0),
        "beta1": (_FLOAT, 0.9),
        "beta2": (_FLOAT, 0.999),
        "eps_adam": (_FLOAT, 1e-8),
        "memory": (_INT, 10),
        "value_tol": (_FLOAT, 1e-22),
        "grad_tol": (_FLOAT, 1e-22),
        "max_iter": (_INT, 4000),
    },
    "run": {
        "steps": (_INT, 100),
        "record_every": (_INT, 25),
        "seed": (_INT, 0),
        "out": ("str|null", None),
        "checkpoint_every": (_INT, 0),  # 0 = final checkpoint only
        "scatter_every": (_INT, 0),  # 0 = final scatter only
    },
    "analysis": {
        "exclude_ground": (_BOOL, True),
        "weight_floor": (_FLOAT, 0.0),
        "aggregate": (_BOOL, True),
        "aggregate_rel_tol": (_FLOAT, 1e-10),
        "sector_filter": (_OPT_INT, None),
        "renormalize_within_sector": (_BOOL, False),
        "beta_star_rel_dev": (_FLOAT, 0.05),
        "entropy_cut": (_OPT_INT, None),
    },
}

PRESETS = {
    "mps-sm-table": {
        "ansatz": {"kind": "mps"},
        "optimizer": {"kind": "adam", "lr0": 3e-3, "schedule": "exp_halving",
                      "period": 1000},
        "run": {"steps": 400},
    },
    "peps-sm-table": {
        "ansatz": {"kind": "peps"},
        "optimizer": {"kind": "adam", "lr0": 8e-3, "schedule": "constant"},
        "run": {"steps": 600},
    },
    "nqs-sm-table": {
        "ansatz": {"kind": "nqs"},
        "optimizer": {"kind": "adam", "lr0": 1e-3, "schedule": "warm_then_constant",
                      "period": 200, "warm_steps": 800},
        "run": {"steps": 3500},
    },
    "vqe-sm-table": {
        "ansatz": {"kind": "vqe"},
        "optimizer": {"kind": "adam", "lr0": 1e-2, "schedule": "exp_halving",
                      "period": 2000},
        "run": {"steps": 2000},
    },
    "vec-sm-table": {
        "ansatz": {"kind": "vec"},
        "optimizer": {"kind": "adam", "lr0": 2e-3, "schedule": "constant"},
        "run": {"steps": 600},
    },
}


def _check_type(section: str, key: str, kind: str, value):
    def fail(expected):
        raise ConfigError(f"{section}.{key}: expected {expected}, got {value!r}")

    if kind == _BOOL:
        if not isinstance(value, bool):
            fail("a boolean")
    elif kind == _INT:
        if isinstance(value, bool) or not isinstance(value, int):
            fail("an integer")
    elif kind == _FLOAT:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            fail("a number")
        value = float(value)
    elif kind == _STR:
        if not isinstance(value, str):
            fail("a string")
    elif kind == _OPT_INT:
        if value is not None and (isinstance(value, bool) or not isinstance(value, int)):
            fail("an integer or null")
    elif kind == "bool|null":
        if value is not None and not isinstance(value, bool):
            fail("a boolean or null")
    elif kind == "str|null":
        if value is not None and not isinstance(value, str):
            fail("a string or null")
    elif kind == _FIELD_SPEC:
        if isinstance(value, bool):
            fail("a number or a list of numbers")
        if isinstance(value, (int, float)):
            value = float(value)
        elif isinstance(value, list):
            if not all(isinstance(v, (int, float)) and not isinstance(v, bool)
                       for v in value):
                fail("a number or a list of numbers")
            value = [float(v) for v in value]
        else:
            fail("a number or a list of numbers")
    elif kind == _GRID:
        if value is None:
            pass
        elif isinstance(value, list):
            if not all(isinstance(v, (int, float)) and not isinstance(v, bool)
                       for v in value):
                fail("a list of numbers or {start, stop, step}")
            value = [float(v) for v in value]
        elif isinstance(value, dict):
            allowed = {"start", "stop", "step"}
            if set(value) != allowed:
                fail("a list of numbers or {start, stop, step}")
            value = {k: float(value[k]) for k in ("start", "stop", "step")}
        else:
            fail("a list of numbers or {start, stop, step}")
    else:  # pragma: no cover - schema author error
        raise ConfigError(f"unknown schema type {kind!r}")
    return value


def validate_config(raw: dict | None, preset: str | None = None) -> "Config":
    """Merge defaults <- preset <- raw and validate against the closed schema."""
    if raw is None:
        raw = {}
    if not isinstance(raw, dict):
        raise ConfigError("configuration root must be a mapping")

    merged = {sec: {k: copy.deepcopy(d) for k, (_, d) in keys.items()}
              for sec, keys in SCHEMA.items()}
    layers = []
    if preset is not None:
        if preset not in PRESETS:
            raise ConfigError(
                f"unknown preset {preset!r}; available: {sorted(PRESETS)}"
            )
        layers.append(PRESETS[preset])
    layers.append(raw)

    for layer in layers:
        for sec, body in layer.items():
            if sec not in SCHEMA:
                raise ConfigError(
                    f"unknown section {sec!r}; allowed: {sorted(SCHEMA)}"
                )
            if not isinstance(body, dict):
                raise ConfigError(f"section {sec!r} must be a mapping")
            for key, value in body.items():
                if key not in SCHEMA[sec]:
                    raise ConfigError(
                        f"unknown key {sec}.{key}; allowed: {sorted(SCHEMA[sec])}"
                    )
                kind, _ = SCHEMA[sec][key]
                merged[sec][key] = _check_type(sec, key, kind, value)

    cfg = Config(data=merged)
    # materialize every derived object once so bad values fail at load time
    lattice = cfg.lattice()
    cfg.xxz_params(lattice)
    cfg.ansatz(lattice)
    cfg.objective()
    cfg.optimizer()
    if cfg.data["run"]["steps"] < 0:
        raise ConfigError("run.steps must be >= 0")
    if cfg.data["run"]["record_every"] < 1:
        raise ConfigError("run.record_every must be >= 1")
    return cfg


def load_config(path: str | Path | None, preset: str | None = None) -> "Config":
    raw = None
    if path is not None:
        with open(path, "r", encoding="utf-8") as f:
            raw = yaml.safe_load(f)
    return validate_config(raw, preset=preset)


def config_snapshot(cfg: "Config") -> str:
    """Canonical text form of the fully merged configuration."""
    return yaml.safe_dump(cfg.data, sort_keys=True, default_flow_style=False)


@dataclass(frozen=True)
class Config:
    data: dict

    def lattice(self) -> Lattice:
        m = self.data["model"]
        try:
            return build_lattice(m["lattice"], m["Lx"], m["Ly"], m["pbc"])
        except ValueError as e:
            raise ConfigError(str(e)) from e

    def xxz_params(self, lattice: Lattice) -> XXZParams:
        m = self.data["model"]
        h = m["h"]
        if isinstance(h, list):
            if len(h) != lattice.nsites:
                raise ConfigError(
                    f"model.h has {len(h)} entries, lattice has {lattice.nsites} sites"
                )
            hvec = tuple(float(v) for v in h)
        else:
            hvec = (float(h),) * lattice.nsites
        return XXZParams(float(m["Jx"]), float(m["Jy"]), float(m["Jz"]), hvec)

    def use_sectors(self) -> bool:
        m = self.data["model"]
        if m["use_sectors"] is None:
            return m["Jx"] == m["Jy"]
        return bool(m["use_sectors"])

    def ansatz(self, lattice: Lattice) -> AnsatzSpec:
        a = self.data["ansatz"]
        try:
            return ansatz_spec(a["kind"], lattice, chi=a["chi"], width=a["width"],
                               depth=a["depth"])
        except ValueError as e:
            raise ConfigError(str(e)) from e

    def objective(self) -> ObjectiveSpec:
        o = self.data["objective"]
        try:
            if o["kind"] == "energy":
                return objective_spec("energy")
            return objective_spec(o["kind"], o["target"], beta=o["beta"],
                                  phase_seed=o["phase_seed"])
        except ValueError as e:
            raise ConfigError(str(e)) from e

    def optimizer(self):
        o = self.data["optimizer"]
        try:
            if o["kind"] == "adam":
                schedule = Schedule(kind=o["schedule"], lr0=o["lr0"],
                                    period=o["period"], warm_steps=o["warm_steps"])
                return AdamConfig(schedule=schedule, beta1=o["beta1"],
                                  beta2=o["beta2"], eps=o["eps_adam"])
            if o["kind"] == "lbfgs":
                return LBFGSConfig(memory=o["memory"], value_tol=o["value_tol"],
                                   grad_tol=o["grad_tol"], max_iter=o["max_iter"])
        except RuntimeError as e:
            raise ConfigError(str(e)) from e
        raise ConfigError(f"unknown optimizer kind {o['kind']!r}; allowed: adam, lbfgs")

    def beta_grid(self) -> list[float]:
        g = self.data["objective"]["beta_grid"]
        if g is None:
            raise ConfigError("objective.beta_grid is required for a sweep")
        if isinstance(g, dict):
            start, stop, step = g["start"], g["stop"], g["step"]
            if step <= 0 or stop < start:
                raise ConfigError("beta_grid needs step > 0 and stop >= start")
            n = int(round((stop - start) / step)) + 1
            grid = [start + k * step for k in range(n) if start + k * step <= stop + 1e-12]
        else:
            grid = list(g)
        if not grid:
            raise ConfigError("beta_grid is empty")
        arr = np.asarray(grid, dtype=np.float64)
        if np.any(np.diff(arr) <= 0):
            raise ConfigError("beta_grid must be strictly increasing")
        if np.any(arr < 0):
            raise ConfigError("beta_grid values must be >= 0")
        return [float(round(v, 12)) for v in arr]
