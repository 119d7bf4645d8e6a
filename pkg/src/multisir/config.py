"""JSON experiment documents: parsing, validation, canonical form and hashing.

A document has the sections ``model`` (required), ``grid``, ``init``,
``measure`` and ``sweep``. ``grid`` holds the whole space-time
discretisation. Unknown keys are rejected so typos do not pass silently.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Any, Optional

from multisir.errors import ConfigError, MultiSirError
from multisir.kinetics import StrainParams
from multisir.metrics import MeasureSettings
from multisir.sequence import ModelSpec
from multisir.sim import SCHEMES, SHAPES, Bump, Grid, InitialData, SimConfig

SECTIONS = ("model", "grid", "init", "measure", "sweep")

GRID_DEFAULTS = {
    "half_length": 400.0,
    "t_end": 150.0,
    "snapshot_dt": 2.5,
    "cfl": 0.8,
    "scheme": "explicit-euler",
    "dt": None,
}


@dataclass(frozen=True)
class SweepSettings:
    s0_min: Optional[float] = None
    s0_max: Optional[float] = None
    points: int = 200
    refine: bool = True
    refine_factor: int = 5
    simulate_per_regime: int = 0


@dataclass(frozen=True)
class ExperimentConfig:
    model: ModelSpec
    sim: SimConfig
    init: InitialData
    measure: MeasureSettings
    sweep: Optional[SweepSettings] = None

    def to_dict(self) -> dict:
        g = self.sim.grid
        doc = {
            "model": self.model.to_dict(),
            "grid": {
                "half_length": g.half_length,
                "n_cells": g.n_cells,
                "t_end": self.sim.t_end,
                "snapshot_dt": self.sim.snapshot_dt,
                "cfl": self.sim.cfl,
                "scheme": self.sim.scheme,
                "dt": self.sim.dt,
            },
            "init": {
                "bumps": [
                    {"center": b.center, "half_width": b.half_width,
                     "amplitude": b.amplitude, "shape": b.shape}
                    for b in self.init.bumps
                ]
            },
            "measure": self.measure.to_dict(),
        }
        if self.sweep is not None:
            doc["sweep"] = {f.name: getattr(self.sweep, f.name) for f in fields(SweepSettings)}
        return doc

    def to_json(self) -> str:
        return canonical_json(self.to_dict())

    @property
    def hash(self) -> str:
        return config_hash(self.to_dict())


def canonical_json(doc: Any) -> str:
    return json.dumps(doc, sort_keys=True, separators=(",", ":"), allow_nan=False)


def config_hash(doc: Any) -> str:
    """SHA-256 of the canonical JSON form; independent of key order."""
    return hashlib.sha256(canonical_json(doc).encode("utf-8")).hexdigest()


# ---------------------------------------------------------------------------
# validation helpers
# ---------------------------------------------------------------------------

def _section(doc, key, path, required=False) -> dict:
    if key not in doc:
        if required:
            raise ConfigError(f"{path}{key}", "missing required section")
        return {}
    value = doc[key]
    if not isinstance(value, dict):
        raise ConfigError(f"{path}{key}", "must be an object")
    return value


def _no_extra(section: dict, allowed, path: str) -> None:
    for key in section:
        if key not in allowed:
            raise ConfigError(f"{path}.{key}" if path else key, f"unknown key (allowed: {', '.join(sorted(allowed))})")


def _number(section, key, path, default=None, required=False, positive=False,
            nonneg=False, allow_none=False):
    name = f"{path}.{key}"
    if key not in section or (section[key] is None and allow_none):
        if required:
            raise ConfigError(name, "missing required number")
        return default
    v = section[key]
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ConfigError(name, f"must be a number, got {v!r}")
    v = float(v)
    if not math.isfinite(v):
        raise ConfigError(name, "must be finite")
    if positive and v <= 0:
        raise ConfigError(name, f"must be > 0, got {v!r}")
    if nonneg and v < 0:
        raise ConfigError(name, f"must be >= 0, got {v!r}")
    return v


def _integer(section, key, path, default, minimum=None):
    name = f"{path}.{key}"
    if key not in section:
        return default
    v = section[key]
    if isinstance(v, bool) or not isinstance(v, int):
        raise ConfigError(name, f"must be an integer, got {v!r}")
    if minimum is not None and v < minimum:
        raise ConfigError(name, f"must be >= {minimum}, got {v!r}")
    return v


def _boolean(section, key, path, default):
    if key not in section:
        return default
    v = section[key]
    if not isinstance(v, bool):
        raise ConfigError(f"{path}.{key}", f"must be true or false, got {v!r}")
    return v


def _choice(section, key, path, default, choices):
    v = section.get(key, default)
    if v not in choices:
        raise ConfigError(f"{path}.{key}", f"must be one of {', '.join(choices)}, got {v!r}")
    return v


# ---------------------------------------------------------------------------
# sections
# ---------------------------------------------------------------------------

def _parse_model(doc) -> ModelSpec:
    sec = _section(doc, "model", "", required=True)
    _no_extra(sec, {"s0", "strains"}, "model")
    s0 = _number(sec, "s0", "model", required=True, positive=True)
    strains = sec.get("strains")
    if not isinstance(strains, list):
        raise ConfigError("model.strains", "must be a list of {d, alpha, mu} objects")
    if not strains:
        raise ConfigError("model.strains", "needs at least one strain (N >= 1)")
    parsed = []
    for i, s in enumerate(strains):
        path = f"model.strains[{i}]"
        if not isinstance(s, dict):
            raise ConfigError(path, "must be an object")
        _no_extra(s, {"d", "alpha", "mu"}, path)
        parsed.append(StrainParams(
            _number(s, "d", path, required=True, positive=True),
            _number(s, "alpha", path, required=True, positive=True),
            _number(s, "mu", path, required=True, positive=True),
        ))
    return ModelSpec(tuple(parsed), s0)


def _parse_grid(doc) -> SimConfig:
    sec = _section(doc, "grid", "")
    _no_extra(sec, set(GRID_DEFAULTS) | {"n_cells", "dx"}, "grid")
    half = _number(sec, "half_length", "grid", GRID_DEFAULTS["half_length"], positive=True)
    if "n_cells" in sec and "dx" in sec:
        raise ConfigError("grid.dx", "give either n_cells or dx, not both")
    if "dx" in sec:
        dx = _number(sec, "dx", "grid", positive=True)
        n = int(round(2.0 * half / dx))
    else:
        n = _integer(sec, "n_cells", "grid", 3200, minimum=64)
    if n < 64 or n % 2:
        raise ConfigError("grid.n_cells", f"must be an even integer >= 64, got {n}")
    t_end = _number(sec, "t_end", "grid", GRID_DEFAULTS["t_end"], positive=True)
    snap = _number(sec, "snapshot_dt", "grid", GRID_DEFAULTS["snapshot_dt"], positive=True)
    cfl = _number(sec, "cfl", "grid", GRID_DEFAULTS["cfl"], positive=True)
    if cfl > 1:
        raise ConfigError("grid.cfl", f"must lie in (0, 1], got {cfl!r}")
    scheme = _choice(sec, "scheme", "grid", GRID_DEFAULTS["scheme"], SCHEMES)
    dt = _number(sec, "dt", "grid", None, positive=True, allow_none=True)
    try:
        return SimConfig(Grid(half, n), t_end=t_end, snapshot_dt=snap, cfl=cfl, scheme=scheme, dt=dt)
    except MultiSirError as exc:
        raise ConfigError("grid", str(exc)) from exc


def _parse_init(doc) -> InitialData:
    sec = _section(doc, "init", "")
    _no_extra(sec, {"bumps"}, "init")
    bumps = sec.get("bumps", [{}])
    if not isinstance(bumps, list) or not bumps:
        raise ConfigError("init.bumps", "must be a non-empty list")
    out = []
    for i, b in enumerate(bumps):
        path = f"init.bumps[{i}]"
        if not isinstance(b, dict):
            raise ConfigError(path, "must be an object")
        _no_extra(b, {"center", "half_width", "amplitude", "shape"}, path)
        out.append(Bump(
            center=_number(b, "center", path, 0.0),
            half_width=_number(b, "half_width", path, None, positive=True, allow_none=True),
            amplitude=_number(b, "amplitude", path, None, positive=True, allow_none=True),
            shape=_choice(b, "shape", path, "plateau", SHAPES),
        ))
    return InitialData(tuple(out))


def _parse_measure(doc) -> MeasureSettings:
    sec = _section(doc, "measure", "")
    names = {f.name for f in fields(MeasureSettings)}
    _no_extra(sec, names, "measure")
    d = MeasureSettings()
    kwargs = {}
    for name in names:
        default = getattr(d, name)
        if name == "stall_cells":
            kwargs[name] = _integer(sec, name, "measure", default, minimum=0)
        elif name in ("fit_start", "delta"):
            kwargs[name] = _number(sec, name, "measure", None, nonneg=True, allow_none=True)
        else:
            kwargs[name] = _number(sec, name, "measure", default, nonneg=True)
    if kwargs["tie_tol"] > 1e-2:
        raise ConfigError("measure.tie_tol", "must lie in [0, 1e-2]")
    if not 0 <= kwargs["margin"] < 1:
        raise ConfigError("measure.margin", "must lie in [0, 1)")
    return MeasureSettings(**kwargs)


def _parse_sweep(doc) -> Optional[SweepSettings]:
    if "sweep" not in doc:
        return None
    sec = _section(doc, "sweep", "")
    _no_extra(sec, {f.name for f in fields(SweepSettings)}, "sweep")
    s = SweepSettings(
        s0_min=_number(sec, "s0_min", "sweep", None, positive=True, allow_none=True),
        s0_max=_number(sec, "s0_max", "sweep", None, positive=True, allow_none=True),
        points=_integer(sec, "points", "sweep", 200, minimum=0),
        refine=_boolean(sec, "refine", "sweep", True),
        refine_factor=_integer(sec, "refine_factor", "sweep", 5, minimum=1),
        simulate_per_regime=_integer(sec, "simulate_per_regime", "sweep", 0, minimum=0),
    )
    if s.points < 1:
        raise ConfigError("sweep.points", "the S0 grid is empty; need at least 1 point")
    if s.s0_min is not None and s.s0_max is not None and s.s0_max < s.s0_min:
        raise ConfigError("sweep.s0_max", "must be >= sweep.s0_min")
    return s


def parse_config(doc: Any) -> ExperimentConfig:
    """Validate a decoded JSON document.

    Raises:
        ConfigError: naming the offending key and the violated constraint.
    """
    if not isinstance(doc, dict):
        raise ConfigError("", "configuration must be a JSON object")
    _no_extra(doc, set(SECTIONS), "")
    try:
        model = _parse_model(doc)
    except ConfigError:
        raise
    except MultiSirError as exc:
        raise ConfigError("model", str(exc)) from exc
    cfg = ExperimentConfig(
        model=model,
        sim=_parse_grid(doc),
        init=_parse_init(doc),
        measure=_parse_measure(doc),
        sweep=_parse_sweep(doc),
    )
    try:
        cfg.init.resolved(cfg.sim.grid, cfg.model)
    except MultiSirError as exc:
        raise ConfigError("init.bumps", str(exc)) from exc
    return cfg


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError("", f"cannot read {path}: {exc}") from exc
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError("", f"{path} is not valid JSON: {exc}") from exc
    return parse_config(doc)
