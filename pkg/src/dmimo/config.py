"""Experiment config files: YAML (or JSON) with strict, path-annotated validation.

A config mirrors the ExperimentConfig fields::

    geometry:
      k_t: 2
      k_r: 2
      tx_array: {kind: ula, n_h: 50}
      rx_array: {kind: ula, n_h: 50}
    link: {g: 1.0, path_law: fixed, paths: 3}
    n_s: 6
    snr_grid_db: {start_db: 0, stop_db: 30, step_db: 5}
    trials: 2000
    seed: 1
    sweep:
      - {n: 5}
      - {n: 50}

Optional sections ``outage``, ``multiuser`` and ``dmt`` carry subcommand
parameters. Unknown keys anywhere are errors.
"""

from __future__ import annotations

import copy
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np
import yaml

from .arrays import ArrayKind, ArraySpec
from .channel import AngleLaw, LinkConfig, PathLaw, SystemGeometry
from .closedform import Architecture
from .montecarlo import MAX_SEED, ExperimentConfig, PowerPolicy, Precoder

__all__ = [
    "ConfigError",
    "RunConfig",
    "SweepCase",
    "OutageOptions",
    "DmtOptions",
    "load_config",
    "parse_config",
    "parse_grid",
    "experiment_from_dict",
]


class ConfigError(ValueError):
    """Schema violation; the message starts with the offending field path."""

    def __init__(self, path: str, message: str):
        self.path = path
        super().__init__(f"{path}: {message}" if path else message)


_TOP_KEYS = {"geometry", "link", "n_s", "snr_grid_db", "trials", "seed", "power_policy", "precoder",
             "sweep", "outage", "multiuser", "dmt", "k_u"}
_ARRAY_KEYS = {"kind", "n_h", "n_v", "d_h", "d_v"}
_GEOMETRY_KEYS = {"k_t", "k_r", "tx_array", "rx_array"}
_LINK_KEYS = {"g", "path_law", "paths", "angle_law"}
_SWEEP_KEYS = {"name", "n", "k", "n_s", "paths"}
_OUTAGE_KEYS = {"stream_index", "rate_exponent", "rate_floor_bits"}
_MULTIUSER_KEYS = {"k_u"}
_DMT_KEYS = {"architecture", "l_s", "k_t", "k_r", "paths", "k_u", "k_b", "d_grid"}


def _join(path: str, key) -> str:
    if isinstance(key, int):
        return f"{path}[{key}]"
    return f"{path}.{key}" if path else str(key)


def _mapping(value, path: str, allowed: set[str], required: set[str] = frozenset()) -> dict:
    if not isinstance(value, dict):
        raise ConfigError(path, f"expected a mapping, got {type(value).__name__}")
    for key in value:
        if key not in allowed:
            raise ConfigError(_join(path, key), f"unknown key (allowed: {', '.join(sorted(allowed))})")
    for key in required:
        if key not in value:
            raise ConfigError(_join(path, key), "required key missing")
    return value


def _int(value, path: str, minimum: int | None = 1, maximum: int | None = None) -> int:
    if isinstance(value, bool) or not isinstance(value, (int, float)) or int(value) != value:
        raise ConfigError(path, f"expected an integer, got {value!r}")
    value = int(value)
    if minimum is not None and value < minimum:
        raise ConfigError(path, f"must be >= {minimum}, got {value}")
    if maximum is not None and value > maximum:
        raise ConfigError(path, f"must be <= {maximum}, got {value}")
    return value


def _float(value, path: str, positive: bool = False, nonnegative: bool = False) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)) or not math.isfinite(value):
        raise ConfigError(path, f"expected a finite number, got {value!r}")
    value = float(value)
    if positive and value <= 0:
        raise ConfigError(path, f"must be > 0, got {value}")
    if nonnegative and value < 0:
        raise ConfigError(path, f"must be >= 0, got {value}")
    return value


def _enum(enum_cls, value, path: str):
    if isinstance(value, str):
        for member in enum_cls:
            if member.value.lower() == value.lower():
                return member
    choices = ", ".join(m.value for m in enum_cls)
    raise ConfigError(path, f"expected one of {choices}, got {value!r}")


def parse_grid(value, path: str, unit: str = "_db") -> tuple[float, ...]:
    """An explicit list, or {start<unit>, stop<unit>, step<unit>} with the stop included."""
    if isinstance(value, dict):
        keys = {f"start{unit}", f"stop{unit}", f"step{unit}"}
        _mapping(value, path, keys, keys)
        start = _float(value[f"start{unit}"], _join(path, f"start{unit}"))
        stop = _float(value[f"stop{unit}"], _join(path, f"stop{unit}"))
        step = _float(value[f"step{unit}"], _join(path, f"step{unit}"), positive=True)
        if stop < start:
            raise ConfigError(path, "stop must not be below start")
        count = int(math.floor((stop - start) / step + 1e-9)) + 1
        grid = [start + k * step for k in range(count)]
    elif isinstance(value, list):
        grid = [_float(x, _join(path, k)) for k, x in enumerate(value)]
    else:
        raise ConfigError(path, "expected a list or a start/stop/step mapping")
    if not grid:
        raise ConfigError(path, "grid is empty")
    if any(b <= a for a, b in zip(grid, grid[1:])):
        raise ConfigError(path, "grid must be strictly increasing")
    return tuple(grid)


def _array(value, path: str) -> ArraySpec:
    _mapping(value, path, _ARRAY_KEYS, {"kind", "n_h"})
    kind = _enum(ArrayKind, value["kind"], _join(path, "kind"))
    n_h = _int(value["n_h"], _join(path, "n_h"))
    n_v = _int(value.get("n_v", 1), _join(path, "n_v"))
    d_h = _float(value.get("d_h", 0.5), _join(path, "d_h"), positive=True)
    d_v = _float(value.get("d_v", 0.5), _join(path, "d_v"), positive=True)
    if kind is ArrayKind.ULA and n_v != 1:
        raise ConfigError(_join(path, "n_v"), "a ULA has n_v = 1")
    return ArraySpec(kind, n_h, n_v, d_h, d_v)


def _geometry(value, path: str) -> SystemGeometry:
    _mapping(value, path, _GEOMETRY_KEYS, _GEOMETRY_KEYS)
    return SystemGeometry(
        _int(value["k_t"], _join(path, "k_t")),
        _int(value["k_r"], _join(path, "k_r")),
        _array(value["tx_array"], _join(path, "tx_array")),
        _array(value["rx_array"], _join(path, "rx_array")),
    )


def _matrix(value, path: str, shape: tuple[int, int], what: str) -> np.ndarray:
    if isinstance(value, list):
        try:
            arr = np.array(value, dtype=float)
        except (TypeError, ValueError):
            raise ConfigError(path, f"{what} must be a number or a numeric matrix") from None
        if arr.shape != shape:
            raise ConfigError(path, f"{what} matrix must be {shape[0]}x{shape[1]}, got shape {arr.shape}")
    else:
        arr = np.full(shape, _float(value, path))
    if not np.all(np.isfinite(arr)):
        raise ConfigError(path, f"{what} entries must be finite")
    return arr


def _link(value, path: str, geometry: SystemGeometry) -> LinkConfig:
    _mapping(value, path, _LINK_KEYS, {"paths"})
    shape = (geometry.k_r, geometry.k_t)
    g = _matrix(value.get("g", 1.0), _join(path, "g"), shape, "g")
    if np.any(g < 0):
        raise ConfigError(_join(path, "g"), "large-scale gains must be >= 0")
    law = _enum(PathLaw, value.get("path_law", "fixed"), _join(path, "path_law"))
    angle_law = _enum(AngleLaw, value.get("angle_law", AngleLaw.UNIFORM_SPATIAL_FREQUENCY.value),
                      _join(path, "angle_law"))
    paths_path = _join(path, "paths")
    if law is PathLaw.FIXED:
        counts = _matrix(value["paths"], paths_path, shape, "paths")
        if np.any(counts != np.round(counts)) or np.any(counts < 1):
            raise ConfigError(paths_path, "fixed path counts must be integers >= 1")
        return LinkConfig(g=g, path_law=law, path_counts=counts.astype(int), angle_law=angle_law)
    mean = _float(value["paths"], paths_path, positive=True)
    return LinkConfig(g=g, path_law=law, mean_paths=mean, angle_law=angle_law)


def experiment_from_dict(raw: dict, path: str = "") -> ExperimentConfig:
    """Build one ExperimentConfig from a (sweep-free) config mapping."""
    for key in ("geometry", "link"):
        if key not in raw:
            raise ConfigError(_join(path, key), "required key missing")
    geometry = _geometry(raw["geometry"], _join(path, "geometry"))
    link = _link(raw["link"], _join(path, "link"), geometry)
    n_s = raw.get("n_s", "adaptive")
    if n_s != "adaptive":
        n_s = _int(n_s, _join(path, "n_s"))
    grid = parse_grid(raw.get("snr_grid_db", [0.0]), _join(path, "snr_grid_db"))
    trials = _int(raw.get("trials", 2000), _join(path, "trials"))
    seed = _int(raw.get("seed", 0), _join(path, "seed"), minimum=0, maximum=MAX_SEED)
    policy = _enum(PowerPolicy, raw.get("power_policy", "equal"), _join(path, "power_policy"))
    precoder = _enum(Precoder, raw.get("precoder", "beamsteering"), _join(path, "precoder"))
    try:
        return ExperimentConfig(geometry, link, n_s, grid, trials, seed, policy, precoder)
    except ValueError as exc:
        raise ConfigError(path or "config", str(exc)) from None


@dataclass(frozen=True)
class SweepCase:
    name: str
    overrides: dict


@dataclass(frozen=True)
class OutageOptions:
    stream_index: int
    rate_exponent: float = 0.0
    rate_floor_bits: float = 1.0


@dataclass(frozen=True)
class DmtOptions:
    architecture: Architecture
    params: dict
    d_grid: tuple[float, ...] | None = None


@dataclass
class RunConfig:
    """A validated config file: base experiment mapping, sweep cases and subcommand sections."""

    raw: dict
    sweep: list[SweepCase] = field(default_factory=list)
    outage: OutageOptions | None = None
    k_u: int | None = None
    dmt: DmtOptions | None = None

    def with_seed(self, seed: int) -> "RunConfig":
        _int(seed, "seed", minimum=0, maximum=MAX_SEED)
        out = copy.deepcopy(self)
        out.raw["seed"] = int(seed)
        return out

    def cases(self) -> list[tuple[str | None, dict]]:
        """(case name, resolved sweep-free mapping) for each sweep case, or (None, base) without a sweep."""
        if not self.sweep:
            return [(None, copy.deepcopy(self.raw))]
        return [(case.name, _apply_overrides(self.raw, case.overrides)) for case in self.sweep]

    def experiments(self) -> list[tuple[str | None, ExperimentConfig]]:
        out = []
        for k, (name, raw) in enumerate(self.cases()):
            where = f"sweep[{k}]" if name is not None else ""
            out.append((name, experiment_from_dict(raw, where)))
        return out


def _apply_overrides(base: dict, overrides: dict) -> dict:
    raw = copy.deepcopy(base)
    geometry = raw.setdefault("geometry", {})
    if "n" in overrides:
        for side in ("tx_array", "rx_array"):
            geometry.setdefault(side, {"kind": "ula"})["n_h"] = overrides["n"]
    if "k" in overrides:
        geometry["k_t"] = geometry["k_r"] = overrides["k"]
    if "n_s" in overrides:
        raw["n_s"] = overrides["n_s"]
    if "paths" in overrides:
        raw.setdefault("link", {})["paths"] = overrides["paths"]
    return raw


def _case_name(overrides: dict) -> str:
    parts = [f"{key}{overrides[key]}" for key in ("k", "n", "n_s", "paths") if key in overrides]
    return "_".join(parts).replace("n_s", "ns").replace(".", "p") or "base"


def _sweep(value, path: str) -> list[SweepCase]:
    if not isinstance(value, list) or not value:
        raise ConfigError(path, "expected a nonempty list of cases")
    cases, names = [], set()
    for k, item in enumerate(value):
        where = _join(path, k)
        _mapping(item, where, _SWEEP_KEYS)
        overrides = {}
        for key in ("n", "k", "n_s"):
            if key in item:
                overrides[key] = _int(item[key], _join(where, key))
        if "paths" in item:
            overrides["paths"] = item["paths"]
        name = item.get("name", _case_name(overrides))
        if not isinstance(name, str) or not name or any(c in name for c in "/\\"):
            raise ConfigError(_join(where, "name"), "case name must be a nonempty string without slashes")
        if name in names:
            raise ConfigError(_join(where, "name"), f"duplicate case name {name!r}")
        names.add(name)
        cases.append(SweepCase(name, overrides))
    return cases


def _outage(value, path: str) -> OutageOptions:
    _mapping(value, path, _OUTAGE_KEYS, {"stream_index"})
    r = _float(value.get("rate_exponent", 0.0), _join(path, "rate_exponent"), nonnegative=True)
    if r >= 1:
        raise ConfigError(_join(path, "rate_exponent"), "must be < 1")
    return OutageOptions(
        _int(value["stream_index"], _join(path, "stream_index")),
        r,
        _float(value.get("rate_floor_bits", 1.0), _join(path, "rate_floor_bits"), positive=True),
    )


_DMT_PARAMS = {
    Architecture.FULLY_CONNECTED: ("l_s",),
    Architecture.PARTIALLY_CONNECTED: ("k_t", "k_r", "paths"),
    Architecture.MULTIUSER_DOWNLINK: ("k_u", "k_b", "paths"),
    Architecture.MULTIUSER_UPLINK: ("k_u", "k_b", "paths"),
}


def parse_dmt(value, path: str = "dmt") -> DmtOptions:
    _mapping(value, path, _DMT_KEYS, {"architecture"})
    arch = _enum(Architecture, value["architecture"], _join(path, "architecture"))
    needed = _DMT_PARAMS[arch]
    extra = set(value) - set(needed) - {"architecture", "d_grid"}
    if extra:
        raise ConfigError(_join(path, sorted(extra)[0]), f"not a parameter of {arch.value}")
    params = {}
    for key in needed:
        if key not in value:
            raise ConfigError(_join(path, key), f"required for {arch.value}")
        params[key] = _int(value[key], _join(path, key))
    d_grid = None
    if "d_grid" in value:
        d_grid = parse_grid(value["d_grid"], _join(path, "d_grid"), unit="")
        if d_grid[0] < 0:
            raise ConfigError(_join(path, "d_grid"), "diversity gains must be >= 0")
    return DmtOptions(arch, params, d_grid)


def parse_config(data: Any) -> RunConfig:
    """Validate a loaded mapping. Experiment fields are checked eagerly on every sweep case."""
    if data is None:
        data = {}
    _mapping(data, "", _TOP_KEYS)
    raw = {k: copy.deepcopy(v) for k, v in data.items() if k not in ("sweep", "outage", "multiuser", "dmt", "k_u")}
    run = RunConfig(raw)
    if "sweep" in data:
        run.sweep = _sweep(data["sweep"], "sweep")
    if "outage" in data:
        run.outage = _outage(data["outage"], "outage")
    if "multiuser" in data:
        _mapping(data["multiuser"], "multiuser", _MULTIUSER_KEYS, _MULTIUSER_KEYS)
        run.k_u = _int(data["multiuser"]["k_u"], "multiuser.k_u")
    if "k_u" in data:
        run.k_u = _int(data["k_u"], "k_u")
    if "dmt" in data:
        run.dmt = parse_dmt(data["dmt"], "dmt")
    if "geometry" in raw or "link" in raw or run.sweep:
        run.experiments()
    return run


def load_config(path: str | Path) -> RunConfig:
    """Read a YAML or JSON config file."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError("", f"cannot read {path}: {exc.strerror}") from None
    try:
        data = json.loads(text) if path.suffix == ".json" else yaml.safe_load(text)
    except (yaml.YAMLError, json.JSONDecodeError) as exc:
        raise ConfigError("", f"cannot parse {path}: {exc}") from None
    return parse_config(data)
