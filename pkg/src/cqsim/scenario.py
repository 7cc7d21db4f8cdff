"""Scenario configuration files.

A scenario is a JSON object::

    {
      "name": "fig2c",
      "kind": "ramsey" | "correlated" | "truthtable" | "analyze",
      "params":   {"tc_left": GHz, "tc_right": GHz, "g": GHz,
                   "g_latch": GHz, "eps_init": GHz, "eps_idle": GHz},
      "noise":    {"sigma_eps_left": ueV, "sigma_eps_right": ueV,
                   "scheme": "quadrature" | "montecarlo",
                   "nodes": int, "samples": int, "seed": int},
      "readout":  {"gamma_load": 1/ns or null, "t1": ns, "t_latch": ns},
      "sweep":    {"<axis>": {"start": x, "stop": x, "step": x} | {"values": [...]}},
      "protocol": {...},
      "program":  "optional pulse-program text replacing the built-in one",
      "output":   {"formats": ["csv", "json", "svg"]}
    }

Grids include ``stop`` when it lies on the step lattice. Unknown keys are
rejected so typos surface as errors.
"""

from __future__ import annotations

import copy
import json
import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Any

import numpy as np

from .core import CoupledParams, InvalidParameterError
from .dynamics import NoiseModel, ReadoutModel
from .estimators import NormalizationSet
from .pulseprog import PulseProgramError, parse_program

KINDS = ("ramsey", "correlated", "truthtable", "analyze")
FORMATS = ("csv", "json", "svg")
PRESETS = ("fig2b", "fig2c", "fig3", "fig4")

SWEEP_AXES = {
    "ramsey": ("eps", "tau"),
    "correlated": ("tau_L", "tau_R"),
    "truthtable": ("tau_t",),
    "analyze": (),
}

PROTOCOL_KEYS = {
    "ramsey": {"channel", "n", "fit"},
    "correlated": {"offset_ps"},
    "truthtable": {"prep_grid_ps", "projection", "compare_table", "columns"},
    "analyze": {"traces", "normalization", "base_dir"},
}

_TOP_KEYS = {"name", "kind", "params", "noise", "readout", "sweep", "protocol", "program",
             "output", "description"}
_PARAM_KEYS = {"tc_left", "tc_right", "g", "g_latch", "eps_init", "eps_idle"}
_NOISE_KEYS = {"sigma_eps_left", "sigma_eps_right", "scheme", "nodes", "samples", "seed"}
_READOUT_KEYS = {"gamma_load", "t1", "t_latch"}
_MAX_GRID = 1_000_000


class ScenarioError(ValueError):
    """Invalid scenario; the message starts with the offending field."""

    def __init__(self, field_path: str, message: str):
        super().__init__(f"{field_path}: {message}")
        self.field = field_path


@dataclass(frozen=True)
class Scenario:
    name: str
    kind: str
    params: CoupledParams | None
    noise: NoiseModel
    readout: ReadoutModel
    grids: dict[str, np.ndarray]
    protocol: dict[str, Any]
    program: str | None
    formats: tuple[str, ...]
    base_dir: str | None = None
    raw: dict = field(repr=False, compare=False, default_factory=dict)

    def with_overrides(self, *, seed: int | None = None) -> "Scenario":
        if seed is None:
            return self
        raw = copy.deepcopy(self.raw)
        raw.setdefault("noise", {})["seed"] = int(seed)
        return scenario_from_dict(raw, base_dir=self.base_dir)


def _check_keys(obj: Any, allowed: set[str], where: str) -> dict:
    if not isinstance(obj, dict):
        raise ScenarioError(where, f"expected an object, got {type(obj).__name__}")
    extra = sorted(set(obj) - allowed)
    if extra:
        raise ScenarioError(f"{where}.{extra[0]}", "unknown key")
    return obj


def _number(obj: dict, key: str, where: str, *, default=None, required=False,
            allow_none=False) -> float | None:
    if key not in obj:
        if required:
            raise ScenarioError(f"{where}.{key}", "required")
        return default
    value = obj[key]
    if value is None and allow_none:
        return None
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ScenarioError(f"{where}.{key}", f"expected a number, got {value!r}")
    if not math.isfinite(value):
        raise ScenarioError(f"{where}.{key}", "must be finite")
    return float(value)


def _integer(obj: dict, key: str, where: str, default: int) -> int:
    value = obj.get(key, default)
    if isinstance(value, bool) or not isinstance(value, int):
        raise ScenarioError(f"{where}.{key}", f"expected an integer, got {value!r}")
    return value


def expand_grid(grid: Any, where: str) -> np.ndarray:
    """Grid values from ``{"start", "stop", "step"}`` or ``{"values"}``."""
    if not isinstance(grid, dict):
        raise ScenarioError(where, "expected an object with start/stop/step or values")
    if "values" in grid:
        _check_keys(grid, {"values"}, where)
        values = grid["values"]
        if not isinstance(values, list) or not values:
            raise ScenarioError(f"{where}.values", "must be a non-empty list")
        out = []
        for i, v in enumerate(values):
            if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v):
                raise ScenarioError(f"{where}.values[{i}]", f"expected a finite number, got {v!r}")
            out.append(float(v))
        return np.array(out)
    _check_keys(grid, {"start", "stop", "step"}, where)
    start = _number(grid, "start", where, required=True)
    stop = _number(grid, "stop", where, required=True)
    step = _number(grid, "step", where, required=True)
    if step <= 0:
        raise ScenarioError(f"{where}.step", "must be > 0")
    if stop < start:
        raise ScenarioError(f"{where}.stop", "must be >= start")
    n = int(math.floor((stop - start) / step + 1e-9)) + 1
    if n > _MAX_GRID:
        raise ScenarioError(where, f"grid has {n} points (limit {_MAX_GRID})")
    return start + step * np.arange(n)


def _params(raw: dict, kind: str) -> CoupledParams:
    where = "params"
    p = _check_keys(raw.get("params", {}), _PARAM_KEYS, where)
    tc_l = _number(p, "tc_left", where, required=True)
    tc_r = _number(p, "tc_right", where, required=True)
    g = _number(p, "g", where, default=0.0)
    eps_init = _number(p, "eps_init", where, default=150.0)
    eps_idle = _number(p, "eps_idle", where, default=None, allow_none=True)
    g_latch = _number(p, "g_latch", where, default=None, allow_none=True)
    for key, value in (("tc_left", tc_l), ("tc_right", tc_r)):
        if not value > 0:
            raise ScenarioError(f"{where}.{key}", f"must be > 0, got {value}")
    if g < 0:
        raise ScenarioError(f"{where}.g", f"must be >= 0, got {g}")
    if kind == "truthtable" and eps_idle is None:
        raise ScenarioError(f"{where}.eps_idle", "required for the conditional protocol")
    try:
        return CoupledParams.default_orientation(tc_l, tc_r, g, eps_init=eps_init,
                                                 eps_idle=eps_idle, g_latch=g_latch)
    except InvalidParameterError as exc:
        name = str(exc).split(":", 1)[0].split()[0]
        key = name if name in _PARAM_KEYS else "eps_init"
        raise ScenarioError(f"{where}.{key}", str(exc)) from None


def _noise(raw: dict) -> NoiseModel:
    where = "noise"
    n = _check_keys(raw.get("noise", {}), _NOISE_KEYS, where)
    sl = _number(n, "sigma_eps_left", where, default=0.0)
    sr = _number(n, "sigma_eps_right", where, default=0.0)
    for key, v in (("sigma_eps_left", sl), ("sigma_eps_right", sr)):
        if v < 0:
            raise ScenarioError(f"{where}.{key}", "must be >= 0")
    scheme = n.get("scheme", "quadrature")
    if scheme not in ("quadrature", "montecarlo"):
        raise ScenarioError(f"{where}.scheme", f"unknown scheme {scheme!r}")
    nodes = _integer(n, "nodes", where, 15)
    if nodes < 1 or nodes % 2 == 0:
        raise ScenarioError(f"{where}.nodes", f"must be odd and >= 1, got {nodes}")
    samples = _integer(n, "samples", where, 100_000)
    if samples < 2:
        raise ScenarioError(f"{where}.samples", "must be >= 2")
    seed = _integer(n, "seed", where, 0)
    return NoiseModel(sl, sr, scheme, nodes, samples, seed)


def _readout(raw: dict) -> ReadoutModel:
    where = "readout"
    r = _check_keys(raw.get("readout", {}), _READOUT_KEYS, where)
    gamma = _number(r, "gamma_load", where, default=None, allow_none=True)
    t1 = _number(r, "t1", where, default=10.0)
    t_latch = _number(r, "t_latch", where, default=150.0)
    for key, v in (("gamma_load", gamma), ("t1", t1), ("t_latch", t_latch)):
        if v is not None and not v > 0:
            raise ScenarioError(f"{where}.{key}", "must be > 0")
    return ReadoutModel(math.inf if gamma is None else gamma, t1, t_latch)


def _table(value: Any, where: str) -> list[list[float]]:
    if (not isinstance(value, list) or len(value) != 4
            or any(not isinstance(r, list) or len(r) != 4 for r in value)):
        raise ScenarioError(where, "expected a 4x4 nested list")
    for i, row in enumerate(value):
        for j, v in enumerate(row):
            if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v):
                raise ScenarioError(f"{where}[{i}][{j}]", f"expected a finite number, got {v!r}")
    return [[float(v) for v in row] for row in value]


def _protocol(raw: dict, kind: str, base_dir: str | None) -> dict:
    where = "protocol"
    p = dict(_check_keys(raw.get("protocol", {}), PROTOCOL_KEYS[kind], where))
    if kind == "ramsey":
        ch = p.setdefault("channel", "R")
        if ch not in ("L", "R"):
            raise ScenarioError(f"{where}.channel", f"must be 'L' or 'R', got {ch!r}")
        n = _integer(p, "n", where, 0)
        if n < 0:
            raise ScenarioError(f"{where}.n", "must be >= 0")
        p["n"] = n
        fit = p.setdefault("fit", True)
        if not isinstance(fit, bool):
            raise ScenarioError(f"{where}.fit", "must be true or false")
    elif kind == "correlated":
        off = _number(p, "offset_ps", where, default=150.0)
        if off < 0:
            raise ScenarioError(f"{where}.offset_ps", "must be >= 0")
        p["offset_ps"] = off
    elif kind == "truthtable":
        grid = _number(p, "prep_grid_ps", where, default=40.0, allow_none=True)
        if grid is not None and grid <= 0:
            raise ScenarioError(f"{where}.prep_grid_ps", "must be > 0 or null")
        p["prep_grid_ps"] = grid
        mode = p.setdefault("projection", "per_qubit")
        if mode not in ("per_qubit", "joint"):
            raise ScenarioError(f"{where}.projection", f"unknown mode {mode!r}")
        if "compare_table" in p:
            p["compare_table"] = _table(p["compare_table"], f"{where}.compare_table")
        if "columns" in p:
            p["columns"] = _table(p["columns"], f"{where}.columns")
    elif kind == "analyze":
        traces = _check_keys(p.get("traces"), {"left", "right"}, f"{where}.traces") \
            if "traces" in p else None
        if traces is None or set(traces) != {"left", "right"}:
            raise ScenarioError(f"{where}.traces", "needs 'left' and 'right' CSV paths")
        for key, value in traces.items():
            if not isinstance(value, str):
                raise ScenarioError(f"{where}.traces.{key}", "expected a file path")
        if "normalization" not in p:
            raise ScenarioError(f"{where}.normalization", "required")
        try:
            NormalizationSet.from_mapping(
                _check_keys(p["normalization"], {"r00", "r01", "l00", "l01", "l10", "l11"},
                            f"{where}.normalization"))
        except (TypeError, ValueError) as exc:
            if isinstance(exc, ScenarioError):
                raise
            raise ScenarioError(f"{where}.normalization", str(exc)) from None
        if p["normalization"]["r01"] == p["normalization"]["r00"]:
            raise ScenarioError(f"{where}.normalization.r01", "must differ from r00")
        p["base_dir"] = base_dir
    return p


def scenario_from_dict(raw: dict, *, base_dir: str | None = None) -> Scenario:
    """Validate a parsed JSON scenario."""
    _check_keys(raw, _TOP_KEYS, "scenario")
    name = raw.get("name")
    if not isinstance(name, str) or not name or any(c in name for c in "/\\\0"):
        raise ScenarioError("name", "must be a non-empty string without path separators")
    kind = raw.get("kind")
    if kind not in KINDS:
        raise ScenarioError("kind", f"must be one of {', '.join(KINDS)}, got {kind!r}")

    params = _params(raw, kind) if kind != "analyze" else None
    noise = _noise(raw)
    readout = _readout(raw)

    sweep = _check_keys(raw.get("sweep", {}), set(SWEEP_AXES[kind]), "sweep")
    analysis_only = kind == "truthtable" and "columns" in raw.get("protocol", {})
    grids = {}
    for axis in SWEEP_AXES[kind]:
        if axis not in sweep:
            if analysis_only:
                continue
            raise ScenarioError(f"sweep.{axis}", "required")
        grids[axis] = expand_grid(sweep[axis], f"sweep.{axis}")
    for axis in grids:
        if axis.startswith("tau") and np.any(grids[axis] < 0):
            raise ScenarioError(f"sweep.{axis}", "durations must be >= 0")

    protocol = _protocol(raw, kind, base_dir)

    program = raw.get("program")
    if program is not None:
        if not isinstance(program, str):
            raise ScenarioError("program", "expected pulse-program text")
        try:
            parse_program(program)
        except PulseProgramError as exc:
            raise ScenarioError("program", str(exc)) from None

    out = _check_keys(raw.get("output", {}), {"formats"}, "output")
    formats = out.get("formats", list(FORMATS))
    if not isinstance(formats, list) or not formats or any(f not in FORMATS for f in formats):
        raise ScenarioError("output.formats", f"must be a non-empty subset of {list(FORMATS)}")

    return Scenario(name=name, kind=kind, params=params, noise=noise, readout=readout,
                    grids=grids, protocol=protocol, program=program,
                    formats=tuple(dict.fromkeys(formats)), base_dir=base_dir,
                    raw=copy.deepcopy(raw))


def load_scenario(path) -> Scenario:
    """Read and validate a scenario file; I/O errors propagate as ``OSError``."""
    path = Path(path)
    text = path.read_text(encoding="utf-8")
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ScenarioError("scenario", f"invalid JSON: {exc}") from None
    return scenario_from_dict(raw, base_dir=str(path.parent))


def preset_dict(name: str) -> dict:
    if name not in PRESETS:
        raise ScenarioError("preset", f"unknown preset {name!r}; choose from {', '.join(PRESETS)}")
    text = resources.files("cqsim").joinpath("presets", f"{name}.json").read_text("utf-8")
    return json.loads(text)


def load_preset(name: str) -> Scenario:
    return scenario_from_dict(preset_dict(name))
