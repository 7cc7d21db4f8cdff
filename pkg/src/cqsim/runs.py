"""Scenario runners producing result bundles for the command-line tool."""

from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np

from . import __version__
from .core import CoupledParams, splitting
from .dynamics import (
    INPUT_STATES,
    NoiseModel,
    ReadoutModel,
    simulate_conditional,
    simulate_correlated,
    simulate_ramsey,
)
from .estimators import (
    CONDITIONAL_PI,
    INPUT_LABELS,
    FitError,
    NormalizationSet,
    build_truth_table,
    calibrate_right,
    fit_ramsey,
    inquisition,
    mle_project,
    project_pair,
    read_trace_csv,
    subtract_crosstalk,
)
from .scenario import Scenario

log = logging.getLogger(__name__)

PRINTED_TABLE_TOL = 0.02
"""Column-sum tolerance for tables copied from two-decimal printouts."""


@dataclass
class Observable:
    axes: tuple[str, ...]
    values: np.ndarray

    def __post_init__(self) -> None:
        self.values = np.asarray(self.values)


@dataclass
class ResultBundle:
    scenario: dict
    axes: dict[str, list]
    observables: dict[str, Observable]
    provenance: dict[str, Any]
    messages: list[str] = field(default_factory=list)

    def scalar(self, name: str) -> float:
        return float(self.observables[name].values)


def _params_block(params: CoupledParams | None) -> dict | None:
    if params is None:
        return None

    def qubit(q):
        return {"tc_ghz": q.tc, "eps_init_ghz": q.eps_init, "eps_idle_ghz": q.eps_idle,
                "latch_state_index": q.latch_state_index}

    return {"left": qubit(params.left), "right": qubit(params.right),
            "g_ghz": params.g, "g_latch_ghz": params.g_latch}


def _noise_block(noise: NoiseModel, channels) -> dict:
    _, weights = noise.sample(channels)
    return {
        "sigma_eps_left_ueV": noise.sigma_eps_left,
        "sigma_eps_right_ueV": noise.sigma_eps_right,
        "sigma_eps_left_ghz": noise.sigma_ghz("L"),
        "sigma_eps_right_ghz": noise.sigma_ghz("R"),
        "scheme": noise.scheme,
        "nodes_per_axis": noise.nodes,
        "samples": noise.samples,
        "seed": noise.seed,
        "evaluation_points": int(len(weights)),
    }


def _readout_block(readout: ReadoutModel) -> dict:
    return {"gamma_load_per_ns": None if math.isinf(readout.gamma_load) else readout.gamma_load,
            "t1_ns": readout.t1, "t_latch_ns": readout.t_latch,
            "efficiency": readout.efficiency}


def _provenance(sc: Scenario, channels, program: str | None) -> dict:
    protocol = {k: v for k, v in sc.protocol.items() if k != "base_dir"}
    return {
        "code": "cqsim",
        "version": __version__,
        "kind": sc.kind,
        "params": _params_block(sc.params),
        "noise": _noise_block(sc.noise, channels) if channels else None,
        "readout": _readout_block(sc.readout),
        "protocol": protocol,
        "program": program,
        "units": {"energy": "GHz (E/h)", "time": "ps", "noise": "ueV"},
    }


def run_ramsey(sc: Scenario, *, threads: int = 1) -> ResultBundle:
    """Latch-probability map over (eps, tau) with optional per-linecut fits."""
    ch = sc.protocol["channel"]
    qubit = sc.params.qubit(ch)
    eps, tau = sc.grids["eps"], sc.grids["tau"]
    res = simulate_ramsey(qubit, eps, tau, sc.noise, sc.readout, channel=ch,
                          n=sc.protocol["n"], threads=threads, program=sc.program)
    obs = {
        "latch": Observable(("eps", "tau"), res.observables["latch"]),
        "p_inner": Observable(("eps", "tau"), res.observables["p_inner"]),
    }
    messages = []
    if sc.protocol["fit"]:
        freq = np.full(len(eps), np.nan)
        t2 = np.full(len(eps), np.nan)
        for i, e in enumerate(eps):
            try:
                fit = fit_ramsey((tau, res.observables["latch"][i]), time_scale=1e-3)
            except FitError as exc:
                messages.append(f"fit at eps={e:.12g} GHz failed: {exc}")
                continue
            freq[i] = fit.frequency
            t2[i] = fit.t2star
        obs["fit_frequency_ghz"] = Observable(("eps",), freq)
        obs["fit_t2star_ns"] = Observable(("eps",), t2)
        obs["closed_form_ghz"] = Observable(("eps",), np.array([splitting(e, qubit.tc)
                                                                for e in eps]))
    return ResultBundle(sc.raw, {"eps": eps.tolist(), "tau": tau.tolist()}, obs,
                        _provenance(sc, (ch,), res.meta["program"]), messages)


def target_spectrum(latch_r: np.ndarray, tau_r: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Mean magnitude spectrum of the target map along ``tau_R`` (GHz axis).

    Each ``tau_R`` linecut is mean-subtracted before its FFT; magnitudes are
    averaged over ``tau_L``.
    """
    steps = np.diff(tau_r)
    if len(tau_r) < 4 or not np.allclose(steps, steps[0], rtol=0, atol=1e-9):
        raise ValueError("tau_R grid must be uniform with at least 4 points")
    x = latch_r - latch_r.mean(axis=1, keepdims=True)
    mag = np.abs(np.fft.rfft(x, axis=1)).mean(axis=0)
    return np.fft.rfftfreq(len(tau_r), steps[0]) * 1e3, mag


def spectral_peaks(freqs: np.ndarray, mag: np.ndarray) -> np.ndarray:
    """Frequencies of interior local maxima, strongest first."""
    idx = [i for i in range(1, len(mag) - 1) if mag[i] > mag[i - 1] and mag[i] >= mag[i + 1]]
    idx.sort(key=lambda i: (-mag[i], i))
    return freqs[idx]


def run_correlated(sc: Scenario, *, threads: int = 1) -> ResultBundle:
    """Both latch maps over (tau_L, tau_R) plus the target spectrum."""
    tl, tr = sc.grids["tau_L"], sc.grids["tau_R"]
    res = simulate_correlated(sc.params, tl, tr, sc.protocol["offset_ps"], sc.noise,
                              sc.readout, threads=threads, program=sc.program)
    obs = {
        "latch_L": Observable(("tau_L", "tau_R"), res.observables["latch_L"]),
        "latch_R": Observable(("tau_L", "tau_R"), res.observables["latch_R"]),
    }
    axes = {"tau_L": tl.tolist(), "tau_R": tr.tolist()}
    messages = []
    try:
        freqs, mag = target_spectrum(res.observables["latch_R"], tr)
    except ValueError as exc:
        messages.append(f"target spectrum skipped: {exc}")
    else:
        axes["freq_R"] = freqs.tolist()
        obs["spectrum_R"] = Observable(("freq_R",), mag)
        p = sc.params
        obs["expected_unexcited_ghz"] = Observable((), splitting(0.0, p.right.tc))
        obs["expected_excited_ghz"] = Observable((), splitting(p.g, p.right.tc))
    return ResultBundle(sc.raw, axes, obs, _provenance(sc, ("L", "R"), res.meta["program"]),
                        messages)


def first_maximum(x: np.ndarray, y: np.ndarray) -> float:
    """Abscissa of the first interior local maximum, parabola-refined."""
    for i in range(1, len(y) - 1):
        if y[i] >= y[i - 1] and y[i] > y[i + 1]:
            denom = y[i - 1] - 2 * y[i] + y[i + 1]
            shift = 0.5 * (y[i - 1] - y[i + 1]) / denom if denom != 0 else 0.0
            return float(x[i] + shift * (x[i + 1] - x[i - 1]) / 2)
    return math.nan


def _analysis_only(sc: Scenario) -> ResultBundle:
    measured = np.array(sc.protocol["columns"], dtype=float)
    projected = build_truth_table([mle_project(measured[:, j]) for j in range(4)])
    obs = {
        "table": Observable(("output", "input"), projected.matrix),
        "inquisition": Observable((), inquisition(projected, CONDITIONAL_PI)),
        "inquisition_unprojected": Observable(
            (), inquisition(measured, CONDITIONAL_PI, column_tol=PRINTED_TABLE_TOL)),
    }
    axes = {"output": list(INPUT_LABELS), "input": list(INPUT_LABELS)}
    return ResultBundle(sc.raw, axes, obs, _provenance(sc, (), None))


def run_truthtable(sc: Scenario, *, threads: int = 1) -> ResultBundle:
    """Truth table versus target drive time for the four inputs.

    With ``protocol.columns`` the simulation is skipped and the given table
    is projected and scored.
    """
    if "columns" in sc.protocol:
        return _analysis_only(sc)
    tau = sc.grids["tau_t"]
    grid = sc.protocol["prep_grid_ps"]
    mode = sc.protocol["projection"]
    runs = {s: simulate_conditional(sc.params, s, tau, sc.noise, sc.readout,
                                    prep_grid_ps=grid, threads=threads, program=sc.program)
            for s in INPUT_STATES}
    obs: dict[str, Observable] = {}
    for s in INPUT_STATES:
        obs[f"latch_L_{s}"] = Observable(("tau_t",), runs[s].observables["latch_L"])
        obs[f"latch_R_{s}"] = Observable(("tau_t",), runs[s].observables["latch_R"])
    tables = []
    for k in range(len(tau)):
        cols = [project_pair(runs[s].observables["latch_L"][k],
                             runs[s].observables["latch_R"][k], mode=mode)
                for s in INPUT_STATES]
        tables.append(build_truth_table(cols))
    score = np.array([inquisition(t, CONDITIONAL_PI) for t in tables])
    best = int(np.argmax(score))
    obs["inquisition"] = Observable(("tau_t",), score)
    obs["best_table"] = Observable(("output", "input"), tables[best].matrix)
    obs["best_tau_t_ps"] = Observable((), float(tau[best]))
    obs["best_inquisition"] = Observable((), float(score[best]))
    obs["pi_time_00_ps"] = Observable((), first_maximum(tau, runs["00"].observables["latch_R"]))
    if "compare_table" in sc.protocol:
        obs["compare_inquisition"] = Observable(
            (), inquisition(np.array(sc.protocol["compare_table"]), CONDITIONAL_PI,
                            column_tol=PRINTED_TABLE_TOL))
    axes = {"tau_t": tau.tolist(), "output": list(INPUT_LABELS), "input": list(INPUT_LABELS)}
    prov = _provenance(sc, ("L", "R"), runs["00"].meta["program"])
    prov["preparation_ps"] = {s: {"prep_L": runs[s].meta["prep_L_ps"],
                                  "prep_R": runs[s].meta["prep_R_ps"]} for s in INPUT_STATES}
    return ResultBundle(sc.raw, axes, obs, prov)


def run_analyze(sc: Scenario) -> ResultBundle:
    """Calibrate, remove crosstalk and project a pair of sensor traces."""
    base = Path(sc.base_dir or ".")
    paths = {k: base / v for k, v in sc.protocol["traces"].items()}
    right = read_trace_csv(paths["right"], "right")
    left = read_trace_csv(paths["left"], "left")
    if len(left) != len(right) or np.any(left.axis != right.axis):
        raise ValueError("left and right traces must share the same axis values")
    norm_raw = sc.protocol["normalization"]
    messages: list[str] = []
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        norm = NormalizationSet.from_mapping(norm_raw)
    messages += [str(w.message) for w in caught]
    p_r_raw = calibrate_right(right.values, norm)
    p_l_raw = subtract_crosstalk(left.values, p_r_raw, norm)
    outside = int(np.sum((p_r_raw < 0) | (p_r_raw > 1)) + np.sum((p_l_raw < 0) | (p_l_raw > 1)))
    if outside:
        messages.append(f"{outside} raw probabilities fell outside [0, 1]; projected")
    p_r = np.array([mle_project([1 - p, p])[1] for p in p_r_raw])
    p_l = np.array([mle_project([1 - p, p])[1] for p in p_l_raw])
    for m in messages:
        log.warning(m)
    obs = {
        "p_right_raw": Observable(("axis",), p_r_raw),
        "p_left_raw": Observable(("axis",), p_l_raw),
        "p_right": Observable(("axis",), p_r),
        "p_left": Observable(("axis",), p_l),
    }
    prov = _provenance(sc, (), None)
    prov["normalization"] = {k: float(norm_raw[k]) for k in sorted(norm_raw)}
    prov["traces"] = dict(sc.protocol["traces"])
    return ResultBundle(sc.raw, {"axis": left.axis.tolist()}, obs, prov, messages)


RUNNERS = {
    "ramsey": run_ramsey,
    "correlated": run_correlated,
    "truthtable": run_truthtable,
    "analyze": lambda sc, threads=1: run_analyze(sc),
}


def run_scenario(sc: Scenario, *, threads: int = 1) -> ResultBundle:
    return RUNNERS[sc.kind](sc, threads=threads)
