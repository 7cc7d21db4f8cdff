"""Density-matrix evolution through detuning timelines.

The Hamiltonian is piecewise constant, so each interval is propagated
exactly with ``U = V exp(-2j*pi*diag(E)*dt) V^dagger`` from an eigen
decomposition. Quasistatic detuning noise is handled by evaluating the whole
sweep at shifted detunings and taking a weighted sum, either on a
Gauss-Hermite tensor grid or over seeded Monte Carlo draws.

A qubit can be *measured* at a given time: its position-basis coherences are
erased and, from then on, it has no tunnelling and couples to its partner
with ``g_latch``. That models latched readout projecting the qubit while the
partner keeps evolving.
"""

from __future__ import annotations

import itertools
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np

from . import core
from .core import CoupledParams, QubitParams, conditional_detuning
from .pulseprog import PulseProgram, Timeline, TimelineError, compile_timeline, parse_program

_ZL = np.kron(core.SIGMA_Z, core.IDENTITY)
_ZR = np.kron(core.IDENTITY, core.SIGMA_Z)
_BIT = {"L": np.array([0, 0, 1, 1]), "R": np.array([0, 1, 0, 1])}


@dataclass(frozen=True)
class NoiseModel:
    """Quasistatic Gaussian detuning noise.

    Parameters
    ----------
    sigma_eps_left, sigma_eps_right : float
        Standard deviations in micro-eV.
    scheme : {"quadrature", "montecarlo"}
    nodes : int
        Gauss-Hermite nodes per noisy axis (odd, so zero is sampled).
    samples, seed : int
        Monte Carlo draw count and seed.
    """

    sigma_eps_left: float = 0.0
    sigma_eps_right: float = 0.0
    scheme: str = "quadrature"
    nodes: int = 15
    samples: int = 100_000
    seed: int = 0

    def __post_init__(self) -> None:
        if self.sigma_eps_left < 0 or self.sigma_eps_right < 0:
            raise ValueError("noise sigmas must be >= 0")
        if self.scheme not in ("quadrature", "montecarlo"):
            raise ValueError(f"unknown noise scheme {self.scheme!r}")
        if self.scheme == "quadrature" and (self.nodes < 1 or self.nodes % 2 == 0):
            raise ValueError(f"quadrature node count must be odd and >= 1, got {self.nodes}")
        if self.scheme == "montecarlo" and self.samples < 2:
            raise ValueError("Monte Carlo needs at least 2 samples")

    @classmethod
    def noiseless(cls) -> "NoiseModel":
        return cls()

    def sigma_ghz(self, channel: str) -> float:
        if channel == "L":
            return core.ueV_to_ghz(self.sigma_eps_left)
        if channel == "R":
            return core.ueV_to_ghz(self.sigma_eps_right)
        raise KeyError(f"no noise axis for channel {channel!r}")

    def sample(self, channels: Sequence[str]) -> tuple[np.ndarray, np.ndarray]:
        """Detuning offsets ``(n, len(channels))`` in GHz and weights summing to 1."""
        sigmas = [self.sigma_ghz(c) for c in channels]
        if self.scheme == "montecarlo" and any(sigmas):
            rng = np.random.default_rng(self.seed)
            draws = rng.standard_normal((self.samples, len(channels)))
            return draws * np.array(sigmas), np.full(self.samples, 1.0 / self.samples)
        axes = []
        for s in sigmas:
            if s == 0 or self.nodes == 1:
                axes.append((np.zeros(1), np.ones(1)))
            else:
                x, w = np.polynomial.hermite_e.hermegauss(self.nodes)
                axes.append((s * x, w / w.sum()))
        offsets = np.array(list(itertools.product(*(a[0] for a in axes))), dtype=float)
        weights = np.array([math.prod(ws) for ws in itertools.product(*(a[1] for a in axes))])
        return offsets.reshape(len(weights), len(channels)), weights


@dataclass(frozen=True)
class ReadoutModel:
    """Latched readout: reservoir load rate races charge relaxation.

    ``gamma_load`` may be ``inf`` for an ideal latch.
    """

    gamma_load: float = math.inf
    t1: float = 10.0
    t_latch: float = 150.0

    def __post_init__(self) -> None:
        for name in ("gamma_load", "t1", "t_latch"):
            value = getattr(self, name)
            if not value > 0:
                raise ValueError(f"{name} must be > 0, got {value}")

    @property
    def efficiency(self) -> float:
        if math.isinf(self.gamma_load):
            return 1.0
        return self.gamma_load / (self.gamma_load + 1.0 / self.t1)


def latched_signal(p_inner, readout: ReadoutModel):
    """Probability of ending latched given inner-dot population ``p_inner``."""
    return np.asarray(p_inner) * readout.efficiency if np.ndim(p_inner) else \
        float(p_inner) * readout.efficiency


def excited_population(rho: np.ndarray, qubit: str, params: CoupledParams | QubitParams) -> float:
    """Inner-dot (latch-triggering) population of one qubit."""
    rho = np.asarray(rho)
    if rho.shape == (2, 2):
        q = params if isinstance(params, QubitParams) else params.qubit(qubit)
        return float(rho[q.latch_state_index, q.latch_state_index].real)
    if rho.shape != (4, 4):
        raise ValueError(f"unsupported density-matrix shape {rho.shape}")
    q = params.qubit(qubit)
    mask = _BIT[qubit] == q.latch_state_index
    return float(np.diagonal(rho).real[mask].sum())


@dataclass
class SimResult:
    """Observables on a sweep grid.

    ``axes`` maps each swept binding name to its values (in order of the
    array dimensions). ``observables`` holds arrays of the grid shape;
    ``stderr`` is filled for Monte Carlo runs.
    """

    axes: dict[str, np.ndarray]
    observables: dict[str, np.ndarray]
    states: np.ndarray | None = None
    stderr: dict[str, np.ndarray] | None = None
    meta: dict = field(default_factory=dict)

    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(len(v) for v in self.axes.values())


class _Engine:
    """Batched propagation over noise offsets with an eigen-decomposition cache."""

    def __init__(self, params: CoupledParams | QubitParams, channels: Sequence[str],
                 offsets: np.ndarray):
        self.params = params
        self.channels = tuple(channels)
        self.offsets = offsets
        self.n = offsets.shape[0]
        self._cache: dict = {}
        if len(self.channels) == 1 and (isinstance(params, QubitParams)
                                        or self.channels[0] in ("L", "R")):
            if isinstance(params, CoupledParams):
                self.qubits = {self.channels[0]: params.qubit(self.channels[0])}
            else:
                self.qubits = {self.channels[0]: params}
            self.dim = 2
        elif set(self.channels) == {"L", "R"} and isinstance(params, CoupledParams):
            self.qubits = {"L": params.left, "R": params.right}
            self.dim = 4
        else:
            raise TimelineError(
                f"channels {self.channels} do not match the parameters "
                "(one channel, or channels 'L' and 'R' with CoupledParams)")

    def _hamiltonians(self, levels: Mapping[str, float], frozen: frozenset) -> np.ndarray:
        if self.dim == 2:
            (name,) = self.channels
            tc = 0.0 if name in frozen else self.qubits[name].tc
            h0 = core.build_h1q(levels[name], tc)
            return h0[None] + (self.offsets[:, 0] / 2)[:, None, None] * core.SIGMA_Z[None]
        p = self.params
        h0 = core.build_h2q(
            levels["L"], levels["R"], p,
            tc_left=0.0 if "L" in frozen else p.left.tc,
            tc_right=0.0 if "R" in frozen else p.right.tc,
            g=p.g_latch if frozen else p.g,
        )
        iL, iR = self.channels.index("L"), self.channels.index("R")
        return (h0[None]
                + (self.offsets[:, iL] / 2)[:, None, None] * _ZL[None]
                + (self.offsets[:, iR] / 2)[:, None, None] * _ZR[None])

    def _eig(self, levels: Mapping[str, float], frozen: frozenset):
        key = (tuple(levels[c] for c in self.channels), frozen)
        hit = self._cache.get(key)
        if hit is None:
            hit = np.linalg.eigh(self._hamiltonians(levels, frozen))
            self._cache[key] = hit
        return hit

    def step(self, rho: np.ndarray, levels, frozen: frozenset, dt_ns: float) -> np.ndarray:
        evals, evecs = self._eig(levels, frozen)
        phases = np.exp(-2j * np.pi * evals * dt_ns)
        u = (evecs * phases[:, None, :]) @ np.conj(np.swapaxes(evecs, -1, -2))
        return u @ rho @ np.conj(np.swapaxes(u, -1, -2))

    def dephase(self, rho: np.ndarray, qubit: str) -> np.ndarray:
        if self.dim == 2:
            return rho * np.eye(2)[None]
        bits = _BIT[qubit]
        return rho * (bits[:, None] == bits[None, :])[None]

    def populations(self, rho: np.ndarray) -> dict[str, np.ndarray]:
        diag = np.diagonal(rho, axis1=-2, axis2=-1).real
        out = {}
        for name, q in self.qubits.items():
            if self.dim == 2:
                out[name] = diag[:, q.latch_state_index]
            else:
                out[name] = diag[:, _BIT[name] == q.latch_state_index].sum(axis=1)
        return out

    def run(self, rho0: np.ndarray, timeline: Timeline,
            measure_at: Mapping[str, float] | None = None) -> np.ndarray:
        rho = np.broadcast_to(rho0, (self.n,) + rho0.shape).astype(complex)
        if tuple(sorted(timeline.names)) != tuple(sorted(self.channels)):
            raise TimelineError(
                f"timeline channels {timeline.names} != expected {self.channels}")
        measure_at = dict(measure_at or {})
        frozen: set[str] = set()

        def measure_due(t: float) -> None:
            nonlocal rho
            for name in self.channels:
                if name not in frozen and name in measure_at and measure_at[name] <= t:
                    rho = self.dephase(rho, name)
                    frozen.add(name)

        if timeline.duration <= 0:
            measure_due(math.inf)
            return rho
        for t0, t1, levels in timeline.intervals():
            cuts = sorted({t for t in measure_at.values() if t0 < t < t1})
            start = t0
            for t in cuts + [t1]:
                measure_due(start)
                rho = self.step(rho, levels, frozenset(frozen), (t - start) * 1e-3)
                start = t
        measure_due(math.inf)
        return rho


def propagate_piecewise(rho0: np.ndarray, timeline: Timeline,
                        params: CoupledParams | QubitParams, *,
                        measure_at: Mapping[str, float] | None = None) -> np.ndarray:
    """Evolve ``rho0`` through ``timeline`` (times in ps, energies in GHz).

    A one-channel timeline uses the single-qubit Hamiltonian (channel ``L``
    or ``R`` of a :class:`CoupledParams`, or a bare :class:`QubitParams`);
    a two-channel timeline needs channels ``L`` and ``R``. ``measure_at``
    maps a channel to the time (ps) at which that qubit is projected and
    frozen.
    """
    rho0 = core.validate_density_matrix(rho0)
    engine = _Engine(params, timeline.names, np.zeros((1, len(timeline.names))))
    if rho0.shape[0] != engine.dim:
        raise TimelineError(f"state dimension {rho0.shape[0]} does not match timeline "
                            f"with {len(timeline.names)} channel(s)")
    return engine.run(rho0, timeline, measure_at)[0]


# ---------------------------------------------------------------------------
# sweeps
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Sweep:
    """A pulse program evaluated on a grid of binding values.

    Parameters
    ----------
    program : PulseProgram
    params : CoupledParams or QubitParams
    axes : sequence of (binding name, values)
        Grid axes, outermost first.
    fixed : mapping
        Extra bindings constant over the grid.
    measure_after : mapping
        Channel -> segment label; the qubit is projected when that segment
        ends. Unlisted qubits are read at the end of the timeline.
    levels : mapping
        Overrides for symbolic detuning levels.
    rho0 : array, optional
        Initial state; defaults to the outer-dot position state(s).
    derived : callable, optional
        Maps the bindings of a grid point to extra bindings (e.g. a hold
        time that depends on a swept duration).
    """

    program: PulseProgram
    params: CoupledParams | QubitParams
    axes: tuple[tuple[str, np.ndarray], ...]
    fixed: Mapping[str, float] = field(default_factory=dict)
    measure_after: Mapping[str, str] = field(default_factory=dict)
    levels: Mapping[str, float] = field(default_factory=dict)
    rho0: np.ndarray | None = None
    derived: Callable[[dict[str, float]], Mapping[str, float]] | None = None

    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(len(v) for _, v in self.axes)

    def initial_state(self) -> np.ndarray:
        if self.rho0 is not None:
            return np.asarray(self.rho0, dtype=complex)
        names = self.program.channel_names
        if len(names) == 1:
            q = self.params if isinstance(self.params, QubitParams) else self.params.qubit(names[0])
            return q.initial_state()
        return self.params.initial_state()

    def bindings_at(self, index: tuple[int, ...]) -> dict[str, float]:
        b = dict(self.fixed)
        for (name, values), i in zip(self.axes, index):
            b[name] = float(values[i])
        if self.derived is not None:
            b.update(self.derived(b))
        return b


def _measure_times(program: PulseProgram, bindings, params, levels,
                   measure_after: Mapping[str, str]) -> dict[str, float]:
    out = {}
    for name, label in measure_after.items():
        ch = program.channel(name)
        t = ch.sync_offset_ps
        for seg in ch.segments:
            dur = seg.duration
            if isinstance(dur, str):
                dur = bindings[dur] if dur in bindings else program.binding_map()[dur].value
            t += dur
            if seg.label == label:
                break
        else:
            raise KeyError(f"no segment {label!r} in channel {name!r}")
        out[name] = t
    return out


def average_over_noise(sweep: Sweep, noise: NoiseModel, readout: ReadoutModel | None = None,
                       *, threads: int = 1, keep_states: bool = False) -> SimResult:
    """Evaluate a sweep at every noise node and return weighted averages.

    Each grid point is computed independently with a fixed summation order,
    so the result does not depend on ``threads``.
    """
    readout = readout or ReadoutModel()
    channels = sweep.program.channel_names
    offsets, weights = noise.sample(channels)
    rho0 = core.validate_density_matrix(sweep.initial_state())
    shape = sweep.shape
    points = list(itertools.product(*(range(n) for n in shape)))
    eta = readout.efficiency

    def work(chunk: list[tuple[int, ...]]):
        engine = _Engine(sweep.params, channels, offsets)
        rows = []
        for idx in chunk:
            b = sweep.bindings_at(idx)
            tl = compile_timeline(sweep.program, sweep.params, b, levels=sweep.levels)
            mt = _measure_times(sweep.program, b, sweep.params, sweep.levels,
                                sweep.measure_after)
            rho = engine.run(rho0, tl, mt)
            pops = engine.populations(rho)
            mean = {c: float(np.sum(weights * pops[c])) for c in channels}
            err = None
            if noise.scheme == "montecarlo" and len(weights) > 1:
                err = {c: float(np.std(pops[c], ddof=1) / math.sqrt(len(weights)))
                       for c in channels}
            state = np.sum(weights[:, None, None] * rho, axis=0) if keep_states else None
            rows.append((mean, err, state))
        return rows

    threads = max(1, int(threads))
    chunks = [points[i::threads] for i in range(threads)] if threads > 1 else [points]
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(work, chunks))
    else:
        results = [work(points)]

    p_inner = {c: np.empty(shape) for c in channels}
    stderr = {c: np.empty(shape) for c in channels} if noise.scheme == "montecarlo" else None
    dim = rho0.shape[0]
    states = np.empty(shape + (dim, dim), dtype=complex) if keep_states else None
    for chunk, rows in zip(chunks, results):
        for idx, (mean, err, state) in zip(chunk, rows):
            for c in channels:
                p_inner[c][idx] = mean[c]
                if stderr is not None:
                    stderr[c][idx] = err[c] if err else 0.0
            if keep_states:
                states[idx] = state

    observables = {}
    for c in channels:
        observables[f"latch_{c}"] = p_inner[c] * eta
        observables[f"p_inner_{c}"] = p_inner[c]
    if stderr is not None:
        stderr = {f"latch_{c}": v * eta for c, v in stderr.items()} | \
                 {f"p_inner_{c}": v for c, v in stderr.items()}
    return SimResult(
        axes={name: np.asarray(v, dtype=float) for name, v in sweep.axes},
        observables=observables,
        states=states,
        stderr=stderr,
        meta={"noise_nodes": int(len(weights)), "channels": list(channels)},
    )


# ---------------------------------------------------------------------------
# experiment protocols
# ---------------------------------------------------------------------------

RAMSEY_PROGRAM = """\
# (n+1)pi/2 - free evolution at eps for tau - (n+1)pi/2
channel {ch}
seg rot1 eps=0GHz dur=t_rot
seg free eps=eps dur=tau fine
seg rot2 eps=0GHz dur=t_rot
"""

CORRELATED_PROGRAM = """\
# both qubits pulsed to their anti-crossings; R starts first
channel L
seg pulse eps=anticrossing dur=tau_L fine
seg read eps=readout dur=100ps
sync L offset={offset}ps
channel R
seg pulse eps=anticrossing dur=tau_R fine
seg read eps=readout dur=100ps
"""

CONDITIONAL_PROGRAM = """\
# prepare control, park it at idle, prepare and drive the target
channel L
seg prep eps=anticrossing dur=prep_L
seg idle eps=idle dur=hold_L
channel R
seg wait eps=init dur=prep_L
seg prep eps=eps_prep_R dur=prep_R
seg drive eps=0GHz dur=tau_t fine
"""

INPUT_STATES = ("00", "01", "10", "11")


def pi_time_ps(tc: float) -> float:
    """Resonant pi-pulse duration ``1/(4 tc)`` in ps."""
    return 1e3 / (4.0 * tc)


def simulate_ramsey(qubit: QubitParams, eps_grid, tau_grid, noise: NoiseModel | None = None,
                    readout: ReadoutModel | None = None, *, channel: str = "R", n: int = 0,
                    threads: int = 1, program: str | None = None) -> SimResult:
    """Ramsey fringes over detuning (GHz) and free-evolution time (ps).

    The two rotations at ``eps = 0`` each last ``(n+1)/(8 tc)`` ns.
    ``program`` replaces the built-in sequence; it must use the bindings
    ``t_rot``, ``eps`` and ``tau`` on the given channel.
    """
    text = program if program is not None else RAMSEY_PROGRAM.format(ch=channel)
    sweep = Sweep(
        program=parse_program(text),
        params=qubit,
        axes=(("eps", np.asarray(eps_grid, float)), ("tau", np.asarray(tau_grid, float))),
        fixed={"t_rot": (n + 1) * 1e3 / (8.0 * qubit.tc)},
    )
    noise = noise or NoiseModel()
    if channel not in ("L", "R"):
        raise ValueError("channel must be 'L' or 'R'")
    res = average_over_noise(sweep, noise, readout, threads=threads)
    res.observables = {
        "latch": res.observables[f"latch_{channel}"],
        "p_inner": res.observables[f"p_inner_{channel}"],
    }
    if res.stderr:
        res.stderr = {"latch": res.stderr[f"latch_{channel}"],
                      "p_inner": res.stderr[f"p_inner_{channel}"]}
    res.meta["program"] = text
    return res


def simulate_correlated(params: CoupledParams, tauL_grid, tauR_grid, offset_ps: float = 150.0,
                        noise: NoiseModel | None = None, readout: ReadoutModel | None = None,
                        *, threads: int = 1, program: str | None = None) -> SimResult:
    """Simultaneous driving at the anti-crossings over ``(tau_L, tau_R)`` in ps.

    The right pulse starts ``offset_ps`` before the left one. Each qubit is
    projected when its pulse ends; the other keeps evolving.
    """
    if offset_ps < 0:
        raise ValueError("offset_ps must be >= 0 (the right pulse leads)")
    text = program if program is not None else CORRELATED_PROGRAM.format(
        offset=np.format_float_positional(offset_ps, trim="-"))
    sweep = Sweep(
        program=parse_program(text),
        params=params,
        axes=(("tau_L", np.asarray(tauL_grid, float)), ("tau_R", np.asarray(tauR_grid, float))),
        measure_after={"L": "pulse", "R": "pulse"},
    )
    res = average_over_noise(sweep, noise or NoiseModel(), readout, threads=threads)
    res.meta["program"] = text
    return res


def _hold_control(b: dict[str, float]) -> dict[str, float]:
    return {"hold_L": b["prep_R"] + b["tau_t"]}


def conditional_sweep(params: CoupledParams, input_state: str, tau_t_grid, *,
                      prep_grid_ps: float | None = None, program: str | None = None) -> Sweep:
    """Sweep definition for one input state of the conditional-rotation protocol."""
    if input_state not in INPUT_STATES:
        raise ValueError(f"input_state must be one of {INPUT_STATES}, got {input_state!r}")
    if params.left.eps_idle is None:
        raise ValueError("conditional protocol needs eps_idle for the control (left) qubit")
    c, t = (int(x) for x in input_state)
    prep_l = pi_time_ps(params.left.tc) if c else 0.0
    prep_r = pi_time_ps(params.right.tc) if t else 0.0
    if prep_grid_ps:
        prep_l = math.floor(prep_l / prep_grid_ps + 0.5) * prep_grid_ps
        prep_r = math.floor(prep_r / prep_grid_ps + 0.5) * prep_grid_ps
    return Sweep(
        program=parse_program(program if program is not None else CONDITIONAL_PROGRAM),
        params=params,
        axes=(("tau_t", np.asarray(tau_t_grid, float)),),
        fixed={
            "prep_L": prep_l,
            "prep_R": prep_r,
            # control sits in R (its sigma_z = -1 side) when excited
            "eps_prep_R": conditional_detuning(0.0, bool(c), params.g),
        },
        derived=_hold_control,
    )


def simulate_conditional(params: CoupledParams, input_state: str, tau_t_grid,
                         noise: NoiseModel | None = None, readout: ReadoutModel | None = None,
                         *, prep_grid_ps: float | None = 40.0, threads: int = 1,
                         program: str | None = None) -> SimResult:
    """Conditional driving of the right (target) qubit for one input ``CT``.

    The control (left) qubit is flipped at its anti-crossing if ``C = 1`` and
    parked at ``eps_idle``; the target is flipped if ``T = 1`` at its
    control-dependent anti-crossing, then driven at ``eps_R = 0`` for
    ``tau_t``. Preparation pulses are rounded to ``prep_grid_ps`` (pass
    ``None`` for exact pi pulses). Both qubits are read at the end.
    """
    sweep = conditional_sweep(params, input_state, tau_t_grid, prep_grid_ps=prep_grid_ps,
                              program=program)
    res = average_over_noise(sweep, noise or NoiseModel(), readout, threads=threads)
    res.meta.update(input_state=input_state, prep_L_ps=sweep.fixed["prep_L"],
                    prep_R_ps=sweep.fixed["prep_R"],
                    program=program if program is not None else CONDITIONAL_PROGRAM)
    return res


