"""Pulse programs: a line-oriented text format compiled to detuning timelines.

Grammar (one directive per line)::

    channel NAME
    seg LABEL eps=(NUMBER[GHz] | SYMBOL) dur=(NUMBER[ps] | SYMBOL) [fine]
    sync NAME offset=NUMBERps
    let NAME = NUMBER (GHz | ps)
    # comment

Segments attach to the most recently declared channel. The compiler turns a
program into a :class:`Timeline`, a per-channel list of contiguous
piecewise-constant detuning pieces on a shared time axis (ps).

The module also models dual-DAC waveform synthesis on an AWG made of two
interleaved 25 GS/s converters: one DAC plays ``+W`` and the other ``-W + p``,
so the summed output is the perturbation ``p``. Delaying the ``+W`` DAC moves
a single edge of ``p`` with ps resolution.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field, replace
from typing import Mapping, NamedTuple, Sequence

import numpy as np

from .core import CoupledParams, QubitParams, conditional_detuning

_IDENT = r"[A-Za-z_][A-Za-z0-9_]*"
_NUMBER = r"[+-]?(?:\d+(?:\.\d*)?|\.\d+)"
_IDENT_RE = re.compile(rf"^{_IDENT}$")
_QUANTITY_RE = re.compile(rf"^({_NUMBER})(GHz|ps)?$")
_LET_RE = re.compile(rf"^let\s+({_IDENT})\s*=\s*({_NUMBER})\s*(GHz|ps)\s*$")

BUILTIN_LEVELS = ("init", "readout", "idle", "anticrossing")


class PulseProgramError(ValueError):
    """Base class for pulse-program errors; carries a 1-based line/column."""

    def __init__(self, message: str, line: int | None = None, column: int | None = None):
        self.line = line
        self.column = column
        where = ""
        if line is not None:
            where = f"line {line}" + (f", column {column}" if column is not None else "")
            where += ": "
        super().__init__(where + message)


class PulseSyntaxError(PulseProgramError):
    pass


class DuplicateChannelError(PulseProgramError):
    pass


class NegativeDurationError(PulseProgramError):
    pass


class UnresolvedSymbolError(PulseProgramError):
    pass


class FineSegmentError(PulseProgramError):
    """More than one fine-grained segment in a channel."""


class TimelineError(ValueError):
    """A timeline cannot be built or is inconsistent with a request."""


# ---------------------------------------------------------------------------
# AST
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Segment:
    label: str
    detuning: float | str
    duration: float | str
    fine: bool = False
    line: int | None = field(default=None, compare=False, repr=False)


@dataclass(frozen=True)
class Channel:
    name: str
    segments: tuple[Segment, ...] = ()
    sync_offset_ps: float = 0.0


@dataclass(frozen=True)
class Binding:
    name: str
    value: float
    unit: str  # "GHz" or "ps"


@dataclass(frozen=True)
class PulseProgram:
    channels: tuple[Channel, ...] = ()
    bindings: tuple[Binding, ...] = ()

    @property
    def channel_names(self) -> tuple[str, ...]:
        return tuple(ch.name for ch in self.channels)

    def channel(self, name: str) -> Channel:
        for ch in self.channels:
            if ch.name == name:
                return ch
        raise KeyError(name)

    def binding_map(self) -> dict[str, Binding]:
        return {b.name: b for b in self.bindings}


# ---------------------------------------------------------------------------
# parsing / printing
# ---------------------------------------------------------------------------


def _parse_quantity(text: str, unit: str, key: str, lineno: int, col: int) -> float | str:
    if _IDENT_RE.match(text):
        return text
    m = _QUANTITY_RE.match(text)
    if not m:
        raise PulseSyntaxError(f"bad value for {key}: {text!r}", lineno, col)
    if m.group(2) is not None and m.group(2) != unit:
        raise PulseSyntaxError(f"{key} expects unit {unit}, got {m.group(2)}", lineno, col)
    return float(m.group(1))


def _tokens(line: str) -> list[tuple[int, str]]:
    return [(m.start() + 1, m.group()) for m in re.finditer(r"\S+", line)]


def parse_program(text: str) -> PulseProgram:
    """Parse pulse-program text into a :class:`PulseProgram`."""
    channels: list[dict] = []
    bindings: dict[str, Binding] = {}
    syncs: dict[str, tuple[float, int]] = {}

    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].rstrip()
        if not line.strip():
            continue
        toks = _tokens(line)
        keyword = toks[0][1]

        if keyword == "channel":
            if len(toks) != 2 or not _IDENT_RE.match(toks[1][1]):
                raise PulseSyntaxError("expected 'channel NAME'", lineno, toks[0][0])
            name = toks[1][1]
            if any(ch["name"] == name for ch in channels):
                raise DuplicateChannelError(f"channel {name!r} declared twice", lineno, toks[1][0])
            channels.append({"name": name, "segments": [], "fine": None})

        elif keyword == "seg":
            if len(toks) < 2 or not _IDENT_RE.match(toks[1][1]):
                raise PulseSyntaxError("expected 'seg LABEL ...'", lineno, toks[0][0])
            label = toks[1][1]
            eps = dur = None
            fine = False
            for col, tok in toks[2:]:
                if tok == "fine" and not fine:
                    fine = True
                elif tok.startswith("eps=") and eps is None:
                    eps = _parse_quantity(tok[4:], "GHz", "eps", lineno, col + 4)
                elif tok.startswith("dur=") and dur is None:
                    dur = _parse_quantity(tok[4:], "ps", "dur", lineno, col + 4)
                    if isinstance(dur, float) and dur < 0:
                        raise NegativeDurationError(
                            f"segment {label!r} has negative duration {dur} ps", lineno, col + 4)
                else:
                    raise PulseSyntaxError(f"unexpected token {tok!r}", lineno, col)
            if eps is None:
                raise PulseSyntaxError(f"segment {label!r} is missing eps=", lineno, toks[0][0])
            if dur is None:
                raise PulseSyntaxError(f"segment {label!r} is missing dur=", lineno, toks[0][0])
            if not channels:
                raise PulseSyntaxError("segment declared before any channel", lineno, toks[0][0])
            current = channels[-1]
            if fine:
                if current["fine"] is not None:
                    raise FineSegmentError(
                        f"channel {current['name']!r} already has fine segment "
                        f"{current['fine']!r}", lineno, toks[0][0])
                current["fine"] = label
            current["segments"].append(Segment(label, eps, dur, fine, lineno))

        elif keyword == "sync":
            if len(toks) != 3 or not _IDENT_RE.match(toks[1][1]) \
                    or not toks[2][1].startswith("offset="):
                raise PulseSyntaxError("expected 'sync NAME offset=NUMBERps'", lineno, toks[0][0])
            value = _parse_quantity(toks[2][1][7:], "ps", "offset", lineno, toks[2][0] + 7)
            if isinstance(value, str):
                raise PulseSyntaxError("sync offset must be numeric", lineno, toks[2][0] + 7)
            if toks[1][1] in syncs:
                raise PulseSyntaxError(f"duplicate sync for {toks[1][1]!r}", lineno, toks[0][0])
            syncs[toks[1][1]] = (value, lineno)

        elif keyword == "let":
            m = _LET_RE.match(line.strip())
            if not m:
                raise PulseSyntaxError("expected 'let NAME = NUMBER (GHz|ps)'", lineno, toks[0][0])
            name = m.group(1)
            if name in bindings:
                raise PulseSyntaxError(f"duplicate binding {name!r}", lineno, toks[0][0])
            bindings[name] = Binding(name, float(m.group(2)), m.group(3))

        else:
            raise PulseSyntaxError(f"unknown directive {keyword!r}", lineno, toks[0][0])

    names = [ch["name"] for ch in channels]
    for name, (_, lineno) in syncs.items():
        if name not in names:
            raise UnresolvedSymbolError(f"sync refers to unknown channel {name!r}", lineno)

    return PulseProgram(
        channels=tuple(
            Channel(ch["name"], tuple(ch["segments"]), syncs.get(ch["name"], (0.0,))[0])
            for ch in channels
        ),
        bindings=tuple(bindings.values()),
    )


def _fmt(value: float) -> str:
    return np.format_float_positional(value, trim="-")


def format_program(program: PulseProgram) -> str:
    """Print a program in canonical form; ``parse_program`` inverts it."""
    lines = [f"let {b.name} = {_fmt(b.value)}{b.unit}" for b in program.bindings]
    for ch in program.channels:
        lines.append(f"channel {ch.name}")
        for seg in ch.segments:
            eps = seg.detuning if isinstance(seg.detuning, str) else f"{_fmt(seg.detuning)}GHz"
            dur = seg.duration if isinstance(seg.duration, str) else f"{_fmt(seg.duration)}ps"
            lines.append(f"seg {seg.label} eps={eps} dur={dur}" + (" fine" if seg.fine else ""))
        if ch.sync_offset_ps:
            lines.append(f"sync {ch.name} offset={_fmt(ch.sync_offset_ps)}ps")
    return "\n".join(lines) + ("\n" if lines else "")


# ---------------------------------------------------------------------------
# timelines
# ---------------------------------------------------------------------------


class Piece(NamedTuple):
    """Constant-detuning interval ``[start, end)`` in ps."""

    start: float
    end: float
    eps: float
    label: str = ""
    fine: bool = False
    pad: bool = False

    @property
    def duration(self) -> float:
        return self.end - self.start


@dataclass(frozen=True)
class Timeline:
    """Per-channel contiguous piecewise-constant detuning schedules."""

    channels: Mapping[str, tuple[Piece, ...]]

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(self.channels)

    @property
    def duration(self) -> float:
        ends = [p[-1].end for p in self.channels.values() if p]
        return max(ends, default=0.0)

    def pieces(self, name: str) -> tuple[Piece, ...]:
        return self.channels[name]

    def edges(self, name: str) -> list[float]:
        """Times where the channel's detuning changes value."""
        ps = self.channels[name]
        return [b.start for a, b in zip(ps, ps[1:]) if a.eps != b.eps]

    def segment_end(self, name: str, label: str) -> float:
        """End time of the last piece carrying ``label`` in a channel."""
        ends = [p.end for p in self.channels[name] if p.label == label]
        if not ends:
            raise KeyError(f"no segment {label!r} in channel {name!r}")
        return ends[-1]

    def segment_start(self, name: str, label: str) -> float:
        starts = [p.start for p in self.channels[name] if p.label == label]
        if not starts:
            raise KeyError(f"no segment {label!r} in channel {name!r}")
        return starts[0]

    def intervals(self) -> list[tuple[float, float, dict[str, float]]]:
        """Maximal intervals over which every channel is constant."""
        names = self.names
        if not names:
            return []
        cuts = sorted({t for ps in self.channels.values() for p in ps for t in (p.start, p.end)})
        for name in names:
            ps = self.channels[name]
            if not ps:
                raise TimelineError(f"channel {name!r} is empty")
            if ps[0].start != cuts[0] or ps[-1].end != cuts[-1]:
                raise TimelineError("channels do not cover a common interval")
            for a, b in zip(ps, ps[1:]):
                if a.end != b.start:
                    raise TimelineError(f"gap in channel {name!r} at {a.end} ps")
        out = []
        idx = dict.fromkeys(names, 0)
        for t0, t1 in zip(cuts, cuts[1:]):
            levels = {}
            for name in names:
                ps = self.channels[name]
                while ps[idx[name]].end <= t0:
                    idx[name] += 1
                levels[name] = ps[idx[name]].eps
            out.append((t0, t1, levels))
        return out

    def value(self, name: str, t: float) -> float:
        for p in self.channels[name]:
            if p.start <= t < p.end:
                return p.eps
        return self.channels[name][-1].eps


def _builtin_level(symbol: str, channel: str, params) -> float | None:
    if isinstance(params, QubitParams):
        qubit, partner, g = params, None, 0.0
    elif isinstance(params, CoupledParams) and channel in ("L", "R"):
        qubit = params.qubit(channel)
        partner = params.qubit("R" if channel == "L" else "L")
        g = params.g
    else:
        return None
    if symbol in ("init", "readout"):
        return qubit.eps_init
    if symbol == "idle":
        return qubit.eps_idle
    if symbol == "anticrossing":
        if partner is None:
            return 0.0
        return conditional_detuning(0.0, partner.init_state_index == 1, g)
    return None


def _with_end_padding(channels: dict[str, list[Piece]]) -> dict[str, tuple[Piece, ...]]:
    total = max((p[-1].end for p in channels.values() if p), default=0.0)
    out = {}
    for name, ps in channels.items():
        if ps and ps[-1].end < total:
            ps = ps + [Piece(ps[-1].end, total, ps[-1].eps, "_post", False, True)]
        out[name] = tuple(ps)
    return out


def _merge(pieces: list[Piece]) -> list[Piece]:
    out: list[Piece] = []
    for p in pieces:
        if p.duration <= 0:
            continue
        if out:
            q = out[-1]
            if (q.eps == p.eps and not q.fine and not p.fine and not q.pad and not p.pad):
                out[-1] = q._replace(end=p.end)
                continue
        out.append(p)
    return out


def compile_timeline(program: PulseProgram, params: CoupledParams | QubitParams | None = None,
                     bindings: Mapping[str, float] | None = None, *,
                     levels: Mapping[str, float] | None = None) -> Timeline:
    """Resolve symbols and lay out every channel on a shared ps time axis.

    Symbols resolve, in order, from ``bindings`` (sweep values; ps for
    durations, GHz for detunings), the program's ``let`` bindings,
    ``levels`` and the built-in levels ``init``, ``readout``, ``idle`` and
    ``anticrossing`` derived from ``params``. A channel with a sync offset
    holds its ``init`` level before its first segment.
    """
    bindings = dict(bindings or {})
    levels = dict(levels or {})
    lets = program.binding_map()

    def resolve(value, unit, channel, lineno):
        if not isinstance(value, str):
            return float(value)
        if value in bindings:
            return float(bindings[value])
        if value in lets:
            b = lets[value]
            if b.unit != unit:
                raise UnresolvedSymbolError(
                    f"binding {value!r} has unit {b.unit}, expected {unit}", lineno)
            return b.value
        if unit == "GHz":
            if value in levels:
                return float(levels[value])
            lvl = _builtin_level(value, channel, params)
            if lvl is not None:
                return lvl
        raise UnresolvedSymbolError(f"unresolved symbol {value!r} in channel {channel!r}", lineno)

    laid: dict[str, list[Piece]] = {}
    for ch in program.channels:
        if ch.sync_offset_ps < 0:
            raise TimelineError(
                f"sync offset {ch.sync_offset_ps} ps pushes channel {ch.name!r} before t=0")
        raw = []
        for seg in ch.segments:
            eps = resolve(seg.detuning, "GHz", ch.name, seg.line)
            dur = resolve(seg.duration, "ps", ch.name, seg.line)
            if not math.isfinite(dur) or not math.isfinite(eps):
                raise TimelineError(f"segment {seg.label!r} resolved to a non-finite value")
            if dur < 0:
                raise NegativeDurationError(
                    f"segment {seg.label!r} resolved to negative duration {dur} ps", seg.line)
            raw.append((seg.label, eps, dur, seg.fine))

        t = ch.sync_offset_ps
        pieces = []
        for label, eps, dur, fine in raw:
            pieces.append(Piece(t, t + dur, eps, label, fine))
            t += dur
        pieces = _merge(pieces)

        init = levels.get("init", _builtin_level("init", ch.name, params))
        if init is None:
            init = pieces[0].eps if pieces else 0.0
        if ch.sync_offset_ps > 0:
            pieces.insert(0, Piece(0.0, ch.sync_offset_ps, init, "_pre", False, True))
        laid[ch.name] = pieces

    total = max((p[-1].end for p in laid.values() if p), default=0.0)
    for name, ps in laid.items():
        if not ps and total > 0:
            ch = program.channel(name)
            init = levels.get("init", _builtin_level("init", ch.name, params))
            laid[name] = [Piece(0.0, total, 0.0 if init is None else init, "_pre", False, True)]
    return Timeline(_with_end_padding(laid))


def _round_half_up(value: float, step: float) -> float:
    return math.floor(value / step + 0.5) * step


def quantize_durations(timeline: Timeline, grid_ps: float = 40.0,
                       fine_resolution_ps: float = 1.0
                       ) -> tuple[Timeline, dict[str, tuple[float, ...]]]:
    """Round coarse durations to the DAC grid and fine ones to ``fine_resolution_ps``.

    Ties round up. Returns the new timeline and, per channel, the
    ``requested - realized`` duration residual of every non-padding piece.
    Sync padding keeps fine resolution since it models the inter-AWG delay.
    """
    laid: dict[str, list[Piece]] = {}
    residuals: dict[str, tuple[float, ...]] = {}
    for name, ps in timeline.channels.items():
        t = 0.0
        out: list[Piece] = []
        res = []
        for p in ps:
            if p.pad and p.label == "_post":
                continue
            step = fine_resolution_ps if (p.fine or p.pad) else grid_ps
            dur = _round_half_up(p.duration, step)
            if not p.pad:
                res.append(p.duration - dur)
            out.append(p._replace(start=t, end=t + dur))
            t += dur
        laid[name] = [p for p in out if p.duration > 0]
        residuals[name] = tuple(res)
    return Timeline(_with_end_padding(laid)), residuals


def apply_rise_time(timeline: Timeline, rise_ps: float = 40.0, substeps: int = 8) -> Timeline:
    """Replace each detuning step by a discretized linear ramp.

    Ramps are centred on the nominal edge and use the ramp value at the
    midpoint of each of ``substeps`` equal sub-pieces, so the detuning
    integral over the ramp window matches the ideal step. A ramp never takes
    more than half of either neighbouring piece.
    """
    if rise_ps < 0:
        raise ValueError(f"rise_ps must be >= 0, got {rise_ps}")
    if rise_ps == 0 or substeps == 0:
        return timeline
    if substeps < 0:
        raise ValueError(f"substeps must be >= 0, got {substeps}")

    laid = {}
    for name, ps in timeline.channels.items():
        n = len(ps)
        half = [0.0] * (n + 1)  # half[i]: half-width of the ramp at the edge before piece i
        for i in range(1, n):
            if ps[i - 1].eps != ps[i].eps:
                half[i] = min(rise_ps / 2, ps[i - 1].duration / 2, ps[i].duration / 2)
        out = []
        for i, p in enumerate(ps):
            if i > 0 and half[i] > 0:
                e = p.start
                h = half[i]
                v0, v1 = ps[i - 1].eps, p.eps
                w = 2 * h / substeps
                for k in range(substeps):
                    t0 = e - h + k * w
                    t1 = e + h if k == substeps - 1 else t0 + w
                    out.append(Piece(t0, t1, v0 + (v1 - v0) * (k + 0.5) / substeps, "_ramp"))
            core = Piece(p.start + half[i], p.end - half[i + 1], p.eps, p.label, p.fine, p.pad)
            if core.duration > 0:
                out.append(core)
        laid[name] = tuple(out)
    return Timeline(laid)


# ---------------------------------------------------------------------------
# dual-DAC synthesis
# ---------------------------------------------------------------------------

DAC_PERIOD_PS = 40.0
COMBINED_PERIOD_PS = 20.0
_EDGE_TOL_PS = 1e-6


@dataclass(frozen=True)
class DacWaveformPair:
    """Integer DAC codes for the two interleaved 25 GS/s converters.

    ``dac_a`` carries ``+W`` and is delayed by ``phase_delay_ps`` relative to
    ``dac_b``, which carries ``-W + p``. Amplitudes are ``code * lsb_ghz``.
    """

    dac_a: np.ndarray
    dac_b: np.ndarray
    phase_delay_ps: float
    lsb_ghz: float
    baseline_ghz: float = 0.0

    sample_rate_gsps = 25.0
    combined_rate_gsps = 50.0

    def with_phase_delay(self, delay_ps: float) -> "DacWaveformPair":
        return replace(self, phase_delay_ps=delay_ps)


def _on_grid(t: float, step: float = DAC_PERIOD_PS) -> bool:
    return abs(t - step * round(t / step)) <= _EDGE_TOL_PS


def _channel_pieces(timeline: Timeline, channel: str) -> list[Piece]:
    ps = [p for p in timeline.pieces(channel) if not p.pad]
    if not ps:
        return []
    t0 = ps[0].start
    return [p._replace(start=p.start - t0, end=p.end - t0) for p in ps]


def _level_at(pieces: Sequence[Piece], t: float) -> float:
    for p in pieces:
        if p.start <= t < p.end:
            return p.eps
    return pieces[-1].eps


def synthesize_dac_pair(timeline: Timeline, channel: str, *, lsb_ghz: float = 1e-3,
                        baseline_ghz: float = 0.0, record_length: int = 1 << 16
                        ) -> DacWaveformPair:
    """Split one channel's perturbation into a dual-DAC waveform pair.

    Sync padding is dropped and the channel is rebased to its first segment.
    All edges up to the start of the fine segment must lie on the 40 ps
    grid; the fine segment's trailing edge may fall anywhere and every later
    edge must keep the same sub-grid remainder. The perturbation sample is
    ``round((eps - baseline_ghz) / lsb_ghz)``.
    """
    pieces = _channel_pieces(timeline, channel)
    if not pieces:
        return DacWaveformPair(np.zeros(0, np.int64), np.zeros(0, np.int64), 0.0,
                               lsb_ghz, baseline_ghz)
    total = pieces[-1].end
    n = max(1, math.ceil(total / DAC_PERIOD_PS - 1e-9))
    if n > record_length:
        raise TimelineError(f"channel {channel!r} needs {n} samples, record length is "
                            f"{record_length}")

    fine = [i for i, p in enumerate(pieces) if p.fine]
    if fine:
        f = fine[0]
        t_fine = pieces[f].end
        coarse_edge = DAC_PERIOD_PS * math.floor(t_fine / DAC_PERIOD_PS + 1e-9)
        delay = t_fine - coarse_edge
        if abs(delay) <= _EDGE_TOL_PS:
            delay = 0.0
        head_edges = [p.start for p in pieces[: f + 1]]
        tail_edges = [p.end - delay for p in pieces[f + 1:]]
    else:
        f = None
        delay = 0.0
        coarse_edge = total
        head_edges = [p.start for p in pieces]
        tail_edges = []
    for t in head_edges + tail_edges:
        if not _on_grid(t):
            raise TimelineError(
                f"edge at {t} ps in channel {channel!r} is not representable on the "
                f"{DAC_PERIOD_PS:g} ps DAC grid; quantize the timeline first")

    def code(eps: float) -> int:
        return int(round((eps - baseline_ghz) / lsb_ghz))

    fine_code = code(pieces[f].eps) if f is not None else 0
    p = np.empty(n, dtype=np.int64)
    w = np.zeros(n, dtype=np.int64)
    for k in range(n):
        t = k * DAC_PERIOD_PS + DAC_PERIOD_PS / 2
        if t < coarse_edge:
            p[k] = code(_level_at(pieces, t))
        else:
            p[k] = code(_level_at(pieces, t + delay))
            if f is not None:
                w[k] = p[k] - fine_code
    return DacWaveformPair(dac_a=w, dac_b=p - w, phase_delay_ps=delay,
                           lsb_ghz=lsb_ghz, baseline_ghz=baseline_ghz)


def combine_dacs(pair: DacWaveformPair) -> np.ndarray:
    """Sum the two DAC outputs onto the 50 GS/s grid (GHz above baseline).

    Each output sample is the mean of ``a(t - delay) + b(t)`` over its 20 ps
    bin with zero-order-hold converters, so a bin straddling a delayed edge
    gets the linearly interpolated (area-weighted) value. The delayed
    converter outputs zero before its first sample and holds its last one.
    """
    a = np.asarray(pair.dac_a)
    b = np.asarray(pair.dac_b)
    if a.shape != b.shape:
        raise ValueError(f"DAC length mismatch: {a.shape} vs {b.shape}")
    n = len(a)
    out = np.empty(2 * n, dtype=float)
    d = pair.phase_delay_ps

    def a_at(k: int) -> float:
        return 0.0 if k < 0 else float(a[min(k, n - 1)])

    for j in range(2 * n):
        s0 = j * COMBINED_PERIOD_PS - d
        s1 = s0 + COMBINED_PERIOD_PS
        k0 = math.floor(s0 / DAC_PERIOD_PS)
        k1 = math.ceil(s1 / DAC_PERIOD_PS) - 1
        a0, a1 = a_at(k0), a_at(k1)
        if k0 >= k1 or a0 == a1:
            av = a0
        else:
            av = a0 + (s1 - k1 * DAC_PERIOD_PS) / COMBINED_PERIOD_PS * (a1 - a0)
        out[j] = float(b[j // 2]) + av
    return out * pair.lsb_ghz


def reference_waveform(timeline: Timeline, channel: str, *, lsb_ghz: float = 1e-3,
                       baseline_ghz: float = 0.0) -> np.ndarray:
    """Bin-averaged perturbation of a channel on the 50 GS/s grid.

    Computed directly from the pieces by overlap integration, for comparison
    with :func:`combine_dacs`.
    """
    pieces = _channel_pieces(timeline, channel)
    if not pieces:
        return np.zeros(0)
    n = 2 * max(1, math.ceil(pieces[-1].end / DAC_PERIOD_PS - 1e-9))
    out = np.empty(n, dtype=float)
    last = float(round((pieces[-1].eps - baseline_ghz) / lsb_ghz))
    for j in range(n):
        lo, hi = j * COMBINED_PERIOD_PS, (j + 1) * COMBINED_PERIOD_PS
        acc = 0.0
        covered = 0.0
        for p in pieces:
            ov = min(hi, p.end) - max(lo, p.start)
            if ov > 0:
                acc += round((p.eps - baseline_ghz) / lsb_ghz) * ov
                covered += ov
        acc += last * (COMBINED_PERIOD_PS - covered)
        out[j] = acc / COMBINED_PERIOD_PS
    return out * lsb_ghz
