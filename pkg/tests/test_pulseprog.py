import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from cqsim.core import CoupledParams
from cqsim.pulseprog import (
    DuplicateChannelError,
    FineSegmentError,
    NegativeDurationError,
    Piece,
    PulseSyntaxError,
    Timeline,
    TimelineError,
    UnresolvedSymbolError,
    apply_rise_time,
    combine_dacs,
    compile_timeline,
    format_program,
    parse_program,
    quantize_durations,
    reference_waveform,
    synthesize_dac_pair,
)

from programs import program_text

PARAMS = CoupledParams.default_orientation(4.2, 3.3, 15.3, eps_idle=-300.0)


def test_parse_single_fine_segment():
    prog = parse_program("channel L\n seg manip eps=0 dur=100ps fine\n")
    assert prog.channel_names == ("L",)
    (seg,) = prog.channel("L").segments
    assert seg.fine and seg.detuning == 0.0 and seg.duration == 100.0


def test_empty_program():
    prog = parse_program("")
    assert prog.channels == () and prog.bindings == ()
    assert format_program(prog) == ""


def test_negative_duration_kind():
    with pytest.raises(NegativeDurationError):
        parse_program("seg x dur=-5ps")


@pytest.mark.parametrize("text, kind, line, col", [
    ("channel L\nseg a eps=0GHz dur=5GHz", PulseSyntaxError, 2, 20),
    ("channel L\nchannel L", DuplicateChannelError, 2, 9),
    ("channel L\nseg a eps=0 dur=1 fine\nseg b eps=0 dur=1 fine", FineSegmentError, 3, 1),
    ("channel L\nsync R offset=5ps", UnresolvedSymbolError, 2, None),
    ("bogus", PulseSyntaxError, 1, 1),
    ("channel L\nseg a eps=0", PulseSyntaxError, 2, 1),
    ("seg a eps=0 dur=1", PulseSyntaxError, 1, 1),
])
def test_error_kinds_and_positions(text, kind, line, col):
    with pytest.raises(kind) as info:
        parse_program(text)
    assert info.value.line == line
    if col is not None:
        assert info.value.column == col


def test_error_kinds_are_distinct():
    kinds = {PulseSyntaxError, DuplicateChannelError, NegativeDurationError,
             UnresolvedSymbolError, FineSegmentError}
    for k in kinds:
        assert not any(issubclass(k, other) for other in kinds - {k})


def test_format_is_canonical():
    text = "let w = 2.50ps\n# c\nchannel R\n  seg a   eps=+1.0GHz dur=w fine\nsync R offset=10ps\n"
    assert format_program(parse_program(text)) == (
        "let w = 2.5ps\nchannel R\nseg a eps=1GHz dur=w fine\nsync R offset=10ps\n")


@settings(max_examples=200)
@given(program_text())
def test_round_trip(text):
    first = parse_program(text)
    assert parse_program(format_program(first)) == first


def test_sync_offset_places_rising_edges():
    prog = parse_program("channel L\nseg p eps=anticrossing dur=50ps\nsync L offset=150ps\n"
                         "channel R\nseg p eps=anticrossing dur=200ps\n")
    tl = compile_timeline(prog, PARAMS)
    assert tl.segment_start("L", "p") == 150.0
    assert tl.segment_start("R", "p") == 0.0
    assert tl.pieces("L")[0].eps == PARAMS.left.eps_init
    assert tl.pieces("L")[1].eps == 15.3  # left anti-crossing sits at +g
    assert tl.pieces("R")[0].eps == 0.0


def test_zero_duration_fine_segment_is_elided_and_neighbours_merge():
    prog = parse_program("channel R\nseg a eps=5 dur=40\nseg f eps=0 dur=tau fine\nseg b eps=5 dur=40\n")
    tl = compile_timeline(prog, PARAMS, {"tau": 0.0})
    assert tl.pieces("R") == (Piece(0.0, 80.0, 5.0, "a"),)


def test_total_duration_is_sum_of_parts():
    prog = parse_program("channel L\nseg a eps=init dur=120ps\nseg b eps=anticrossing dur=tau_L fine\n"
                         "seg c eps=readout dur=100ps\n")
    tl = compile_timeline(prog, PARAMS, {"tau_L": 250.0})
    assert tl.duration == 120 + 250 + 100


def test_symbol_resolution_order_and_errors():
    prog = parse_program("let lvl = 3GHz\nlet d = 10ps\nchannel L\nseg a eps=lvl dur=d\n"
                         "seg b eps=idle dur=5\n")
    tl = compile_timeline(prog, CoupledParams.default_orientation(1, 1, 0, eps_idle=-7.0),
                          {"lvl": 4.0})
    assert [p.eps for p in tl.pieces("L")] == [4.0, -7.0]
    with pytest.raises(UnresolvedSymbolError):
        compile_timeline(parse_program("channel R\nseg a eps=nowhere dur=5\n"), PARAMS)
    with pytest.raises(UnresolvedSymbolError):
        compile_timeline(parse_program("let d = 1GHz\nchannel R\nseg a eps=0 dur=d\n"), PARAMS)
    with pytest.raises(NegativeDurationError):
        compile_timeline(parse_program("channel R\nseg a eps=0 dur=t\n"), PARAMS, {"t": -1.0})


def test_end_padding_aligns_channels():
    prog = parse_program("channel L\nseg a eps=0 dur=100\nchannel R\nseg b eps=1 dur=30\n")
    tl = compile_timeline(prog, PARAMS)
    assert tl.pieces("R")[-1] == Piece(30.0, 100.0, 1.0, "_post", False, True)
    assert [t for t, _, _ in tl.intervals()] == [0.0, 30.0]


@given(program_text(), st.floats(0, 500))
def test_compiled_pieces_contiguous_and_sorted(text, value):
    prog = parse_program(text)
    symbols = {s for ch in prog.channels for seg in ch.segments
               for s in (seg.detuning, seg.duration) if isinstance(s, str)}
    lets = prog.binding_map()
    for s in symbols:
        if s in lets and lets[s].unit == "GHz" and any(
                seg.duration == s for ch in prog.channels for seg in ch.segments):
            return
    bindings = {s: value for s in symbols if s not in lets}
    try:
        tl = compile_timeline(prog, PARAMS, bindings)
    except (UnresolvedSymbolError, NegativeDurationError):
        return
    for name in tl.names:
        ps = tl.pieces(name)
        assert all(a.end == b.start for a, b in zip(ps, ps[1:]))
        assert all(p.end > p.start for p in ps)
        if ps:
            assert ps[0].start >= 0 and ps[-1].end == tl.duration


def _single(durations, fine_index=None, levels=None):
    t = 0.0
    out = []
    for i, d in enumerate(durations):
        eps = levels[i] if levels else float(i % 2)
        out.append(Piece(t, t + d, eps, f"s{i}", i == fine_index))
        t += d
    return Timeline({"R": tuple(out)})


def test_quantize_examples():
    tl, res = quantize_durations(_single([100.0, 74.0, 80.0], fine_index=1))
    ps = tl.pieces("R")
    assert [p.duration for p in ps] == [120.0, 74.0, 80.0]
    assert res["R"] == (-20.0, 0.0, 0.0)


@given(st.lists(st.floats(0, 400), min_size=1, max_size=6))
def test_quantize_idempotent(durs):
    once, _ = quantize_durations(_single(durs))
    twice, res = quantize_durations(once)
    assert twice == once
    assert all(r == 0 for r in res["R"])


def test_rise_time_identity_and_errors():
    tl = _single([100.0, 100.0])
    assert apply_rise_time(tl, 0.0) is tl
    assert apply_rise_time(tl, 40.0, substeps=0) is tl
    with pytest.raises(ValueError):
        apply_rise_time(tl, -1.0)


def test_rise_time_midpoints():
    tl = apply_rise_time(_single([100.0, 100.0], levels=[0.0, 8.0]), 40.0, substeps=4)
    ramp = [p for p in tl.pieces("R") if p.label == "_ramp"]
    assert [p.eps for p in ramp] == [1.0, 3.0, 5.0, 7.0]
    assert ramp[0].start == 80.0 and ramp[-1].end == 120.0


@given(st.floats(-50, 50), st.floats(-50, 50), st.floats(1, 100), st.integers(1, 16))
def test_rise_time_preserves_ramp_window_integral(a, b, rise, substeps):
    tl = _single([200.0, 200.0], levels=[a, b])
    ramped = apply_rise_time(tl, rise, substeps)
    lo, hi = 200.0 - rise / 2, 200.0 + rise / 2

    def area(timeline):
        return sum((min(hi, p.end) - max(lo, p.start)) * p.eps
                   for p in timeline.pieces("R") if min(hi, p.end) > max(lo, p.start))

    half_substep = abs(b - a) / substeps * rise / substeps / 2
    assert abs(area(ramped) - area(tl)) <= half_substep + 1e-9
    assert area(ramped) == pytest.approx(area(tl), abs=1e-9 * (1 + abs(a) + abs(b)) * rise)


def test_dac_zero_perturbation():
    pair = synthesize_dac_pair(_single([120.0, 80.0], levels=[0.0, 0.0]), "R")
    assert np.all(combine_dacs(pair) == 0)


def test_dac_square_pulse_sample_count():
    tl = Timeline({"R": (Piece(0.0, 120.0, 2.5, "sq"),)})
    pair = synthesize_dac_pair(tl, "R")
    assert len(pair.dac_a) == len(pair.dac_b) == 3
    out = combine_dacs(pair)
    assert len(out) == 6 and np.all(out == 2.5)


def test_dac_cancellation_and_impulse():
    zero = synthesize_dac_pair(_single([40.0, 40.0, 40.0], fine_index=1, levels=[0, 3.0, 0]), "R")
    cancelled = zero.__class__(zero.dac_a, -zero.dac_a, 0.0, zero.lsb_ghz)
    assert np.all(combine_dacs(cancelled) == 0)
    imp = zero.__class__(np.zeros(4, np.int64), np.array([0, 7, 0, 0]), 0.0, 1e-3)
    out = combine_dacs(imp)
    assert np.flatnonzero(out).tolist() == [2, 3]  # one 25 GS/s sample spans two output bins


def test_dac_fine_edge_moves_with_phase_delay():
    def timeline(fine):
        return Timeline({"R": (Piece(0.0, 40.0, 0.0, "a"), Piece(40.0, 40.0 + fine, 1.0, "f", True),
                               Piece(40.0 + fine, 200.0 + fine, 0.0, "b"))})
    p0 = synthesize_dac_pair(timeline(47.0), "R")
    p1 = synthesize_dac_pair(timeline(48.0), "R")
    assert p1.phase_delay_ps - p0.phase_delay_ps == 1.0
    assert np.array_equal(p0.dac_a, p1.dac_a) and np.array_equal(p0.dac_b, p1.dac_b)
    assert np.array_equal(combine_dacs(p1), combine_dacs(p0.with_phase_delay(8.0)))


def test_dac_errors():
    with pytest.raises(TimelineError):
        synthesize_dac_pair(_single([30.0, 50.0]), "R")
    with pytest.raises(TimelineError):
        synthesize_dac_pair(_single([4000.0]), "R", record_length=10)
    pair = synthesize_dac_pair(_single([40.0]), "R")
    with pytest.raises(ValueError):
        combine_dacs(pair.__class__(pair.dac_a, np.zeros(3, np.int64), 0.0, 1e-3))


def test_dac_matches_reference_on_random_timeline():
    rng = np.random.default_rng(3)
    for _ in range(20):
        n_head = int(rng.integers(0, 4))
        durs = [40.0 * int(rng.integers(1, 5)) for _ in range(n_head)]
        durs.append(float(rng.integers(1, 200)))
        durs += [40.0 * int(rng.integers(1, 5)) for _ in range(int(rng.integers(0, 4)))]
        levels = [round(float(rng.uniform(-5, 5)), 3) for _ in durs]
        tl = _single(durs, fine_index=n_head, levels=levels)
        out = combine_dacs(synthesize_dac_pair(tl, "R"))
        ref = reference_waveform(tl, "R")
        assert np.max(np.abs(out - ref)) < 1e-12


def test_dac_fine_segment_first():
    tl = Timeline({"R": (Piece(0.0, 25.0, 0.5, "f", True), Piece(25.0, 145.0, 1.0, "b"))})
    out = combine_dacs(synthesize_dac_pair(tl, "R"))
    assert out[0] == 0.5 and out[2] == 1.0
    assert np.max(np.abs(out - reference_waveform(tl, "R"))) < 1e-12
