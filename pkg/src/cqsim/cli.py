"""Command-line entry point.

Exit codes: 0 success, 2 configuration or validation error, 3 runtime or
fit failure, 4 I/O error.
"""

from __future__ import annotations

import argparse
import logging
import sys

from .core import CoupledParams, InvalidParameterError
from .estimators import FitError
from .output import emit_outputs
from .pulseprog import (
    PulseProgramError,
    TimelineError,
    apply_rise_time,
    compile_timeline,
    format_program,
    parse_program,
    quantize_durations,
)
from .runs import run_scenario
from .scenario import FORMATS, PRESETS, ScenarioError, load_preset, load_scenario

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME, EXIT_IO = 0, 2, 3, 4

log = logging.getLogger("cqsim")


def _formats(text: str) -> tuple[str, ...]:
    items = tuple(dict.fromkeys(s.strip() for s in text.split(",") if s.strip()))
    bad = [f for f in items if f not in FORMATS]
    if not items or bad:
        raise argparse.ArgumentTypeError(f"formats must be a comma list from {','.join(FORMATS)}")
    return items


def _threads(text: str) -> int:
    n = int(text)
    if n < 1:
        raise argparse.ArgumentTypeError("threads must be >= 1")
    return n


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cqsim", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    for kind, helptext in (("ramsey", "single-qubit Ramsey map and dispersion fits"),
                           ("correlated", "simultaneous driving of both qubits"),
                           ("truthtable", "conditional rotation truth tables"),
                           ("analyze", "calibrate and project measured sensor traces")):
        p = sub.add_parser(kind, help=helptext)
        src = p.add_mutually_exclusive_group(required=True)
        src.add_argument("--config", metavar="PATH", help="scenario JSON file")
        if kind != "analyze":
            src.add_argument("--preset", choices=[n for n in PRESETS])
        p.add_argument("--out", metavar="DIR", default=".", help="output directory")
        p.add_argument("--format", type=_formats, default=None,
                       help="comma list of csv,json,svg (default: scenario setting)")
        p.add_argument("--seed", type=int, default=None, help="Monte Carlo seed override")
        p.add_argument("--threads", type=_threads, default=1,
                       help="worker threads; never changes results")
    c = sub.add_parser("compile", help="parse a pulse program and print its timeline")
    c.add_argument("program", metavar="FILE")
    c.add_argument("--config", metavar="PATH", help="scenario supplying qubit parameters")
    c.add_argument("--bind", action="append", default=[], metavar="NAME=VALUE",
                   help="numeric binding (GHz or ps)")
    c.add_argument("--quantize", type=float, default=None, metavar="PS",
                   help="snap durations to this grid")
    c.add_argument("--rise", type=float, default=None, metavar="PS",
                   help="apply a finite rise time")
    return parser


def _run(args) -> int:
    sc = load_preset(args.preset) if getattr(args, "preset", None) else load_scenario(args.config)
    if sc.kind != args.command:
        raise ScenarioError("kind", f"scenario is of kind {sc.kind!r}, "
                                    f"not {args.command!r}")
    sc = sc.with_overrides(seed=args.seed)
    bundle = run_scenario(sc, threads=args.threads)
    for m in bundle.messages:
        log.warning(m)
    paths = emit_outputs(bundle, args.out, args.format or sc.formats)
    for p in paths:
        print(p)
    for name, obs in bundle.observables.items():
        if not obs.axes:
            print(f"{name} = {float(obs.values):.6g}")
    return EXIT_OK


def _compile(args) -> int:
    with open(args.program, encoding="utf-8") as fh:
        program = parse_program(fh.read())
    params = load_scenario(args.config).params if args.config else \
        CoupledParams.default_orientation(5.0, 5.0, 0.0)
    bindings = {}
    for item in args.bind:
        name, sep, value = item.partition("=")
        if not sep:
            raise ScenarioError("--bind", f"expected NAME=VALUE, got {item!r}")
        try:
            bindings[name.strip()] = float(value.rstrip("GHzps"))
        except ValueError:
            raise ScenarioError("--bind", f"not a number: {value!r}") from None
    timeline = compile_timeline(program, params, bindings)
    if args.quantize:
        timeline, _ = quantize_durations(timeline, args.quantize)
    if args.rise:
        timeline = apply_rise_time(timeline, args.rise)
    print(format_program(program), end="")
    print("channel,start_ps,end_ps,eps_ghz,label")
    for name in timeline.names:
        for piece in timeline.pieces(name):
            print(f"{name},{piece.start:.12g},{piece.end:.12g},{piece.eps:.12g},{piece.label}")
    return EXIT_OK


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s: %(message)s", stream=sys.stderr)
    try:
        return _compile(args) if args.command == "compile" else _run(args)
    except (ScenarioError, InvalidParameterError, PulseProgramError, TimelineError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (FitError, ValueError, ArithmeticError, RuntimeError) as exc:
        print(f"runtime error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
