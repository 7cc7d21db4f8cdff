"""Byte-stable CSV, JSON and SVG writers for result bundles."""

from __future__ import annotations

import itertools
import json
import math
from pathlib import Path

import numpy as np

from .runs import ResultBundle

_ANCHORS = (
    (0.00, (68, 1, 84)),
    (0.25, (59, 82, 139)),
    (0.50, (33, 145, 140)),
    (0.75, (94, 201, 98)),
    (1.00, (253, 231, 37)),
)


def _build_lut() -> tuple[str, ...]:
    out = []
    for k in range(256):
        x = k / 255
        for (x0, c0), (x1, c1) in zip(_ANCHORS, _ANCHORS[1:]):
            if x <= x1:
                f = (x - x0) / (x1 - x0)
                rgb = [int(math.floor(a + (b - a) * f + 0.5)) for a, b in zip(c0, c1)]
                break
        out.append("#%02x%02x%02x" % tuple(rgb))
    return tuple(out)


COLOR_LUT = _build_lut()
"""256 colours, dark purple to yellow, piecewise linear through five anchors."""

NAN_COLOR = "#bfbfbf"


def _fmt(value) -> str:
    if isinstance(value, str):
        return value
    v = float(value)
    if math.isnan(v):
        return "nan"
    if math.isinf(v):
        return "inf" if v > 0 else "-inf"
    return "%.12g" % v


def _json_value(value):
    if isinstance(value, np.ndarray):
        return [_json_value(v) for v in value.tolist()] if value.ndim else _json_value(value.item())
    if isinstance(value, (list, tuple)):
        return [_json_value(v) for v in value]
    if isinstance(value, dict):
        return {str(k): _json_value(v) for k, v in value.items()}
    if isinstance(value, (bool, str)) or value is None:
        return value
    if isinstance(value, (int, np.integer)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        v = float(value)
        return v if math.isfinite(v) else None
    return str(value)


def _groups(bundle: ResultBundle) -> dict[tuple[str, ...], list[str]]:
    groups: dict[tuple[str, ...], list[str]] = {}
    for name, obs in bundle.observables.items():
        groups.setdefault(obs.axes, []).append(name)
    return groups


def csv_text(bundle: ResultBundle, axes: tuple[str, ...], names: list[str]) -> str:
    """One row per grid point of ``axes``; the last axis varies fastest."""
    lines = [",".join(list(axes) + names)]
    values = [bundle.observables[n].values for n in names]
    for idx in itertools.product(*(range(len(bundle.axes[a])) for a in axes)):
        row = [_fmt(bundle.axes[a][i]) for a, i in zip(axes, idx)]
        row += [_fmt(v[idx] if idx else v) for v in values]
        lines.append(",".join(row))
    return "\n".join(lines) + "\n"


def json_text(bundle: ResultBundle) -> str:
    doc = {
        "scenario": _json_value(bundle.scenario),
        "axes": _json_value(bundle.axes),
        "observables": {name: {"axes": list(obs.axes), "values": _json_value(obs.values)}
                        for name, obs in bundle.observables.items()},
        "provenance": _json_value(bundle.provenance),
    }
    return json.dumps(doc, indent=1, allow_nan=False) + "\n"


def svg_heatmap(values: np.ndarray, x: list, y: list, *, title: str, xlabel: str,
                ylabel: str) -> str:
    """Rect-per-pixel heatmap; rows are ``y`` (upwards), columns ``x``."""
    values = np.asarray(values, dtype=float)
    ny, nx = values.shape
    cell_w = max(1, 480 // nx)
    cell_h = max(1, 480 // ny)
    left, top = 70, 40
    w, h = nx * cell_w, ny * cell_h
    finite = values[np.isfinite(values)]
    vmin = float(finite.min()) if finite.size else 0.0
    vmax = float(finite.max()) if finite.size else 0.0
    span = vmax - vmin
    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{left + w + 90}" '
        f'height="{top + h + 60}" font-family="sans-serif" font-size="11">',
        f'<text x="{left}" y="20" font-size="13">{title}</text>',
        '<g shape-rendering="crispEdges">',
    ]
    for j in range(ny):
        yy = top + (ny - 1 - j) * cell_h
        for i in range(nx):
            v = values[j, i]
            if not math.isfinite(v):
                color = NAN_COLOR
            else:
                k = 0 if span == 0 else int(math.floor((v - vmin) / span * 255 + 0.5))
                color = COLOR_LUT[min(max(k, 0), 255)]
            out.append(f'<rect x="{left + i * cell_w}" y="{yy}" width="{cell_w}" '
                       f'height="{cell_h}" fill="{color}"/>')
    out.append("</g>")
    bar_x = left + w + 20
    for k in range(0, 256, 2):
        yy = top + h - (k + 2) * h / 256
        out.append(f'<rect x="{bar_x}" y="{yy:.3f}" width="12" height="{h / 128:.3f}" '
                   f'fill="{COLOR_LUT[k]}"/>')
    out += [
        f'<text x="{bar_x + 16}" y="{top + 8}">max {_fmt(vmax)}</text>',
        f'<text x="{bar_x + 16}" y="{top + h}">min {_fmt(vmin)}</text>',
        f'<text x="{left}" y="{top + h + 16}">{_fmt(x[0])}</text>',
        f'<text x="{left + w}" y="{top + h + 16}" text-anchor="end">{_fmt(x[-1])}</text>',
        f'<text x="{left + w / 2:.1f}" y="{top + h + 34}" text-anchor="middle">{xlabel}</text>',
        f'<text x="{left - 6}" y="{top + h}" text-anchor="end">{_fmt(y[0])}</text>',
        f'<text x="{left - 6}" y="{top + 10}" text-anchor="end">{_fmt(y[-1])}</text>',
        f'<text x="16" y="{top + h / 2:.1f}" text-anchor="middle" '
        f'transform="rotate(-90 16 {top + h / 2:.1f})">{ylabel}</text>',
        "</svg>",
    ]
    return "\n".join(out) + "\n"


def _label(axis: str) -> str:
    units = {"eps": "eps (GHz)", "tau": "tau (ps)", "tau_L": "tau_L (ps)",
             "tau_R": "tau_R (ps)", "tau_t": "tau_t (ps)"}
    return units.get(axis, axis)


def emit_outputs(bundle: ResultBundle, out_dir, formats=("csv", "json", "svg")) -> list[Path]:
    """Write the bundle; returns the written paths in a fixed order."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    name = bundle.scenario["name"]
    written: list[Path] = []

    def write(path: Path, text: str) -> None:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        written.append(path)

    groups = _groups(bundle)
    if "csv" in formats:
        for i, (axes, names) in enumerate(groups.items()):
            suffix = "" if i == 0 else "_" + ("_".join(axes) if axes else "summary")
            write(out / f"{name}{suffix}.csv", csv_text(bundle, axes, names))
    if "json" in formats:
        write(out / f"{name}.json", json_text(bundle))
    if "svg" in formats:
        for obs_name, obs in bundle.observables.items():
            if len(obs.axes) != 2:
                continue
            ya, xa = obs.axes
            write(out / f"{name}_{obs_name}.svg",
                  svg_heatmap(obs.values, bundle.axes[xa], bundle.axes[ya],
                              title=f"{name}: {obs_name}", xlabel=_label(xa),
                              ylabel=_label(ya)))
    return written
