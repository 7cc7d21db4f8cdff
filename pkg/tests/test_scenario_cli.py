import copy
import json

import numpy as np
import pytest

from cqsim.cli import main
from cqsim.estimators import NormalizationSet, SensorTrace, forward_signals, write_trace_csv
from cqsim.scenario import (
    PRESETS,
    ScenarioError,
    expand_grid,
    load_preset,
    load_scenario,
    preset_dict,
    scenario_from_dict,
)

SMALL_RAMSEY = {
    "name": "small",
    "kind": "ramsey",
    "params": {"tc_left": 9.2, "tc_right": 5.0},
    "noise": {"sigma_eps_left": 12.0, "sigma_eps_right": 8.5, "nodes": 3},
    "sweep": {"eps": {"values": [-33, 0, 20]}, "tau": {"start": 0, "stop": 60, "step": 4}},
    "protocol": {"channel": "R", "fit": True},
}


def write_json(path, doc):
    path.write_text(json.dumps(doc))
    return str(path)


def test_presets_load():
    for name in PRESETS:
        sc = load_preset(name)
        assert sc.name == name
    assert load_preset("fig4").params.left.eps_idle == -300.0


def test_grid_expansion():
    assert expand_grid({"start": 0, "stop": 10, "step": 5}, "g").tolist() == [0, 5, 10]
    assert expand_grid({"start": 0, "stop": 9, "step": 5}, "g").tolist() == [0, 5]
    assert expand_grid({"start": 0, "stop": 0.3, "step": 0.1}, "g").size == 4
    assert expand_grid({"values": [3, 1]}, "g").tolist() == [3, 1]


@pytest.mark.parametrize("edit, field", [
    (lambda d: d["params"].pop("tc_left"), "params.tc_left"),
    (lambda d: d["params"].update(tc_right=-1), "params.tc_right"),
    (lambda d: d["noise"].update(nodes=4), "noise.nodes"),
    (lambda d: d["noise"].update(sigma_eps_left=-2), "noise.sigma_eps_left"),
    (lambda d: d["sweep"]["tau"].update(step=0), "sweep.tau.step"),
    (lambda d: d["sweep"].pop("eps"), "sweep.eps"),
    (lambda d: d["protocol"].update(channel="X"), "protocol.channel"),
    (lambda d: d.update(kind="nope"), "kind"),
    (lambda d: d.update(colour="red"), "scenario.colour"),
    (lambda d: d["params"].update(eps_init=1.0), "params.eps_init"),
    (lambda d: d.update(program="channel R\nseg a dur=1"), "program"),
])
def test_validation_names_the_field(edit, field):
    raw = copy.deepcopy(SMALL_RAMSEY)
    edit(raw)
    with pytest.raises(ScenarioError) as info:
        scenario_from_dict(raw)
    assert info.value.field == field
    assert str(info.value).startswith(field)


def test_truthtable_needs_idle_level():
    raw = preset_dict("fig4")
    raw["params"].pop("eps_idle")
    with pytest.raises(ScenarioError, match="params.eps_idle"):
        scenario_from_dict(raw)


def test_invalid_json(tmp_path):
    p = tmp_path / "bad.json"
    p.write_text("{nope")
    with pytest.raises(ScenarioError):
        load_scenario(p)


def test_exit_codes(tmp_path, capsys):
    bad = copy.deepcopy(SMALL_RAMSEY)
    bad["noise"]["nodes"] = 2
    assert main(["ramsey", "--config", write_json(tmp_path / "a.json", bad),
                 "--out", str(tmp_path)]) == 2
    assert "noise.nodes" in capsys.readouterr().err
    assert main(["correlated", "--config", write_json(tmp_path / "b.json", SMALL_RAMSEY),
                 "--out", str(tmp_path)]) == 2
    assert main(["ramsey", "--config", str(tmp_path / "missing.json")]) == 4
    mismatched = _analyze_setup(tmp_path, axis_right=np.arange(4.0) + 1)
    assert main(["analyze", "--config", mismatched, "--out", str(tmp_path / "o")]) == 3
    assert main(["analyze", "--config", _analyze_setup(tmp_path, drop_left=True),
                 "--out", str(tmp_path / "o")]) == 4


def _run_outputs(tmp_path, args, tag):
    out = tmp_path / tag
    assert main(args + ["--out", str(out)]) == 0
    return {p.name: p.read_bytes() for p in sorted(out.iterdir())}


def test_outputs_are_byte_identical_across_threads_and_runs(tmp_path):
    cfg = write_json(tmp_path / "s.json", SMALL_RAMSEY)
    a = _run_outputs(tmp_path, ["ramsey", "--config", cfg, "--threads", "1"], "a")
    b = _run_outputs(tmp_path, ["ramsey", "--config", cfg, "--threads", "3"], "b")
    c = _run_outputs(tmp_path, ["ramsey", "--config", cfg], "c")
    assert a == b == c
    assert set(a) == {"small.csv", "small_eps.csv", "small.json", "small_latch.svg",
                      "small_p_inner.svg"}


def test_csv_rows_and_json_layout(tmp_path):
    cfg = write_json(tmp_path / "s.json", SMALL_RAMSEY)
    files = _run_outputs(tmp_path, ["ramsey", "--config", cfg, "--format", "csv,json"], "o")
    lines = files["small.csv"].decode().splitlines()
    assert lines[0] == "eps,tau,latch,p_inner"
    assert len(lines) == 1 + 3 * 16
    assert lines[1].startswith("-33,0,")
    doc = json.loads(files["small.json"])
    assert set(doc) == {"scenario", "axes", "observables", "provenance"}
    assert np.shape(doc["observables"]["latch"]["values"]) == (3, 16)
    assert doc["provenance"]["noise"]["evaluation_points"] == 3
    assert b"\r" not in files["small.json"]


def test_seed_override_changes_monte_carlo(tmp_path):
    raw = copy.deepcopy(SMALL_RAMSEY)
    raw["noise"] = {"sigma_eps_right": 8.5, "scheme": "montecarlo", "samples": 200, "seed": 1}
    raw["protocol"]["fit"] = False
    cfg = write_json(tmp_path / "mc.json", raw)
    a = _run_outputs(tmp_path, ["ramsey", "--config", cfg, "--format", "csv"], "a")
    b = _run_outputs(tmp_path, ["ramsey", "--config", cfg, "--format", "csv", "--seed", "1"], "b")
    c = _run_outputs(tmp_path, ["ramsey", "--config", cfg, "--format", "csv", "--seed", "2"], "c")
    assert a == b and a != c


def _analyze_setup(tmp_path, *, axis_right=None, drop_left=False):
    norm = NormalizationSet(0.2, 1.4, 0.0, 0.5, 2.0, 1.5)
    axis = np.arange(4.0)
    p_l = np.array([0.0, 0.25, 0.9, 1.0])
    p_r = np.array([1.0, 0.5, 0.1, 0.0])
    l, r = forward_signals(p_l, p_r, norm)
    write_trace_csv(SensorTrace(axis if axis_right is None else axis_right, r), tmp_path / "r.csv")
    if not drop_left:
        write_trace_csv(SensorTrace(axis, l, "left"), tmp_path / "l.csv")
    else:
        (tmp_path / "l.csv").unlink(missing_ok=True)
    doc = {"name": "an", "kind": "analyze",
           "protocol": {"traces": {"left": "l.csv", "right": "r.csv"},
                        "normalization": {"r00": 0.2, "r01": 1.4, "l00": 0.0, "l01": 0.5,
                                          "l10": 2.0, "l11": 1.5}}}
    return write_json(tmp_path / "an.json", doc)


def test_analyze_recovers_probabilities(tmp_path):
    cfg = _analyze_setup(tmp_path)
    files = _run_outputs(tmp_path, ["analyze", "--config", cfg, "--format", "json"], "o")
    obs = json.loads(files["an.json"])["observables"]
    assert np.allclose(obs["p_left"]["values"], [0.0, 0.25, 0.9, 1.0], atol=1e-10)
    assert np.allclose(obs["p_right"]["values"], [1.0, 0.5, 0.1, 0.0], atol=1e-10)


def test_compile_subcommand(tmp_path, capsys):
    prog = tmp_path / "p.pp"
    prog.write_text("channel R\nseg a eps=init dur=100ps\nseg b eps=0 dur=tau fine\n")
    assert main(["compile", str(prog), "--bind", "tau=47", "--quantize", "40"]) == 0
    out = capsys.readouterr().out.splitlines()
    assert out[:3] == ["channel R", "seg a eps=init dur=100ps", "seg b eps=0GHz dur=tau fine"]
    assert out[3] == "channel,start_ps,end_ps,eps_ghz,label"
    assert out[4:] == ["R,0,120,150,a", "R,120,167,0,b"]
    assert main(["compile", str(prog)]) == 2
    assert main(["compile", str(prog), "--bind", "tau"]) == 2
