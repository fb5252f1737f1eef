import hashlib
import json
import os
import xml.etree.ElementTree as ET

import numpy as np
import pytest

from layerlab import scenarios
from layerlab.cli import main, parse_domain
from layerlab.discretization import read_coo
from layerlab.exceptions import SchemaError
from layerlab.geometry import read_metric_binary
from layerlab.runner import extrapolate_bottom, run
from layerlab.svg import line_plot

PI = 3.141592653589793

SMALL_STRIP = {
    "name": "small_strip",
    "experiment": "threshold",
    "base": {"kind": "curve", "length": 64.0, "cells": 128,
             "curvature": [{"type": "bump", "amplitude": 0.3, "radius": 4.0}]},
    "cross_section": {"shape": "interval", "length": PI, "cells": 8},
    "eigenvalues": 3,
    "counting": {"thresholds": [-0.5, 0.5]},
    "scan": {"lambdas": [-0.3, 0.5], "region": [0.0, 32.0]},
    "thresholds": {"r0": 2.0, "n_members": 3},
}

SMALL_PERIODIC = {
    "name": "small_periodic",
    "experiment": "counterexample_bend",
    "base": {"kind": "curve", "length": 16.0, "cells": 32,
             "curvature": [{"type": "periodic", "amplitude": 0.5, "period": 8.0}]},
    "cross_section": {"shape": "interval", "length": PI, "cells": 6},
    "truncations": [16.0, 32.0, 64.0],
}

SMALL_GRAPH = {
    "name": "small_graph",
    "experiment": "threshold",
    "base": {"kind": "graph", "length": [8.0, 8.0], "cells": [16, 16],
             "graph": {"type": "cap", "amplitude": 0.3, "radius": 2.0}},
    "cross_section": {"shape": "interval", "length": 1.0, "cells": 6},
    "eigenvalues": 1,
}


def write_scenario(tmp_path, data, name="scenario.json"):
    path = tmp_path / name
    path.write_text(json.dumps(data))
    return str(path)


# -- scenarios -------------------------------------------------------------------

def test_bundled_scenarios_validate():
    names = scenarios.bundled_names()
    assert {"straight_strip", "bent_strip", "periodic_bent_strip", "twisted_tube",
            "twisted_tube_decaying", "graph_layer", "matrix_harness"} <= set(names)
    for n in names:
        data = scenarios.resolve(n)
        assert data["name"] == n
    assert scenarios.resolve("bent_strip.json")["name"] == "bent_strip"
    with pytest.raises(FileNotFoundError):
        scenarios.bundled_path("no_such_scenario")


@pytest.mark.parametrize("mutate, pointer", [
    (lambda d: d.pop("cross_section"), "/cross_section"),
    (lambda d: d["base"].pop("cells"), "/base/cells"),
    (lambda d: d["base"].update(cells=0), "/base/cells"),
    (lambda d: d.update(experiment="nonsense"), "/experiment"),
    (lambda d: d["thresholds"].update(c_disc=-1.0), "/thresholds/c_disc"),
    (lambda d: d.update(extra=1), ""),
])
def test_schema_errors_carry_pointer(mutate, pointer):
    data = json.loads(json.dumps(SMALL_STRIP))
    mutate(data)
    with pytest.raises(SchemaError) as info:
        scenarios.validate(data)
    assert info.value.pointer == pointer


def test_load_scenario_sources(tmp_path):
    path = write_scenario(tmp_path, SMALL_STRIP)
    assert scenarios.load_scenario(path) == SMALL_STRIP
    assert scenarios.load_scenario(json.dumps(SMALL_STRIP)) == SMALL_STRIP
    with pytest.raises(SchemaError):
        scenarios.load_scenario("{not json")
    assert scenarios.scenario_hash(SMALL_STRIP) == scenarios.scenario_hash(json.loads(json.dumps(SMALL_STRIP)))


def test_parse_domain():
    d = parse_domain("interval:length=2.0,cells=20")
    assert d.grid().shape == (21,)
    d = parse_domain('{"shape": "rectangle", "width": 1, "height": 2, "cells": [4, 8]}')
    assert d.grid().shape == (5, 9)
    with pytest.raises(SchemaError):
        parse_domain("triangle:side=1")
    with pytest.raises(SchemaError):
        parse_domain("interval:length")


# -- runner ------------------------------------------------------------------------

def _sha(path):
    return hashlib.sha256(open(path, "rb").read()).hexdigest()


def test_run_outputs_and_manifest(tmp_path):
    out = tmp_path / "out"
    rec = run(scenarios.validate(json.loads(json.dumps(SMALL_STRIP))), str(out), workers=1)
    files = {m["file"] for m in rec.manifest}
    assert {"energies.csv", "eigenvalues.csv", "counting.csv", "counting.svg",
            "scan.csv", "quotients.svg"} <= files
    for m in rec.manifest:
        p = out / m["file"]
        assert m["sha256"] == _sha(p) and m["bytes"] == os.path.getsize(p)
    res = json.loads((out / "results.json").read_text())
    assert res["scenario_hash"] == scenarios.scenario_hash(SMALL_STRIP)
    assert res["invariants"]["det_identity_max_rel"] <= 1e-10
    assert res["invariants"]["stiffness_asymmetry"] == 0.0
    assert res["scan"]["decisions"][0] == "rejected"
    lam = [r["lambda"] for r in res["eigenvalues"]]
    assert lam == sorted(lam)
    header = (out / "eigenvalues.csv").read_text().splitlines()[0]
    assert header == "L,index,lambda,lambda_minus_E1"


def test_run_is_byte_reproducible(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    for d in (a, b):
        run(scenarios.validate(json.loads(json.dumps(SMALL_STRIP))), str(d), workers=2)
    for name in ("energies.csv", "eigenvalues.csv", "counting.csv", "scan.csv", "quotients.svg"):
        assert (a / name).read_bytes() == (b / name).read_bytes()


def test_counterexample_run(tmp_path):
    rec = run(scenarios.validate(SMALL_PERIODIC), str(tmp_path))
    ce = rec.counterexample
    assert ce["lengths"] == [16.0, 32.0, 64.0]
    assert ce["gap"] > 0
    assert (tmp_path / "lambda_vs_L.svg").exists()
    a, b, resid = extrapolate_bottom([1.0, 2.0, 4.0], [3 + 2 / 1, 3 + 2 / 4, 3 + 2 / 16])
    assert (a, b) == pytest.approx((3.0, 2.0)) and resid <= 1e-12


def test_export_metric_and_matrices(tmp_path):
    rec = run(scenarios.validate(SMALL_GRAPH), str(tmp_path), export_metric=True, export_matrices=True)
    files = {m["file"] for m in rec.manifest}
    assert {"metric.bin", "metric.bin.json", "K.coo", "M.coo"} <= files
    data = read_metric_binary(str(tmp_path / "metric.bin"))
    assert data["dim"] == 2 and data["codim"] == 1
    G = data["G"]
    assert np.array_equal(G, np.swapaxes(G, -1, -2))
    side = json.loads((tmp_path / "metric.bin.json").read_text())
    assert side["provenance"]["scenario"] == "small_graph" and side["file"] == "metric.bin"
    n = 15 * 15 * 5
    K = read_coo(str(tmp_path / "K.coo"), (n, n))
    assert abs(K - K.T).max() == 0.0


def test_harness_run(tmp_path):
    data = {"name": "h", "experiment": "matrix_harness",
            "harness": {"matrices": 3, "max_size": 40, "samples": 10, "seed": 5}}
    rec = run(scenarios.validate(data), str(tmp_path))
    assert len(rec.harness) == 3 and all(r["holds"] for r in rec.harness)
    lines = (tmp_path / "harness.csv").read_text().splitlines()
    assert lines[0] == "index,size,lambda,eps,bound,min_value,holds" and len(lines) == 4


# -- command line -----------------------------------------------------------------

def test_cli_modes(capsys, tmp_path):
    assert main(["modes", "--domain", f"interval:length={PI},cells=200", "--count", "3"]) == 0
    out = json.loads(capsys.readouterr().out)
    assert out["energies"] == pytest.approx([1.0, 4.0, 9.0], rel=2e-3)
    target = tmp_path / "modes.json"
    assert main(["modes", "--domain", "rectangle:width=1,height=1,cells=8", "--count", "2",
                 "--out", str(target), "--csv"]) == 0
    assert json.loads(target.read_text())["count"] == 2
    grid = np.loadtxt(tmp_path / "modes_mode1.csv", delimiter=",")
    assert grid.shape == (9, 9)


def test_cli_run_and_scan(capsys, tmp_path):
    path = write_scenario(tmp_path, SMALL_STRIP)
    assert main(["run", "--scenario", path, "--out", str(tmp_path / "r"), "--workers", "1"]) == 0
    printed = json.loads(capsys.readouterr().out)
    assert "results.json" in printed["files"]
    assert main(["scan", "--scenario", path, "--lambda-min", "-0.3", "--lambda-max", "0.5",
                 "--steps", "2", "--relative", "--out", str(tmp_path / "s")]) == 0
    printed = json.loads(capsys.readouterr().out)
    assert printed["decision"][0] == "rejected"
    rep = json.loads((tmp_path / "s" / "scan.json").read_text())
    assert rep["metadata"]["scenario"] == "small_strip"


def test_cli_exit_codes(capsys, tmp_path):
    bad = dict(SMALL_STRIP)
    bad.pop("cross_section")
    assert main(["run", "--scenario", write_scenario(tmp_path, bad)]) == 2
    assert "/cross_section" in capsys.readouterr().err
    assert main(["run", "--scenario", str(tmp_path / "missing.json")]) == 2
    too_short = json.loads(json.dumps(SMALL_STRIP))
    too_short["thresholds"]["r0"] = 16.0
    assert main(["run", "--scenario", write_scenario(tmp_path, too_short, "short.json"),
                 "--out", str(tmp_path / "x")]) == 4
    assert main(["modes", "--domain", "interval:length=1,cells=1"]) == 4
    assert main(["scan", "--scenario", write_scenario(tmp_path, SMALL_STRIP), "--lambda-min", "0",
                 "--lambda-max", "1", "--steps", "0"]) == 2
    assert main(["selftest", "--inject-fault", "bogus"]) == 2


@pytest.mark.slow
def test_cli_selftest_and_fault(capsys, tmp_path):
    a, b = tmp_path / "a.txt", tmp_path / "b.txt"
    assert main(["selftest", "--summary-out", str(a)]) == 0
    assert main(["selftest", "--summary-out", str(b)]) == 0
    assert a.read_bytes() == b.read_bytes()
    assert a.read_text().splitlines()[-1].endswith("passed")
    capsys.readouterr()
    assert main(["selftest", "--inject-fault", "det_identity"]) == 4
    assert "FAIL geometry.det_identity" in capsys.readouterr().out


def test_svg_is_well_formed(tmp_path):
    path = tmp_path / "p.svg"
    line_plot([("a", [1, 10, 100], [1.0, 0.5, 0.25]), ("b<&>", [1, 2], [0.0, -1.0])], str(path),
              title="t & u", logx=True, logy=True)
    root = ET.parse(path).getroot()
    assert root.tag.endswith("svg")
    assert len([e for e in root.iter() if e.tag.endswith("polyline")]) >= 1
