"""Acceptance criteria 1-10, one test each.

Every test prints a single ``PASS``/``FAIL`` line; the lines are repeated in
the pytest terminal summary.  Run alone with

    pytest tests/test_acceptance.py -v
"""

import copy
import os
import subprocess
import sys
import time
from contextlib import contextmanager

import numpy as np
import pytest

from layerlab.cross_section import CrossSectionDomain, dirichlet_modes
from layerlab.discretization import LayerGrid, assemble_forms
from layerlab.geometry import (ImmersedBase, build_normal_frames, constant_profile, fermi_metric,
                               reduced_metric_tilde)
from layerlab.runner import build_pipeline, run, run_harness
from layerlab.scenarios import make_base, make_grid, resolve
from layerlab.spectral import count_below, smallest_eigenpairs
from layerlab.weyl import certify_scan

import oracles
from test_discretization import comparison_orders

RESULTS = {}


@contextmanager
def criterion(number, title):
    """Record PASS/FAIL (and wall time) for one criterion; ``info["detail"]`` is printed."""
    info = {"detail": ""}
    t0 = time.perf_counter()
    try:
        yield info
    except BaseException as exc:
        ok, detail = False, f"{type(exc).__name__}: {str(exc).splitlines()[0] if str(exc) else ''}"
        raise
    else:
        ok, detail = True, info["detail"]
    finally:
        line = (f"{'PASS' if ok else 'FAIL'} criterion {number:2d} {title} "
                f"[{time.perf_counter() - t0:.1f} s] {detail}")
        RESULTS[number] = line
        print(line)


def test_c01_cross_section_energies():
    with criterion(1, "cross-section energies") as info:
        t0 = time.perf_counter()
        e_int = dirichlet_modes(CrossSectionDomain.interval(np.pi, h=np.pi / 2000), 1).E1
        e_sq = dirichlet_modes(CrossSectionDomain.rectangle(1.0, 1.0, h=1 / 200), 1).E1
        e_disk = dirichlet_modes(CrossSectionDomain.disk(1.0, 1 / 200), 1).E1
        elapsed = time.perf_counter() - t0
        j01 = oracles.bessel_j0_first_zero()
        errs = (abs(e_int - 1.0), abs(e_sq / (2 * np.pi ** 2) - 1), abs(e_disk / j01 ** 2 - 1))
        info["detail"] = "rel errors interval {:.2e} square {:.2e} disk {:.2e}".format(*errs)
        assert errs[0] <= 1e-5 and errs[1] <= 1e-3 and errs[2] <= 2e-2
        assert elapsed <= 30.0


def test_c02_unperturbed_spectrum():
    with criterion(2, "unperturbed strip spectrum") as info:
        t0 = time.perf_counter()
        L = 40 * np.pi
        grid = LayerGrid.strip(L, 2048, CrossSectionDomain.interval(np.pi, cells=64))
        forms = assemble_forms(fermi_metric(ImmersedBase.curve([constant_profile(0.0)]), None, grid))
        res = smallest_eigenpairs(forms, 50, shift=0.75)
        exact = oracles.continuum_strip(L, np.pi, 50)
        rel = float(np.abs(res.values / exact - 1).max())
        n2 = count_below(forms, 2.0)
        elapsed = time.perf_counter() - t0
        info["detail"] = (f"max rel error {rel:.2e}; count_below(2) = {n2} "
                          f"(oracle {oracles.strip_count_below(L, np.pi, 2.0)})")
        assert rel <= 1e-3
        assert abs(n2 - 40) <= 2
        assert elapsed <= 120.0


def _det_deviation(scenario):
    grid = make_grid(scenario)
    base = make_base(scenario["base"], list(grid.base_axes))
    frames = build_normal_frames(base) if base.kind == "graph_over_plane" else None
    f = fermi_metric(base, frames, grid)
    d, dt = np.linalg.det(f.G), np.linalg.det(reduced_metric_tilde(f))
    return float((np.abs(d - dt) / np.maximum(1.0, np.abs(d))).max())


def _rescaled(name, length, base_cells, fiber_cells):
    s = copy.deepcopy(resolve(name))
    s["base"]["length"] = length
    s["base"]["cells"] = base_cells
    s["cross_section"]["cells"] = fiber_cells
    return s


def test_c03_determinant_identity():
    with criterion(3, "determinant identity") as info:
        cases = {
            "bent_strip": [_rescaled("bent_strip", 64.0, 256, 16), _rescaled("bent_strip", 64.0, 512, 32)],
            "twisted_tube": [_rescaled("twisted_tube", 32.0, 64, 12), _rescaled("twisted_tube", 32.0, 128, 24)],
            "graph_layer": [_rescaled("graph_layer", [16.0, 16.0], [32, 32], 4),
                            _rescaled("graph_layer", [16.0, 16.0], [64, 64], 8)],
        }
        dev = {k: max(_det_deviation(s) for s in v) for k, v in cases.items()}
        info["detail"] = " ".join(f"{k} {v:.1e}" for k, v in dev.items())
        assert max(dev.values()) <= 1e-10


def test_c04_comparison_identity_order():
    with criterion(4, "comparison identity order") as info:
        d, orders = comparison_orders([2, 4, 8, 16], n_pairs=10)
        last = orders[-1]
        info["detail"] = f"orders at last halving min {last.min():.3f} median {np.median(last):.3f}"
        assert last.min() >= 1.8


def test_c05_appendix_bound():
    with criterion(5, "appendix dual-norm bound") as info:
        t0 = time.perf_counter()
        spec = resolve("matrix_harness")["harness"]
        rows = run_harness(spec)
        elapsed = time.perf_counter() - t0
        margin = min(r["min_value"] - r["bound"] for r in rows)
        info["detail"] = (f"{len(rows)} matrices, sizes <= {max(r['size'] for r in rows)}, "
                          f"min margin {margin:.3e}")
        assert len(rows) == 20 and max(r["size"] for r in rows) <= 300
        assert all(r["min_value"] >= r["bound"] - 1e-10 for r in rows)
        assert elapsed <= 60.0


def test_c06_threshold_from_above(tmp_path):
    with criterion(6, "bent strip threshold") as info:
        t0 = time.perf_counter()
        rec = run(resolve("bent_strip"), str(tmp_path))
        elapsed = time.perf_counter() - t0
        scan = rec.scan
        E1 = scan["E1"]
        above = [d for lam, d in zip(scan["lambdas"], scan["decisions"]) if lam >= E1 + 0.1 - 1e-9]
        below = [d for lam, d in zip(scan["lambdas"], scan["decisions"]) if lam <= E1 - 0.1 + 1e-9]
        l1 = {r["L"]: r["lambda"] for r in rec.eigenvalues if r["index"] == 1}
        L = sorted(l1)
        drift = abs(l1[L[1]] - l1[L[0]])
        info["detail"] = (f"{above.count('certified')}/{len(above)} certified above, "
                          f"{below.count('rejected')}/{len(below)} rejected below; "
                          f"lambda1 - E1 = {l1[L[0]] - E1:.4e}, drift L->2L {drift:.1e}")
        assert len(above) == 20 and all(d == "certified" for d in above)
        assert len(below) >= 1 and all(d == "rejected" for d in below)
        assert L[1] == 2 * L[0]
        assert l1[L[0]] < E1 and l1[L[1]] < E1
        assert drift <= 1e-3
        assert elapsed <= 600.0


def test_c07_periodic_bend_gap(tmp_path):
    with criterion(7, "periodic bend gap") as info:
        ce = run(resolve("periodic_bent_strip"), str(tmp_path)).counterexample
        info["detail"] = (f"delta = {ce['gap']:.4f} from L = {ce['lengths']}, "
                          f"spread {ce['spread_from_limit']:.1e}")
        assert len(ce["lengths"]) == 3
        assert ce["gap"] >= 0.01
        assert all(v <= ce["E1"] - 0.01 for v in ce["lambda1"])
        assert ce["spread_from_limit"] <= 1e-3


def test_c08_twist_gap_and_control(tmp_path):
    with criterion(8, "twisted tube gap and decaying control") as info:
        ce = run(resolve("twisted_tube"), str(tmp_path / "tw")).counterexample
        scan = run(resolve("twisted_tube_decaying"), str(tmp_path / "dec")).scan
        i = int(np.argmin(np.abs(np.asarray(scan["lambdas"]) - (scan["E1"] + 0.1))))
        info["detail"] = (f"delta' = {ce['gap']:.4f} from L = {ce['lengths']}, spread "
                          f"{ce['spread_from_limit']:.1e}; control at E1+0.1: {scan['decisions'][i]}")
        assert ce["gap"] >= 0.01
        assert all(v >= ce["E1"] + 0.01 for v in ce["lambda1"])
        assert ce["spread_from_limit"] <= 1e-3
        assert scan["decisions"][i] == "certified"


def test_c09_quotient_decay():
    with criterion(9, "Weyl quotient decay") as info:
        t0 = time.perf_counter()
        pipe = build_pipeline(resolve("straight_strip"))
        lam = pipe.modes.E1 + 0.25
        rep = certify_scan(pipe.forms, pipe.modes, [lam])
        q = np.asarray(rep.quotients[0])
        ratios = q[1:] / q[:-1]
        elapsed = time.perf_counter() - t0
        info["detail"] = (f"q = {np.array2string(q, precision=4)}, ratios "
                          f"{np.array2string(ratios, precision=3)}, {rep.decisions[0]}")
        assert len(q) == 3 and np.all(np.diff(rep.radii) > 0)
        assert np.all(ratios <= 0.7)
        assert elapsed <= 180.0


def test_c10_selftest_determinism(tmp_path):
    with criterion(10, "selftest determinism") as info:
        outs, times = [], []
        env = dict(os.environ)
        for _ in range(2):
            t0 = time.perf_counter()
            proc = subprocess.run([sys.executable, "-m", "layerlab.cli", "selftest"],
                                  capture_output=True, env=env, timeout=300)
            times.append(time.perf_counter() - t0)
            outs.append(proc)
        last = outs[0].stdout.decode().strip().splitlines()[-1]
        info["detail"] = f"{last}; runs {times[0]:.1f} s and {times[1]:.1f} s, identical: {outs[0].stdout == outs[1].stdout}"
        assert all(p.returncode == 0 for p in outs)
        assert outs[0].stdout == outs[1].stdout
        assert max(times) <= 120.0


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-v"]))
