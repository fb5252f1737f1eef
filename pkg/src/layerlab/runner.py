"""Scenario pipeline: geometry -> cross-section -> forms -> spectra / Weyl scan,
with CSV, SVG and JSON outputs."""

import csv
import hashlib
import json
import logging
import os
from dataclasses import dataclass, field
from datetime import datetime, timezone

import numpy as np

from . import __version__
from .cross_section import dirichlet_modes
from .discretization import assemble_forms
from .exceptions import LayerlabError
from .geometry import build_normal_frames, fermi_metric, reduced_metric_tilde
from .scenarios import make_base, make_domain, make_grid, make_thresholds, scenario_hash
from .spectral import EIG_TOL, count_below, smallest_eigenpairs
from .svg import line_plot
from .weyl import certify_scan, matrix_weyl_bound

log = logging.getLogger(__name__)

# the LU preconditioner is shifted this far below E1
SHIFT_BELOW_E1 = 0.25


@dataclass
class Pipeline:
    grid: object
    base: object
    field: object
    forms: object
    modes: object


def build_pipeline(scenario, modes=None, length=None):
    """Grid, base, metric field and forms of a scenario (at truncation ``length``)."""
    grid = make_grid(scenario, length)
    if modes is None:
        modes = dirichlet_modes(make_domain(scenario["cross_section"]), scenario.get("modes", 6))
    base = make_base(scenario["base"], list(grid.base_axes))
    frames = build_normal_frames(base) if base.kind == "graph_over_plane" else None
    fld = fermi_metric(base, frames, grid)
    forms = assemble_forms(fld, grid)
    return Pipeline(grid, base, fld, forms, modes)


def lowest_eigenvalues(forms, count, E1, eig_tol=EIG_TOL):
    count = min(count, forms.n)
    res = smallest_eigenpairs(forms, count, eig_tol, shift=E1 - SHIFT_BELOW_E1)
    return res


def extrapolate_bottom(lengths, values):
    """Fit ``lambda_1(L) = a + b / L^2``; returns ``(a, b, max fit residual)``."""
    L = np.asarray(lengths, dtype=float)
    v = np.asarray(values, dtype=float)
    A = np.stack([np.ones_like(L), 1.0 / L ** 2], axis=1)
    coef, *_ = np.linalg.lstsq(A, v, rcond=None)
    resid = float(np.abs(A @ coef - v).max())
    return float(coef[0]), float(coef[1]), resid


def field_invariants(fld, forms):
    """Determinant identity, transverse Poincare structure and stiffness symmetry."""
    G = fld.G
    Gt = reduced_metric_tilde(fld)
    dG, dGt = np.linalg.det(G), np.linalg.det(Gt)
    det_dev = float((np.abs(dG - dGt) / np.maximum(1.0, np.abs(dG))).max())
    dim = fld.dim
    fib = np.linalg.inv(G)[..., dim:, dim:] - np.eye(fld.codim)
    poincare = float(np.linalg.eigvalsh(fib).min())
    K = forms.K
    sym = float(abs(K - K.T).max()) if K.nnz else 0.0
    return {"det_identity_max_rel": det_dev, "transverse_poincare_min_eig": poincare,
            "stiffness_asymmetry": sym}


def random_psd(rng, n):
    """Dense symmetric PSD matrix with a spread spectrum in [0, 10]."""
    Q, _ = np.linalg.qr(rng.standard_normal((n, n)))
    w = np.sort(rng.uniform(0, 10, n))
    w[0] = 0.0
    return (Q * w) @ Q.T


def gap_midpoint(H):
    w = np.linalg.eigvalsh(H)
    i = int(np.argmax(np.diff(w)))
    return 0.5 * (w[i] + w[i + 1])


def run_harness(spec):
    rng = np.random.default_rng(spec.get("seed", 0xFE41))
    rows = []
    for i in range(spec.get("matrices", 20)):
        n = int(rng.integers(10, spec.get("max_size", 300) + 1))
        H = random_psd(rng, n)
        lam = gap_midpoint(H)
        cert = matrix_weyl_bound(H, lam, spec.get("samples", 100), seed=int(rng.integers(2 ** 31)))
        rows.append({"index": i, "size": n, "lambda": float(lam), "eps": cert.eps, "bound": cert.bound,
                     "min_value": cert.min_value, "holds": cert.holds})
    return rows


# -- output helpers ------------------------------------------------------------

def _write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in r])


def _sha256(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if np.isfinite(v) else None
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    return obj


@dataclass
class ResultRecord:
    scenario: str
    scenario_hash: str
    started: str
    finished: str
    version: str
    energies: list = field(default_factory=list)
    eigenvalues: list = field(default_factory=list)
    counting: list = field(default_factory=list)
    scan: dict = None
    counterexample: dict = None
    harness: list = None
    invariants: dict = field(default_factory=dict)
    manifest: list = field(default_factory=list)

    def to_dict(self):
        return _jsonable(self.__dict__)


def _now():
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def run(scenario, out_dir, *, export_metric=False, export_matrices=False, workers=None):
    """Execute a validated scenario and write its outputs into ``out_dir``."""
    os.makedirs(out_dir, exist_ok=True)
    rec = ResultRecord(scenario["name"], scenario_hash(scenario), _now(), "", __version__)
    written = []

    def out(name):
        p = os.path.join(out_dir, name)
        written.append(name)
        return p

    exp = scenario["experiment"]
    log.info("run_start", extra={"data": {"scenario": scenario["name"], "experiment": exp}})
    try:
        if exp == "matrix_harness":
            rec.harness = run_harness(scenario["harness"])
            _write_csv(out("harness.csv"), ["index", "size", "lambda", "eps", "bound", "min_value", "holds"],
                       [[r[k] for k in ("index", "size", "lambda", "eps", "bound", "min_value")]
                        + [int(r["holds"])] for r in rec.harness])
        else:
            _run_layer(scenario, rec, out, export_metric, export_matrices, workers)
    except LayerlabError as exc:
        exc.args = (f"scenario {scenario['name']!r}: {exc.args[0] if exc.args else exc}",) + exc.args[1:]
        raise
    rec.finished = _now()
    rec.manifest = [{"file": n, "sha256": _sha256(os.path.join(out_dir, n)),
                     "bytes": os.path.getsize(os.path.join(out_dir, n))} for n in written]
    with open(os.path.join(out_dir, "results.json"), "w") as fh:
        json.dump(rec.to_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")
    log.info("run_done", extra={"data": {"scenario": scenario["name"], "files": len(written) + 1}})
    return rec


def _run_layer(scenario, rec, out, export_metric, export_matrices, workers):
    exp = scenario["experiment"]
    tol = scenario.get("tolerances", {})
    eig_tol = tol.get("eig_tol", EIG_TOL)
    pipe = build_pipeline(scenario)
    modes = pipe.modes
    E1 = modes.E1
    rec.energies = [{"k": k + 1, "E": float(e)} for k, e in enumerate(modes.energies)]
    _write_csv(out("energies.csv"), ["k", "E"], [[k + 1, float(e)] for k, e in enumerate(modes.energies)])
    rec.invariants = field_invariants(pipe.field, pipe.forms)

    if export_metric:
        from .geometry import write_metric_binary
        path = out("metric.bin")
        write_metric_binary(pipe.field, path, {"scenario": scenario["name"], "hash": rec.scenario_hash})
        out("metric.bin.json")
    if export_matrices:
        from .discretization import write_coo
        write_coo(pipe.forms.K, out("K.coo"))
        write_coo(pipe.forms.M, out("M.coo"))

    base_len = scenario["base"]["length"]
    truncations = scenario.get("truncations", [base_len] if np.ndim(base_len) == 0 else [None])
    count = scenario.get("eigenvalues", 6 if exp == "threshold" else 1)
    if exp != "scan":
        rows = []
        for L in truncations:
            p = pipe if (L is None or L == base_len) else build_pipeline(scenario, modes, L)
            res = lowest_eigenvalues(p.forms, count, E1, eig_tol)
            Lval = float(L) if L is not None else float(np.ptp(p.grid.base_axes[0]))
            for i, v in enumerate(res.values):
                rows.append({"L": Lval, "index": i + 1, "lambda": float(v), "lambda_minus_E1": float(v - E1),
                             "residual": float(res.residuals[i])})
        rec.eigenvalues = rows
        _write_csv(out("eigenvalues.csv"), ["L", "index", "lambda", "lambda_minus_E1"],
                   [[r["L"], r["index"], r["lambda"], r["lambda_minus_E1"]] for r in rows])
        if exp.startswith("counterexample"):
            Ls = [r["L"] for r in rows if r["index"] == 1]
            l1 = [r["lambda"] for r in rows if r["index"] == 1]
            a, b, resid = extrapolate_bottom(Ls, l1) if len(Ls) >= 2 else (l1[0], 0.0, 0.0)
            gap = E1 - a if exp == "counterexample_bend" else a - E1
            rec.counterexample = {"lengths": Ls, "lambda1": l1, "limit": a, "slope_1_over_L2": b,
                                  "fit_residual": resid, "gap": gap, "E1": E1,
                                  "spread_from_limit": float(np.abs(np.asarray(l1) - a).max())}
            _write_csv(out("counterexample.csv"), ["L", "lambda1", "lambda1_minus_E1"],
                       [[L, v, v - E1] for L, v in zip(Ls, l1)])
            line_plot([("lambda_1(L) - E1", Ls, [v - E1 for v in l1]),
                       ("fitted limit", [min(Ls), max(Ls)], [a - E1, a - E1])],
                      out("lambda_vs_L.svg"), title=f"{scenario['name']}: bottom vs truncation",
                      xlabel="L", ylabel="lambda_1 - E1")

    if "counting" in scenario:
        cs = scenario["counting"]
        shift = E1 if cs.get("relative_to_E1", True) else 0.0
        thr = [shift + t for t in cs["thresholds"]]
        counts = [count_below(pipe.forms, t) for t in thr]
        rec.counting = [{"threshold": float(t), "count": int(c)} for t, c in zip(thr, counts)]
        _write_csv(out("counting.csv"), ["threshold", "count"], [[float(t), int(c)] for t, c in zip(thr, counts)])
        line_plot([("N(lambda)", thr, counts)], out("counting.svg"), title=f"{scenario['name']}: eigenvalue counting",
                  xlabel="threshold", ylabel="count below")

    if "scan" in scenario:
        sc = scenario["scan"]
        shift = E1 if sc.get("relative_to_E1", True) else 0.0
        lambdas = [shift + v for v in sc["lambdas"]]
        report = certify_scan(pipe.forms, modes, lambdas, make_thresholds(scenario),
                              region=sc.get("region"), dispersion=sc.get("dispersion", "continuum"),
                              workers=workers, cg_tol=tol.get("cg_tol", 1e-10),
                              metadata={"scenario": scenario["name"], "grid": list(pipe.grid.node_shape),
                                        "spacing": list(pipe.grid.spacing)})
        rec.scan = report.to_dict()
        write_scan_outputs(report, out, scenario["name"])


def write_scan_outputs(report, out, name):
    rows = []
    for lam, q, dec, s in zip(report.lambdas, report.quotients, report.decisions, report.slopes):
        for n, (R, v) in enumerate(zip(report.radii, q)):
            rows.append([lam, lam - report.E1, n + 1, R, v, s, dec])
    _write_csv(out("scan.csv"), ["lambda", "lambda_minus_E1", "member", "R", "q", "slope", "decision"], rows)
    series = [(f"{lam - report.E1:+.2f}", report.radii, q) for lam, q in zip(report.lambdas, report.quotients)]
    line_plot(series, out("quotients.svg"), title=f"{name}: Weyl quotients", xlabel="R", ylabel="q_n",
              logx=True, logy=True)
