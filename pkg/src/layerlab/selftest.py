"""Smoke-scale invariant suite behind ``layerlab selftest``.

Every check is deterministic and reports a short detail string without
timings, so two runs print identical summaries.  ``inject`` names a check
whose input is deliberately corrupted (fault injection).
"""

import numpy as np
import scipy.linalg
import scipy.sparse as sp

from . import __version__
from .cross_section import CrossSectionDomain, dirichlet_modes
from .discretization import LayerGrid, assemble_forms, assemble_unperturbed
from .geometry import (ImmersedBase, build_normal_frames, bump_profile, constant_profile,
                       fermi_metric, reduced_metric_tilde, with_metric)
from .scenarios import graph_values
from .spectral import count_below, smallest_eigenpairs, solve_spd
from .weyl import (ScanThresholds, build_singular_family, certify_scan, dual_norm,
                   matrix_weyl_bound, weyl_quotient)

FAULTS = ("det_identity", "stiffness_symmetry", "dense_agreement")


def _strip(length, cells, fiber_cells, base=None):
    dom = CrossSectionDomain.interval(np.pi, cells=fiber_cells)
    grid = LayerGrid.strip(length, cells, dom)
    base = base or ImmersedBase.curve([constant_profile(0.0)])
    return dom, grid, fermi_metric(base, None, grid)


def _base_eigs(n_cells, length):
    h = length / n_cells
    m = np.arange(1, n_cells)
    return 4.0 / h ** 2 * np.sin(m * np.pi / (2 * n_cells)) ** 2


def check_dense_agreement(fault):
    rng = np.random.default_rng(1)
    n = 80
    B = rng.standard_normal((n, n))
    K = B @ B.T + n * np.eye(n) * 0.01
    m = rng.uniform(0.5, 2.0, n)
    res = smallest_eigenpairs(sp.csr_matrix(K), 5, 1e-10, M=m)
    ref = scipy.linalg.eigh(K, np.diag(m), eigvals_only=True)[:5]
    if fault:
        ref = ref * (1 + 1e-3)
    err = float(np.abs(res.values - ref).max() / ref.max())
    return err <= 1e-8, "rel_err<=1e-8" if err <= 1e-8 else f"rel_err={err:.3e}"


def check_solve_spd(fault):
    x = solve_spd(sp.diags([1.0, 2.0, 4.0]), np.ones(3))
    rng = np.random.default_rng(2)
    B = rng.standard_normal((100, 100))
    A = B @ B.T + 100 * np.eye(100)
    b = rng.standard_normal(100)
    err = max(float(np.abs(x - [1, 0.5, 0.25]).max()),
              float(np.abs(solve_spd(A, b) - np.linalg.solve(A, b)).max()))
    return err <= 1e-8, "max_err<=1e-8" if err <= 1e-8 else f"max_err={err:.3e}"


def check_interval_energy(fault):
    modes = dirichlet_modes(CrossSectionDomain.interval(np.pi, cells=200), 3)
    exact = _base_eigs(200, np.pi)[:3]
    err = float(np.abs(modes.energies - exact).max())
    ok = err <= 1e-9 and abs(modes.E1 - 1.0) <= 1e-4
    return ok, f"E1={modes.E1:.8f}"


def check_frames_paraboloid(fault):
    h = 0.05
    ax = np.arange(-20, 21) * h
    X, Y = np.meshgrid(ax, ax, indexing="ij")
    base = ImmersedBase.graph((0.5 * (X ** 2 + Y ** 2))[None], h)
    fr = build_normal_frames(base)
    nrm = np.stack([-X, -Y, np.ones_like(X)], axis=-1)
    nrm /= np.linalg.norm(nrm, axis=-1, keepdims=True)
    err = float(np.abs(fr.frames[..., 0, :] - nrm).max())
    return err <= 1e-3, f"normal_err={err:.2e}"


def _fields():
    dom = CrossSectionDomain.interval(np.pi, cells=8)
    g1 = LayerGrid.strip(16.0, 32, dom)
    bent = fermi_metric(ImmersedBase.curve([bump_profile(0.5, 3.0)]), None, g1)
    sq = CrossSectionDomain.rectangle(1.0, 1.0, cells=6)
    g2 = LayerGrid.strip(8.0, 16, sq)
    twist = fermi_metric(ImmersedBase.curve([bump_profile(0.3, 2.0), constant_profile(0.0)],
                                            torsion=constant_profile(0.5)), None, g2)
    ax = np.linspace(-3, 3, 25)
    base = ImmersedBase.graph(graph_values({"type": "cap", "amplitude": 0.5, "radius": 2.0}, [ax, ax])[None],
                              ax[1] - ax[0], origin=(ax[0], ax[0]))
    g3 = LayerGrid.box([ax, ax], CrossSectionDomain.interval(0.5, cells=6))
    graph = fermi_metric(base, build_normal_frames(base), g3)
    return {"bent_strip": bent, "twisted_tube": twist, "graph_layer": graph}


def check_det_identity(fault):
    worst = 0.0
    for name, f in _fields().items():
        if fault and name == "bent_strip":
            G = f.G.copy()
            G[G.shape[0] // 2, G.shape[1] // 2, 0, 0] *= 1.01
            f = with_metric(f, G)
        dG, dGt = np.linalg.det(f.G), np.linalg.det(reduced_metric_tilde(f))
        worst = max(worst, float((np.abs(dG - dGt) / np.maximum(1, np.abs(dG))).max()))
    return worst <= 1e-10, "max_rel<=1e-10" if worst <= 1e-10 else f"max_rel={worst:.3e}"


def check_transverse_poincare(fault):
    worst = np.inf
    for f in _fields().values():
        fib = np.linalg.inv(f.G)[..., f.dim:, f.dim:] - np.eye(f.codim)
        worst = min(worst, float(np.linalg.eigvalsh(fib).min()))
    return worst >= -1e-12, "min_eig>=-1e-12" if worst >= -1e-12 else f"min_eig={worst:.3e}"


def check_flat_reduction(fault):
    _, _, f = _strip(8.0, 16, 8)
    d = float(np.abs(f.G - f.G0).max())
    return d == 0.0, f"max_abs={d:g}"


def check_stiffness_symmetry(fault):
    f = _fields()["bent_strip"]
    K = assemble_forms(f).K
    if fault:
        K = K.tolil()
        K[0, 1] += 1e-9
        K = K.tocsr()
    d = float(abs(K - K.T).max())
    return d == 0.0, f"max_abs={d:g}"


def check_product_spectrum(fault):
    L, N = 8 * np.pi, 128
    dom, grid, f = _strip(L, N, 16)
    modes = dirichlet_modes(dom, 2)
    forms = assemble_unperturbed(f, modes)
    res = smallest_eigenpairs(forms, 4)
    ref = np.sort(np.add.outer(modes.energies, _base_eigs(N, L)).ravel())[:4]
    err = float(np.abs(res.values - ref).max() / ref.max())
    thr = modes.E1 + 0.5
    cnt = count_below(forms, thr)
    ref_cnt = int(np.count_nonzero(np.add.outer(modes.energies, _base_eigs(N, L)) < thr))
    ok = err <= 1e-8 and cnt == ref_cnt
    return ok, f"rel_err<=1e-8 count={cnt}" if ok else f"rel_err={err:.3e} count={cnt}/{ref_cnt}"


def check_appendix_bound(fault):
    rng = np.random.default_rng(3)
    worst = np.inf
    for _ in range(3):
        n = int(rng.integers(10, 60))
        Q, _ = np.linalg.qr(rng.standard_normal((n, n)))
        w = np.sort(rng.uniform(0, 10, n))
        H = (Q * w) @ Q.T
        i = int(np.argmax(np.diff(w)))
        cert = matrix_weyl_bound(H, 0.5 * (w[i] + w[i + 1]))
        worst = min(worst, cert.min_value - cert.bound)
    return worst >= -1e-10, "margin>=0"


def check_dual_norm(fault):
    K = sp.diags([0.0, 1.0, 2.0]).tocsr()

    class _F:
        pass
    F = _F()
    F.K, F.M = K, sp.identity(3, format="csr")
    val = dual_norm(F, np.array([0.0, 0.5, 0.0]))
    return abs(val - 0.5 / np.sqrt(2)) <= 1e-12, f"value={val:.6f}"


def _small_strip():
    dom, grid, f = _strip(256.0, 512, 8)
    return dirichlet_modes(dom, 2), assemble_forms(f)


def check_quotient_decay(fault):
    modes, forms = _small_strip()
    lam = modes.E1 + 0.25
    fam = build_singular_family(forms.grid, modes, lam, 3, 16.0, mass=forms.mass)
    q = weyl_quotient(forms, fam, lam)
    r = q.values[1:] / q.values[:-1]
    ok = bool(np.all(r <= 0.7)) and q.orthogonality == 0.0
    return ok, "ratios=" + ",".join(f"{v:.3f}" for v in r)


def check_scan_decisions(fault):
    modes, forms = _small_strip()
    rep = certify_scan(forms, modes, [modes.E1 - 0.25, modes.E1 + 0.5],
                       ScanThresholds(r0=16.0), workers=1)
    ok = rep.decisions == ["rejected", "certified"] and rep.redecide() == rep.decisions
    return ok, "decisions=" + ",".join(rep.decisions)


CHECKS = [
    ("spectral.dense_agreement", check_dense_agreement, "dense_agreement"),
    ("spectral.solve_spd", check_solve_spd, None),
    ("cross_section.interval_energy", check_interval_energy, None),
    ("geometry.frames_paraboloid", check_frames_paraboloid, None),
    ("geometry.det_identity", check_det_identity, "det_identity"),
    ("geometry.transverse_poincare", check_transverse_poincare, None),
    ("geometry.flat_reduction", check_flat_reduction, None),
    ("discretization.stiffness_symmetry", check_stiffness_symmetry, "stiffness_symmetry"),
    ("discretization.product_spectrum", check_product_spectrum, None),
    ("weyl.appendix_bound", check_appendix_bound, None),
    ("weyl.dual_norm", check_dual_norm, None),
    ("weyl.quotient_decay", check_quotient_decay, None),
    ("weyl.scan_decisions", check_scan_decisions, None),
]


def selftest(inject=None):
    """Run all checks; returns ``(passed, summary_lines)``."""
    if inject is not None and inject not in FAULTS:
        raise ValueError(f"unknown fault {inject!r}; choose from {FAULTS}")
    lines = [f"layerlab selftest {__version__}"]
    failed = []
    for name, fn, fault_name in CHECKS:
        try:
            ok, detail = fn(inject is not None and inject == fault_name)
        except Exception as exc:  # a crashing check is a failing check
            ok, detail = False, f"{type(exc).__name__}: {exc}"
        lines.append(f"{'PASS' if ok else 'FAIL'} {name} {detail}")
        if not ok:
            failed.append(name)
    lines.append(f"{len(CHECKS) - len(failed)}/{len(CHECKS)} passed")
    if failed:
        lines.append("failed: " + " ".join(failed))
    return not failed, lines
