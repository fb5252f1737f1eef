"""Quadratic-form Weyl criterion on a truncated layer.

A singular family is a short sequence of wave packets ``xi_n (x) sigma_1``
with disjoint supports and doubling radii.  For each member the residual
``(K - lam M) psi_n`` is measured in the discrete dual norm
``sqrt(v^T (K + M)^{-1} v)``.  Decay of these quotients with the radius
certifies ``lam`` as a point of the essential spectrum; a quotient floor
bounded below by the distance to the truncated spectrum rejects it.
"""

import json
import logging
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np
import scipy.linalg

from .exceptions import DomainTooShort, LambdaInSpectrum
from .geometry import c2_bump
from .spectral import CG_TOL, SEED, count_below, eigenvalues_near, solve_spd

log = logging.getLogger(__name__)

DECISIONS = ("certified", "rejected", "inconclusive")
# spectral distances are only estimated while the count below lambda stays small
COUNT_CAP = 200


@dataclass(frozen=True)
class ScanThresholds:
    """Decision thresholds of the certification scan.

    ``r0`` is the radius of the first packet in base length units; member
    ``n`` has radius ``r0 * 2**(n-1)``.  The gap to the truncated spectrum
    counts as resolved when it is at least ``gap_ratio`` times the local level
    spacing: lambda then lies outside every quasi-continuous band of the
    truncation and cannot be certified, while an unresolved gap cannot be
    rejected.
    """

    slope_max: float = -0.3
    c_disc: float = 2.0
    floor_slack: float = 0.2
    r0: float = 16.0
    n_members: int = 3
    gap_ratio: float = 1.0

    def to_dict(self):
        return asdict(self)


@dataclass(frozen=True)
class SingularFamily:
    """Members ``psi_n`` (rows) on the unknowns of ``grid``, M-normalized."""

    members: np.ndarray
    centers: np.ndarray
    radii: np.ndarray
    boxes: tuple
    wavenumber: float
    lam: float
    E1: float
    grid: object = field(repr=False, default=None)

    def __len__(self):
        return self.members.shape[0]

    def supports(self):
        """Index sets of the nonzero entries of each member."""
        return [np.flatnonzero(m) for m in self.members]


def packet_wavenumber(lam, E1, h=None):
    """``sqrt(max(lam - E1, 0))``, or the matching discrete wavenumber of the
    3-point second difference when ``h`` is given."""
    d = max(lam - E1, 0.0)
    if h is None:
        return float(np.sqrt(d))
    c = 1.0 - 0.5 * d * h * h
    if c < -1.0:
        raise ValueError(f"lambda - E1 = {d} is beyond the grid's band edge 4/h^2")
    return float(np.arccos(c) / h)


def _pack(lo, hi, radii, gap):
    """Centres of consecutive disjoint boxes of the given radii, centred in (lo, hi)."""
    widths = 2 * np.asarray(radii)
    total = widths.sum() + gap * (len(radii) - 1)
    start = 0.5 * (lo + hi - total)
    lefts = start + np.concatenate([[0.0], np.cumsum(widths[:-1] + gap)])
    return lefts + np.asarray(radii), total


def max_members(length, r0, gap=0.0):
    """Largest n such that n boxes with radii r0 * 2**k fit into ``length``."""
    n = 0
    while 2 * r0 * (2 ** (n + 1) - 1) + gap * n <= length:
        n += 1
    return n


def build_singular_family(grid, modes, lam, n_members=3, r0=ScanThresholds.r0, *,
                          region=None, dispersion="continuum", mass=None):
    """Wave packets ``C_n c2_bump(|x - x_n| / R_n) cos(k (x_1 - x_n)) sigma_1(u)``.

    Members are packed left to right with increasing radius ``R_n = r0 2^(n-1)``
    inside ``region`` (an interval of the first base coordinate, by default
    the whole truncated base), centred in it.  Other base coordinates are
    centred on the middle of the base box.  ``dispersion="discrete"`` uses
    the wavenumber of the discrete base operator instead of ``sqrt(lam - E1)``.
    Members are normalized in the weights ``mass`` (a pencil's diagonal mass;
    the flat weights ``cell_volume`` by default).
    """
    if n_members < 1:
        raise ValueError("n_members must be positive")
    if modes.grid.shape != grid.fiber.shape:
        raise ValueError("cross-section modes were computed on a different fiber grid")
    E1 = modes.E1
    hx = grid.spacing[0]
    k = packet_wavenumber(lam, E1, hx if dispersion == "discrete" else None)
    x = grid.base_axes[0]
    lo, hi = (x[0], x[-1]) if region is None else (max(region[0], x[0]), min(region[1], x[-1]))
    radii = r0 * 2.0 ** np.arange(n_members)
    gap = 2 * hx
    centers1, total = _pack(lo, hi, radii, gap)
    if total > hi - lo:
        n_fit = max_members(hi - lo, r0, gap)
        raise DomainTooShort(f"{n_members} members with r0={r0} need length {total:.4g}, "
                             f"available {hi - lo:.4g}", n_fit)
    mids = [0.5 * (a[0] + a[-1]) for a in grid.base_axes[1:]]
    for a, c in zip(grid.base_axes[1:], mids):
        if radii[-1] > 0.5 * (a[-1] - a[0]):
            raise DomainTooShort(f"radius {radii[-1]:.4g} exceeds the transverse base extent",
                                 max_members(a[-1] - a[0], r0))
    m = np.full(grid.n_unknowns, grid.cell_volume) if mass is None else np.asarray(mass)
    base_mesh = np.meshgrid(*grid.base_axes, indexing="ij")
    sigma = modes.mode_grid(0)
    members, boxes = [], []
    for c1, R in zip(centers1, radii):
        center = [c1] + mids
        rho = np.sqrt(sum((X - c) ** 2 for X, c in zip(base_mesh, center)))
        xi = c2_bump(rho / R) * np.cos(k * (base_mesh[0] - c1))
        xi[~grid.base_interior] = 0.0
        full = np.multiply.outer(xi, sigma)
        v = grid.restrict(full)
        v /= np.sqrt(v @ (m * v))
        members.append(v)
        inside = rho < R
        boxes.append(tuple((int(ix.min()), int(ix.max())) for ix in np.nonzero(inside)))
    return SingularFamily(np.array(members), np.array([[c] + mids for c in centers1]),
                          radii, tuple(boxes), k, float(lam), E1, grid)


def dual_norm(forms, v, cg_tol=CG_TOL):
    """``sqrt(v^T (K + M)^{-1} v)`` with ``(K + M)`` solved by Jacobi-PCG."""
    v = np.asarray(v, dtype=float)
    if not np.any(v):
        return 0.0
    A = forms.K + forms.M
    y = solve_spd(A, v, cg_tol)
    return float(np.sqrt(max(v @ y, 0.0)))


@dataclass(frozen=True)
class QuotientSequence:
    """Weyl quotients ``q_n`` and the weak-convergence surrogate ``max |psi_n^T M psi_m|``."""

    values: np.ndarray
    radii: np.ndarray
    orthogonality: float

    def __len__(self):
        return len(self.values)

    def __iter__(self):
        return iter(self.values)

    def __getitem__(self, i):
        return self.values[i]


def weyl_quotient(forms, family, lam=None, cg_tol=CG_TOL):
    """``q_n = ||(K - lam M) psi_n||_{-1} / ||psi_n||_M`` for every member."""
    if family.grid is not None and family.grid.node_shape != forms.grid.node_shape:
        raise ValueError("family and forms live on different grids")
    lam = family.lam if lam is None else float(lam)
    m = forms.mass
    q = []
    for psi in family.members:
        v = forms.K @ psi - lam * (m * psi)
        q.append(dual_norm(forms, v, cg_tol) / np.sqrt(psi @ (m * psi)))
    W = family.members @ (m[:, None] * family.members.T)
    off = W[np.triu_indices(len(family), 1)]
    return QuotientSequence(np.array(q), family.radii.copy(), float(np.abs(off).max(initial=0.0)))


def decay_slope(q, radii):
    """Least-squares slope of ``log q`` against ``log R``."""
    q = np.asarray(q, dtype=float)
    if len(q) < 2 or np.any(q <= 0):
        return float("nan") if len(q) < 2 else float("-inf")
    return float(np.polyfit(np.log(radii), np.log(q), 1)[0])


def quotient_ceiling(h, r_last, c_disc):
    return c_disc * (h + 1.0 / r_last)


def quotient_floor(lam, eps, slack):
    """``slack * eps / sqrt(lam + eps + 1)``, the relaxed appendix lower bound."""
    return slack * eps / np.sqrt(lam + eps + 1.0)


def decide(q, radii, lam, h, eps_hat, thresholds, spacing=None):
    """Decision for one lambda from the stored quotients and thresholds.

    ``spacing`` is the mean gap between the truncated eigenvalues nearest
    ``lam``.  When it is given, a resolved gap ``eps_hat >= gap_ratio * spacing``
    blocks certification and an unresolved one blocks rejection.
    """
    q = np.asarray(q, dtype=float)
    slope = decay_slope(q, radii)
    decreasing = bool(np.all(np.diff(q) < 0))
    known = eps_hat is not None and np.isfinite(eps_hat)
    resolved = None if spacing is None or not known else eps_hat >= thresholds.gap_ratio * spacing
    if (decreasing and slope <= thresholds.slope_max and resolved is not True
            and q[-1] <= quotient_ceiling(h, radii[-1], thresholds.c_disc)):
        return "certified"
    if not known or resolved is False:
        return "inconclusive"
    if q.min() >= quotient_floor(lam, eps_hat, thresholds.floor_slack):
        return "rejected"
    return "inconclusive"


@dataclass
class ScanReport:
    """Per-lambda quotients, decisions and spectral context of a certification scan."""

    lambdas: list
    quotients: list
    radii: list
    slopes: list
    decisions: list
    counts_below: list
    eps_hat: list
    orthogonality: list
    thresholds: dict
    h: float
    E1: float
    metadata: dict = field(default_factory=dict)
    level_spacing: list = field(default_factory=list)

    def decision_for(self, lam):
        i = int(np.argmin(np.abs(np.asarray(self.lambdas) - lam)))
        return self.decisions[i]

    def redecide(self, thresholds=None):
        """Decisions recomputed from the stored quotients (same thresholds by default)."""
        th = ScanThresholds(**(thresholds or self.thresholds))
        spacing = self.level_spacing or [None] * len(self.lambdas)
        return [decide(q, self.radii, lam, self.h, e, th, s)
                for lam, q, e, s in zip(self.lambdas, self.quotients, self.eps_hat, spacing)]

    def to_dict(self):
        return asdict(self)

    def to_json(self, **kw):
        return json.dumps(self.to_dict(), sort_keys=True, **kw)

    @classmethod
    def from_dict(cls, d):
        return cls(**d)


def _workers(workers):
    if workers is None:
        workers = os.cpu_count() or 1
    cap = os.environ.get("LAYERLAB_THREADS")
    if cap:
        workers = min(workers, max(int(cap), 1))
    return max(int(workers), 1)


def _distance_to_spectrum(forms, lam, n_near=4):
    """Count below ``lam``, its distance to the truncated spectrum and the mean
    spacing of the ``n_near`` nearest eigenvalues (None, None if the count is too large)."""
    n_below = count_below(forms, lam)
    if n_below > COUNT_CAP:
        return n_below, None, None
    near = np.sort(eigenvalues_near(forms, lam, min(n_near, forms.n - 1)))
    spacing = float(np.diff(near).mean()) if len(near) > 1 else None
    return n_below, float(np.abs(near - lam).min()), spacing


def certify_scan(forms, modes, lambda_grid, thresholds=None, *, region=None,
                 dispersion="continuum", workers=None, metadata=None, cg_tol=CG_TOL):
    """Certify or reject each lambda of ``lambda_grid`` for the pencil ``forms``.

    Lambda points are independent and processed by a thread pool of at most
    ``workers`` threads (capped by ``LAYERLAB_THREADS``); the report is
    ordered as ``lambda_grid``.
    """
    th = thresholds or ScanThresholds()
    grid = forms.grid
    h = max(grid.spacing)
    lambdas = [float(v) for v in lambda_grid]
    # fail early on an infeasible schedule
    build_singular_family(grid, modes, lambdas[0] if lambdas else modes.E1, th.n_members, th.r0,
                          region=region, dispersion=dispersion)

    def one(lam):
        fam = build_singular_family(grid, modes, lam, th.n_members, th.r0, region=region,
                                    dispersion=dispersion, mass=forms.mass)
        qs = weyl_quotient(forms, fam, lam, cg_tol)
        n_below, eps, spacing = _distance_to_spectrum(forms, lam)
        dec = decide(qs.values, fam.radii, lam, h, eps, th, spacing)
        log.info("scan_point", extra={"data": {"lambda": lam, "decision": dec,
                                               "q": [float(v) for v in qs.values]}})
        return qs, n_below, eps, dec, spacing

    n_workers = min(_workers(workers), max(len(lambdas), 1))
    if n_workers > 1:
        with ThreadPoolExecutor(n_workers) as pool:
            out = list(pool.map(one, lambdas))
    else:
        out = [one(lam) for lam in lambdas]
    radii = [float(r) for r in th.r0 * 2.0 ** np.arange(th.n_members)]
    return ScanReport(
        lambdas=lambdas,
        quotients=[[float(v) for v in o[0].values] for o in out],
        radii=radii,
        slopes=[decay_slope(o[0].values, radii) for o in out],
        decisions=[o[3] for o in out],
        counts_below=[int(o[1]) for o in out],
        eps_hat=[o[2] for o in out],
        orthogonality=[o[0].orthogonality for o in out],
        thresholds=th.to_dict(),
        h=float(h),
        E1=float(modes.E1),
        metadata=dict(metadata or {}),
        level_spacing=[o[4] for o in out],
    )


@dataclass(frozen=True)
class WeylBoundCertificate:
    """Outcome of the matrix-level appendix bound check."""

    eps: float
    lam: float
    bound: float
    min_value: float
    argmin: np.ndarray
    values: np.ndarray

    @property
    def holds(self):
        return bool(self.min_value >= self.bound - 1e-10)


def matrix_dual_quotient(H, lam, psi, evals=None, evecs=None):
    """``||(H - lam) psi||_{-1}^2 / ||psi||^2`` with ``||v||_{-1}^2 = v^T (H + 1)^{-1} v``."""
    if evals is None:
        evals, evecs = scipy.linalg.eigh(H)
    c = evecs.T @ psi
    return float(np.sum(c * c * (evals - lam) ** 2 / (evals + 1.0)) / (psi @ psi))


def matrix_weyl_bound(H, lam, n_samples=100, seed=SEED):
    """Check ``||(H - lam) psi||_{-1}^2 >= eps^2 / (lam + eps + 1) ||psi||^2``
    on ``n_samples`` seeded random unit vectors, ``eps = dist(lam, spec H)``."""
    H = np.asarray(H, dtype=float)
    if H.ndim != 2 or H.shape[0] != H.shape[1]:
        raise ValueError("H must be a square matrix")
    if H.shape[0] > 500:
        raise ValueError("matrix harness is limited to size 500")
    scale = max(np.abs(H).max(), 1.0)
    if np.abs(H - H.T).max() > 1e-12 * scale:
        raise ValueError("H is not symmetric")
    evals, evecs = scipy.linalg.eigh(0.5 * (H + H.T))
    if evals[0] < -1e-12 * scale:
        raise ValueError(f"H is not positive semidefinite (min eigenvalue {evals[0]:.3e})")
    evals = np.maximum(evals, 0.0)
    eps = float(np.abs(evals - lam).min())
    if eps < 1e-12:
        raise LambdaInSpectrum(f"lambda={lam} lies in the spectrum (distance {eps:.3e})")
    bound = eps * eps / (lam + eps + 1.0)
    rng = np.random.default_rng(seed)
    psis = rng.standard_normal((n_samples, H.shape[0]))
    psis /= np.linalg.norm(psis, axis=1)[:, None]
    vals = np.array([matrix_dual_quotient(H, lam, p, evals, evecs) for p in psis])
    i = int(np.argmin(vals))
    return WeylBoundCertificate(eps, float(lam), float(bound), float(vals[i]), psis[i], vals)
