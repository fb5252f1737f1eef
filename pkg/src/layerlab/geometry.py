"""Immersed bases, normal frames and Fermi-coordinate metrics of tubes.

Index conventions: base (tangent) indices ``i, j`` run over ``dim`` axes,
fiber indices ``alpha, beta`` over ``codim`` axes.  A metric tensor on the
layer is a ``(dim + codim) x (dim + codim)`` matrix with the base block
first.  Sampled tensor fields carry the matrix in their two trailing axes.
"""

import json
import os
import struct
from dataclasses import dataclass, replace

import numpy as np

from .exceptions import (DegenerateTangent, GridTooCoarse, MetricNotPositive,
                         SingularReference)

FRAME_TOL = 1e-8
COND_MAX = 1e8
DET_FLOOR = 1e-300
KINDS = ("curve_by_curvature", "graph_over_plane")


def c2_bump(t):
    """``(1 - t^2)^3`` on ``|t| < 1``, zero outside; twice continuously differentiable."""
    t = np.asarray(t, dtype=float)
    return np.where(np.abs(t) < 1.0, (1.0 - t * t) ** 3, 0.0)


# Curvature / torsion profiles.  Plain callables of the arclength are accepted
# anywhere a profile is expected; these cover the bundled scenarios.

def constant_profile(value):
    return lambda x: np.full(np.shape(x), float(value))


def bump_profile(amplitude, radius, center=0.0):
    return lambda x: amplitude * c2_bump((np.asarray(x) - center) / radius)


def periodic_profile(amplitude, period, phase=0.0):
    return lambda x: amplitude * np.sin(2 * np.pi * np.asarray(x) / period + phase)


@dataclass(frozen=True)
class ImmersedBase:
    """The base submanifold, either a curve given by its curvatures (and torsion)
    in arclength parametrization, or a graph ``x -> (x, sigma(x))`` sampled on a
    uniform grid.

    ``graph_functions`` has shape ``(codim,) + base_shape``.
    """

    dim: int
    codim: int
    kind: str
    curvature_profiles: tuple = ()
    torsion_profile: object = None
    graph_functions: np.ndarray = None
    h_base: tuple = None
    origin: tuple = None

    def __post_init__(self):
        if self.dim < 1 or self.codim < 1:
            raise ValueError("dim and codim must be positive")
        if self.kind not in KINDS:
            raise ValueError(f"kind must be one of {KINDS}")
        if self.kind == "curve_by_curvature":
            if self.dim != 1:
                raise ValueError("curves need dim = 1")
            if len(self.curvature_profiles) != self.codim:
                raise ValueError("one curvature profile per normal direction is required")
            if self.torsion_profile is not None and self.codim != 2:
                raise ValueError("a torsion profile needs codim = 2")
        else:
            f = self.graph_functions
            if f is None or f.shape[0] != self.codim or f.ndim != self.dim + 1:
                raise ValueError("graph_functions must have shape (codim,) + base grid shape")
            if not np.all(np.isfinite(f)):
                raise ValueError("graph functions must be finite")
            if len(self.h_base) != self.dim or min(self.h_base) <= 0:
                raise ValueError("h_base must hold one positive spacing per base axis")

    @classmethod
    def curve(cls, curvatures, torsion=None):
        curvatures = tuple(curvatures) if isinstance(curvatures, (list, tuple)) else (curvatures,)
        return cls(1, len(curvatures), "curve_by_curvature", curvatures, torsion)

    @classmethod
    def graph(cls, functions, h_base, origin=None):
        functions = np.asarray(functions, dtype=float)
        dim = functions.ndim - 1
        h_base = (float(h_base),) * dim if np.ndim(h_base) == 0 else tuple(float(h) for h in h_base)
        if origin is None:
            origin = tuple(-0.5 * (n - 1) * h for n, h in zip(functions.shape[1:], h_base))
        return cls(dim, functions.shape[0], "graph_over_plane", graph_functions=functions,
                   h_base=h_base, origin=tuple(float(o) for o in origin))

    def base_axes(self):
        """Node coordinates of the graph grid per base axis."""
        return tuple(o + h * np.arange(n) for o, h, n in
                     zip(self.origin, self.h_base, self.graph_functions.shape[1:]))


@dataclass(frozen=True)
class NormalFrameField:
    """Orthonormal normal frames on the graph grid.

    ``frames[..., a, :]`` is ``f_a`` in R^(dim+codim); ``connection[..., i, a, b]``
    is ``<d_i f_a, f_b>``; ``tangents[..., i, :]`` the coordinate tangents.
    """

    frames: np.ndarray
    connection: np.ndarray
    tangents: np.ndarray


@dataclass(frozen=True)
class SecondFundamentalForm:
    """``S[..., a, i, j] = <S_{f_a}(d_i), d_j>`` and the induced metric ``g``."""

    S: np.ndarray
    g: np.ndarray


@dataclass(frozen=True)
class BaseGeometry:
    """Base tensors sampled on a set of base points (grid shape ``shape``)."""

    g: np.ndarray
    S: np.ndarray
    connection: np.ndarray

    @property
    def shape(self):
        return self.g.shape[:-2]

    def cell_average(self):
        """Values at cell centres of the base grid (mean of the cell corners)."""
        def avg(a):
            nd = len(self.shape)
            for ax in range(nd):
                a = 0.5 * (np.take(a, range(1, a.shape[ax]), axis=ax)
                           + np.take(a, range(a.shape[ax] - 1), axis=ax))
            return a
        return BaseGeometry(avg(self.g), avg(self.S), avg(self.connection))


def _check_graph_grid(base):
    if base.kind != "graph_over_plane":
        raise ValueError("operation needs a graph base")
    if min(base.graph_functions.shape[1:]) < 3:
        raise GridTooCoarse("graph grid needs at least 3 points per axis")


def _grad(a, h, axis):
    return np.gradient(a, h, axis=axis, edge_order=2)


def build_normal_frames(base):
    """Orthonormal normal frames of a graph by Gram-Schmidt on the seeds
    ``n_a = (-grad sigma_a, e_a)``, with the normal connection from central
    differences of the frames (second-order one-sided at the grid edges)."""
    _check_graph_grid(base)
    dim, codim, h = base.dim, base.codim, base.h_base
    sig = base.graph_functions
    shape = sig.shape[1:]
    n = dim + codim
    # dsig[..., a, i] = d_i sigma_a
    dsig = np.stack([np.stack([_grad(sig[a], h[i], i) for i in range(dim)], axis=-1)
                     for a in range(codim)], axis=-2)
    tangents = np.zeros(shape + (dim, n))
    for i in range(dim):
        tangents[..., i, i] = 1.0
        tangents[..., i, dim:] = dsig[..., :, i]
    g = np.einsum("...ik,...jk->...ij", tangents, tangents)
    cond = np.linalg.cond(g.reshape(-1, dim, dim))
    if not np.all(cond <= COND_MAX):
        raise DegenerateTangent(f"induced metric condition number {cond.max():.3e} exceeds {COND_MAX:g}")
    seeds = np.zeros(shape + (codim, n))
    for a in range(codim):
        seeds[..., a, :dim] = -dsig[..., a, :]
        seeds[..., a, dim + a] = 1.0
    frames = np.zeros_like(seeds)
    for a in range(codim):
        v = seeds[..., a, :].copy()
        for b in range(a):
            v -= np.sum(v * frames[..., b, :], axis=-1, keepdims=True) * frames[..., b, :]
        frames[..., a, :] = v / np.linalg.norm(v, axis=-1, keepdims=True)
    dframes = np.stack([_grad(frames, h[i], i) for i in range(dim)], axis=-3)
    connection = np.einsum("...iak,...bk->...iab", dframes, frames)
    field = NormalFrameField(frames, connection, tangents)
    _check_frames(field)
    return field


def _check_frames(field, tol=FRAME_TOL):
    f = field.frames
    gram = np.einsum("...ak,...bk->...ab", f, f)
    err = np.abs(gram - np.eye(f.shape[-2])).max()
    perp = np.abs(np.einsum("...ik,...ak->...ia", field.tangents, f)).max()
    if err > tol or perp > tol:
        raise DegenerateTangent(f"frame orthonormality error {err:.2e}, tangency error {perp:.2e}")


def second_fundamental_form(base, frames):
    """``<S_{f_a} d_i, d_j>`` as the projection of the second derivatives of the
    graph onto the frames, and ``g_ij = delta_ij + sum_a d_i sigma_a d_j sigma_a``."""
    _check_graph_grid(base)
    dim, codim, h = base.dim, base.codim, base.h_base
    sig = base.graph_functions
    shape = sig.shape[1:]
    hess = np.zeros(shape + (codim, dim, dim))
    grads = np.zeros(shape + (codim, dim))
    for c in range(codim):
        for i in range(dim):
            di = _grad(sig[c], h[i], i)
            grads[..., c, i] = di
            for j in range(dim):
                hess[..., c, i, j] = _grad(di, h[j], j)
    hess = 0.5 * (hess + np.swapaxes(hess, -1, -2))
    # the embedding's second derivative d_i d_j X has only normal-slot entries
    S = np.einsum("...cij,...ac->...aij", hess, frames.frames[..., dim:])
    g = np.eye(dim) + np.einsum("...ci,...cj->...ij", grads, grads)
    return SecondFundamentalForm(S, g)


def curve_geometry(base, x):
    """Base tensors of a curve at arclength positions ``x``."""
    x = np.asarray(x, dtype=float)
    codim = base.codim
    g = np.ones(x.shape + (1, 1))
    S = np.zeros(x.shape + (codim, 1, 1))
    for a, kappa in enumerate(base.curvature_profiles):
        S[..., a, 0, 0] = kappa(x)
    conn = np.zeros(x.shape + (1, codim, codim))
    if base.torsion_profile is not None:
        tau = base.torsion_profile(x)
        conn[..., 0, 0, 1] = tau
        conn[..., 0, 1, 0] = -tau
    return BaseGeometry(g, S, conn)


def base_geometry(base, frames=None, x=None):
    """Base tensors on the graph grid, or at positions ``x`` for a curve."""
    if base.kind == "curve_by_curvature":
        if x is None:
            raise ValueError("curve geometry needs arclength positions x")
        return curve_geometry(base, x)
    if frames is None:
        frames = build_normal_frames(base)
    sff = second_fundamental_form(base, frames)
    return BaseGeometry(sff.g, sff.S, frames.connection)


def _fiber_flat(u):
    u = np.asarray(u, dtype=float)
    return u.reshape(-1, u.shape[-1]), u.shape[:-1]


def metric_tensors(bg, u):
    """Evaluate the Fermi metric on the product of base samples and fiber points.

    Returns ``(G, G0)`` with shape ``bg.shape + fiber_shape + (n, n)``.
    """
    uf, fshape = _fiber_flat(u)
    bshape = bg.shape
    dim, codim = bg.g.shape[-1], bg.S.shape[-3]
    n = dim + codim
    g = bg.g.reshape(-1, dim, dim)
    S = bg.S.reshape(-1, codim, dim, dim)
    conn = bg.connection.reshape(-1, dim, codim, codim)
    ginv = np.linalg.inv(g)
    uS = np.einsum("fa,paij->pfij", uf, S)
    SgS = np.einsum("paik,pkl,pblj->pabij", S, ginv, S)
    quad = np.einsum("fa,fb,pabij->pfij", uf, uf, SgS)
    C = np.einsum("fa,piab->pfib", uf, conn)
    G = np.zeros((g.shape[0], uf.shape[0], n, n))
    base_block = g[:, None] - 2.0 * uS + quad + np.einsum("pfib,pfjb->pfij", C, C)
    G[..., :dim, :dim] = 0.5 * (base_block + np.swapaxes(base_block, -1, -2))
    G[..., :dim, dim:] = C
    G[..., dim:, :dim] = np.swapaxes(C, -1, -2)
    G[..., dim:, dim:] = np.eye(codim)
    G0 = np.zeros_like(G)
    G0[..., :dim, :dim] = g[:, None]
    G0[..., dim:, dim:] = np.eye(codim)
    out = bshape + fshape + (n, n)
    return G.reshape(out), G0.reshape(out)


def shape_operator_norm(bg):
    """Pointwise ``sqrt(sum_a |g^{-1/2} S_a g^{-1/2}|^2)`` (spectral norms)."""
    dim = bg.g.shape[-1]
    w, V = np.linalg.eigh(bg.g)
    ginv_half = np.einsum("...ik,...k,...jk->...ij", V, 1.0 / np.sqrt(w), V)
    A = np.einsum("...ik,...akl,...lj->...aij", ginv_half, bg.S, ginv_half)
    norms = np.abs(np.linalg.eigvalsh(A)).max(axis=-1) if dim > 0 else 0
    return np.sqrt(np.sum(norms ** 2, axis=-1))


@dataclass(frozen=True)
class FermiMetricField:
    """Fermi metric sampled on the nodes and on the cell centres of a layer grid.

    Node arrays have shape ``grid.node_shape + (n, n)``; ``G_cells`` and
    ``G0_cells`` have shape ``grid.cell_shape + (n, n)``.  ``g``, ``S_contracted``
    and ``connection`` are base tensors at the base nodes.
    """

    grid: object
    G: np.ndarray
    G0: np.ndarray
    g: np.ndarray
    S_contracted: np.ndarray
    connection: np.ndarray
    G_cells: np.ndarray
    G0_cells: np.ndarray

    @property
    def dim(self):
        return self.g.shape[-1]

    @property
    def codim(self):
        return self.S_contracted.shape[-3]

    def fiber_points(self):
        return self.grid.fiber.points()

    def base_geometry(self):
        return BaseGeometry(self.g, self.S_contracted, self.connection)


def fermi_metric(base, frames, grid, check=True):
    """Fermi metric of the tube around ``base`` on ``grid`` (a LayerGrid).

    Evaluates the four term groups of the tube metric (base metric, linear and
    quadratic shape-operator terms, normal-connection terms) at every node and
    cell centre, plus the product metric ``diag(g, I)``.

    Raises MetricNotPositive when ``sup|u| * sup|S| >= 1`` on the grid or the
    metric fails to be positive definite at some sample.
    """
    if base.kind == "curve_by_curvature":
        x = grid.base_axes[0]
        nodes = curve_geometry(base, x)
        cells = curve_geometry(base, 0.5 * (x[1:] + x[:-1]))
    else:
        axes = base.base_axes()
        if tuple(a.size for a in axes) != tuple(a.size for a in grid.base_axes) or not all(
                np.allclose(a, b) for a, b in zip(axes, grid.base_axes)):
            raise ValueError("graph grid and layer base grid differ")
        nodes = base_geometry(base, frames)
        cells = nodes.cell_average()
    fib = grid.fiber
    u_nodes, u_cells = fib.points(), fib.cell_centers()
    if check:
        reach = np.sqrt(np.sum(u_nodes ** 2, axis=-1)).max() * shape_operator_norm(nodes).max()
        if reach >= 1.0:
            raise MetricNotPositive(
                f"sup|u| * sup|S| = {reach:.3f} >= 1: tube half-width too large for the curvature")
    G, G0 = metric_tensors(nodes, u_nodes)
    Gc, G0c = metric_tensors(cells, u_cells)
    if check:
        for arr in (G, Gc):
            lam = np.linalg.eigvalsh(arr.reshape(-1, *arr.shape[-2:]))
            if lam.min() <= 0:
                raise MetricNotPositive(f"metric has eigenvalue {lam.min():.3e} <= 0")
    return FermiMetricField(grid, G, G0, nodes.g, nodes.S, nodes.connection, Gc, G0c)


def reduced_metric_tilde(field):
    """Metric with the normal-connection terms removed, at the nodes.

    Base block ``g - 2 u_a S_a + u_a u_b S_a g^{-1} S_b``, off-diagonal blocks
    zero, fiber block identity.  Its determinant equals that of the full metric.
    """
    dim, codim = field.dim, field.codim
    n = dim + codim
    uf, fshape = _fiber_flat(field.fiber_points())
    bshape = field.g.shape[:-2]
    g = field.g.reshape(-1, dim, dim)
    S = field.S_contracted.reshape(-1, codim, dim, dim)
    ginv = np.linalg.inv(g)
    uS = np.einsum("fa,paij->pfij", uf, S)
    cross = np.einsum("pfik,pkl,pflj->pfij", uS, ginv, uS)
    Gt = np.zeros((g.shape[0], uf.shape[0], n, n))
    Gt[..., :dim, :dim] = g[:, None] - 2.0 * uS + cross
    Gt[..., dim:, dim:] = np.eye(codim)
    return Gt.reshape(bshape + fshape + (n, n))


def _inv_sqrt(A):
    w, V = np.linalg.eigh(A)
    return np.einsum("...ik,...k,...jk->...ij", V, 1.0 / np.sqrt(w), V)


def metric_deviation(G, G_ref):
    """``|G - G_ref|`` measured in ``G_ref``: spectral norm of ``G_ref^{-1/2} G G_ref^{-1/2} - I``."""
    R = _inv_sqrt(G_ref)
    mu = np.linalg.eigvalsh(np.einsum("...ik,...kl,...lj->...ij", R, G, R))
    return np.abs(mu - 1.0).max(axis=-1)


@dataclass(frozen=True)
class DeformationTensors:
    A: np.ndarray
    B: np.ndarray
    sup_A: float
    sup_B: float

    @property
    def sup_norms(self):
        return self.sup_A, self.sup_B


def deformation_tensors(G, G_ref, exterior_mask=None, det_floor=DET_FLOOR):
    """Deformation of ``G`` relative to ``G_ref``.

    ``A = I - c G G_ref^{-1}`` and ``B = 1 - c`` with
    ``c = sqrt(det G_ref / det G)``.  The sup norms are taken over
    ``exterior_mask`` (all points when None), ``|A|`` being the operator norm
    in the ``G_ref`` inner product.
    """
    G = np.asarray(G, dtype=float)
    G_ref = np.asarray(G_ref, dtype=float)
    if G.shape != G_ref.shape:
        raise ValueError("metric fields must share a grid")
    det_ref = np.linalg.det(G_ref)
    if np.any(det_ref < det_floor):
        raise SingularReference(f"det G_ref = {det_ref.min():.3e} below {det_floor:g}")
    c = np.sqrt(det_ref / np.linalg.det(G))
    n = G.shape[-1]
    A = np.eye(n) - c[..., None, None] * (G @ np.linalg.inv(G_ref))
    B = 1.0 - c
    # |A| in the G_ref inner product: max |1 - c mu| over eigenvalues mu of G_ref^{-1/2} G G_ref^{-1/2}
    R = _inv_sqrt(G_ref)
    mu = np.linalg.eigvalsh(np.einsum("...ik,...kl,...lj->...ij", R, G, R))
    normA = np.abs(1.0 - c[..., None] * mu).max(axis=-1)
    if exterior_mask is None:
        exterior_mask = np.ones(B.shape, dtype=bool)
    sup_A = float(normA[exterior_mask].max()) if exterior_mask.any() else 0.0
    sup_B = float(np.abs(B[exterior_mask]).max()) if exterior_mask.any() else 0.0
    return DeformationTensors(A, B, sup_A, sup_B)


# -- binary export -----------------------------------------------------------

MAGIC = b"LLMF"
VERSION = 1


def write_metric_binary(field, path, provenance=None):
    """Write the node samples of ``field.G`` to ``path`` plus a JSON sidecar.

    Layout (little-endian): magic ``LLMF``, u32 version, u32 dim, u32 codim,
    u32 number of grid axes, then per axis a u64 node count, then per axis a
    f64 spacing and a f64 origin; then, row-major over the nodes, the lower
    triangle of G row by row as f64.
    """
    grid = field.grid
    axes = tuple(grid.base_axes) + tuple(grid.fiber.axes)
    G = field.G
    n = G.shape[-1]
    rows, cols = np.tril_indices(n)
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<IIII", VERSION, field.dim, field.codim, len(axes)))
        fh.write(struct.pack(f"<{len(axes)}Q", *(a.size for a in axes)))
        for a in axes:
            fh.write(struct.pack("<dd", float(a[1] - a[0]), float(a[0])))
        fh.write(np.ascontiguousarray(G[..., rows, cols], dtype="<f8").tobytes())
    sidecar = {"format": "layerlab-metric", "version": VERSION, "file": os.path.basename(str(path)),
               "provenance": provenance or {}}
    with open(f"{path}.json", "w") as fh:
        json.dump(sidecar, fh, indent=2, sort_keys=True)


def read_metric_binary(path):
    """Inverse of :func:`write_metric_binary`; returns a dict with ``G`` rebuilt symmetric."""
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:4] != MAGIC:
        raise ValueError("not a layerlab metric file")
    version, dim, codim, nax = struct.unpack_from("<IIII", data, 4)
    off = 20
    shape = struct.unpack_from(f"<{nax}Q", data, off)
    off += 8 * nax
    spacing, origin = [], []
    for _ in range(nax):
        h, o = struct.unpack_from("<dd", data, off)
        spacing.append(h)
        origin.append(o)
        off += 16
    n = dim + codim
    rows, cols = np.tril_indices(n)
    tri = np.frombuffer(data, dtype="<f8", offset=off).reshape(tuple(shape) + (rows.size,))
    G = np.zeros(tuple(shape) + (n, n))
    G[..., rows, cols] = tri
    G[..., cols, rows] = tri
    return {"version": version, "dim": dim, "codim": codim, "shape": tuple(shape),
            "spacing": tuple(spacing), "origin": tuple(origin), "G": G}


def with_metric(field, G):
    """Copy of ``field`` with the node metric replaced (fault injection, tests)."""
    return replace(field, G=G)
