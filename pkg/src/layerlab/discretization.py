"""Stiffness and mass matrices of the Dirichlet form on a truncated layer.

The quadratic form ``int dpsi . G^{-1} dpsi sqrt(det G)`` is discretized on a
tensor-product node grid with one quadrature point per cell (the cell
centre).  Within a cell the diagonal part of ``sqrt(det G) G^{-1}`` weighs the
squared edge differences and the off-diagonal part couples cell-averaged
gradients.  With ``G`` constant this reproduces the classical 3/5/7-point
stencil, and every cell contributes a positive semidefinite block.
"""

from dataclasses import dataclass
from itertools import product

import numpy as np
import scipy.sparse as sp

from .cross_section import CrossSectionDomain, FiberGrid
from .exceptions import MetricNotPositive, OutOfMemory
from .geometry import deformation_tensors

MAX_UNKNOWNS = 5_000_000


@dataclass(frozen=True)
class LayerGrid:
    """Tensor-product node grid: base axes (ends Dirichlet) times a cross-section grid."""

    base_axes: tuple
    fiber: FiberGrid

    @classmethod
    def strip(cls, length, cells, fiber, center=0.0):
        """Grid over ``[center - length/2, center + length/2]`` with ``cells`` base cells."""
        fiber = fiber.grid() if isinstance(fiber, CrossSectionDomain) else fiber
        x = np.linspace(center - 0.5 * length, center + 0.5 * length, int(cells) + 1)
        return cls((x,), fiber)

    @classmethod
    def box(cls, axes, fiber):
        fiber = fiber.grid() if isinstance(fiber, CrossSectionDomain) else fiber
        return cls(tuple(np.asarray(a, dtype=float) for a in axes), fiber)

    @property
    def dim(self):
        return len(self.base_axes)

    @property
    def codim(self):
        return self.fiber.ndim

    @property
    def axes(self):
        return tuple(self.base_axes) + tuple(self.fiber.axes)

    @property
    def node_shape(self):
        return tuple(a.size for a in self.axes)

    @property
    def cell_shape(self):
        return tuple(a.size - 1 for a in self.axes)

    @property
    def spacing(self):
        return tuple(float(a[1] - a[0]) for a in self.axes)

    @property
    def cell_volume(self):
        return float(np.prod(self.spacing))

    @property
    def base_interior(self):
        mask = np.zeros(tuple(a.size for a in self.base_axes), dtype=bool)
        mask[tuple(slice(1, -1) for _ in self.base_axes)] = True
        return mask

    @property
    def interior(self):
        b = self.base_interior
        f = self.fiber.interior
        return b.reshape(b.shape + (1,) * f.ndim) & f.reshape((1,) * b.ndim + f.shape)

    @property
    def n_unknowns(self):
        return int(self.base_interior.sum()) * self.fiber.n_unknowns

    def unknown_index(self):
        """Node-shaped array of unknown ids, -1 on Dirichlet nodes."""
        idx = np.full(self.node_shape, -1, dtype=np.int64)
        inner = self.interior
        idx[inner] = np.arange(int(inner.sum()))
        return idx

    def restrict(self, values):
        """Node-shaped array -> vector of unknowns."""
        return np.asarray(values)[self.interior]

    def lift(self, vector):
        """Vector of unknowns -> node-shaped array with zeros on Dirichlet nodes."""
        out = np.zeros(self.node_shape)
        out[self.interior] = vector
        return out

    def mesh(self):
        """Node coordinates, one node-shaped array per axis."""
        return np.meshgrid(*self.axes, indexing="ij")


@dataclass(frozen=True)
class DiscreteForms:
    """Sparse stiffness ``K`` and diagonal mass (weights ``mass``) on the unknowns."""

    K: sp.csr_matrix
    mass: np.ndarray
    grid: LayerGrid
    field: object = None

    @property
    def M(self):
        return sp.diags(self.mass, format="csr")

    @property
    def n(self):
        return self.mass.size

    def rayleigh(self, v):
        return float(v @ (self.K @ v)) / float(v @ (self.mass * v))

    def norm(self, v):
        return float(np.sqrt(v @ (self.mass * v)))


def _stencil_tensor(n, spacing):
    """Coefficients ``T[M, N, a, b]`` with local cell matrix ``k_ab = sum W^{MN} T[M, N, a, b]``."""
    corners = np.array(list(product((0, 1), repeat=n)))
    nc = corners.shape[0]
    T = np.zeros((n, n, nc, nc))
    half = 2 ** (n - 1)
    sign = np.where(corners == 1, 1.0, -1.0)
    for M in range(n):
        w = 1.0 / (half * spacing[M] ** 2)
        for a, b0 in enumerate(corners):
            if b0[M]:
                continue
            b1 = b0.copy()
            b1[M] = 1
            b = int(np.flatnonzero((corners == b1).all(axis=1))[0])
            T[M, M, a, a] += w
            T[M, M, b, b] += w
            T[M, M, a, b] -= w
            T[M, M, b, a] -= w
        for N in range(n):
            if N == M:
                continue
            sM = sign[:, M] / (half * spacing[M])
            sN = sign[:, N] / (half * spacing[N])
            T[M, N] += np.outer(sM, sN)
    return corners, T


def _cell_weights(G_cells, vol):
    det = np.linalg.det(G_cells)
    if np.any(det <= 0):
        raise MetricNotPositive("metric determinant not positive at some cell")
    W = np.linalg.inv(G_cells) * (np.sqrt(det) * vol)[..., None, None]
    return 0.5 * (W + np.swapaxes(W, -1, -2))


def assemble_pencil(grid, G_nodes, G_cells, max_unknowns=MAX_UNKNOWNS):
    """Low-level assembly from node and cell samples of a metric."""
    if grid.n_unknowns > max_unknowns:
        raise OutOfMemory(f"{grid.n_unknowns} unknowns exceed the cap of {max_unknowns}")
    n = len(grid.axes)
    vol = grid.cell_volume
    W = _cell_weights(G_cells, vol).reshape(-1, n, n)
    corners, T = _stencil_tensor(n, grid.spacing)
    local = np.einsum("cmn,mnab->cab", W, T)
    node_shape = grid.node_shape
    uid = grid.unknown_index().ravel()
    strides = np.array([int(np.prod(node_shape[k + 1:])) for k in range(n)])
    cell_idx = np.indices(grid.cell_shape).reshape(n, -1)
    first = (cell_idx * strides[:, None]).sum(axis=0)
    offsets = corners @ strides
    ids = uid[first[:, None] + offsets[None, :]]  # (cells, corners)
    rows = np.broadcast_to(ids[:, :, None], local.shape)
    cols = np.broadcast_to(ids[:, None, :], local.shape)
    keep = (rows >= 0) & (cols >= 0) & (local != 0)
    N = grid.n_unknowns
    K = sp.coo_matrix((local[keep], (rows[keep], cols[keep])), shape=(N, N)).tocsr()
    K = (0.5 * (K + K.T)).tocsr()
    K.sum_duplicates()
    K.sort_indices()
    det_nodes = np.linalg.det(G_nodes[grid.interior])
    if np.any(det_nodes <= 0):
        raise MetricNotPositive("metric determinant not positive at some node")
    mass = np.sqrt(det_nodes) * vol
    return K, mass


def assemble_forms(field, grid=None, max_unknowns=MAX_UNKNOWNS):
    """Stiffness ``K`` and mass for the metric ``field.G`` with Dirichlet data
    on the base ends and the cross-section boundary."""
    grid = field.grid if grid is None else grid
    K, mass = assemble_pencil(grid, field.G, field.G_cells, max_unknowns)
    return DiscreteForms(K, mass, grid, field)


def assemble_unperturbed(field, modes=None, grid=None, max_unknowns=MAX_UNKNOWNS):
    """Forms of the product metric ``diag(g, I)`` on the same grid.

    When ``modes`` is given its cross-section grid must be the layer's fiber
    grid, so that the product spectrum ``E_k + (base eigenvalues)`` applies.
    """
    grid = field.grid if grid is None else grid
    if modes is not None:
        fg = modes.grid
        if fg.shape != grid.fiber.shape or not np.allclose(fg.spacing, grid.fiber.spacing):
            raise ValueError("cross-section modes were computed on a different fiber grid")
    K, mass = assemble_pencil(grid, field.G0, field.G0_cells, max_unknowns)
    return DiscreteForms(K, mass, grid, field)


def product_spectrum(base_eigenvalues, energies, count):
    """Lowest ``count`` sums ``E_k + mu_m`` (the separated spectrum)."""
    sums = np.add.outer(np.asarray(energies), np.asarray(base_eigenvalues)).ravel()
    return np.sort(sums)[:count]


def write_coo(matrix, path):
    """Write a sparse matrix as ``row col value`` lines, 0-based, sorted by (row, col)."""
    A = sp.coo_matrix(matrix)
    order = np.lexsort((A.col, A.row))
    with open(path, "w") as fh:
        for r, c, v in zip(A.row[order], A.col[order], A.data[order]):
            fh.write(f"{r} {c} {float(v)!r}\n")


def read_coo(path, shape=None):
    data = np.loadtxt(path, ndmin=2)
    if data.size == 0:
        return sp.csr_matrix(shape or (0, 0))
    r, c = data[:, 0].astype(int), data[:, 1].astype(int)
    if shape is None:
        shape = (r.max() + 1, c.max() + 1)
    return sp.coo_matrix((data[:, 2], (r, c)), shape=shape).tocsr()


def _diff4(f, h, axis):
    """Fourth-order first derivative along ``axis`` (one-sided near the ends)."""
    f = np.moveaxis(f, axis, 0)
    d = np.empty_like(f)
    d[2:-2] = (f[:-4] - 8 * f[1:-3] + 8 * f[3:-1] - f[4:]) / (12 * h)
    d[0] = (-25 * f[0] + 48 * f[1] - 36 * f[2] + 16 * f[3] - 3 * f[4]) / (12 * h)
    d[1] = (-3 * f[0] - 10 * f[1] + 18 * f[2] - 6 * f[3] + f[4]) / (12 * h)
    d[-1] = -(-25 * f[-1] + 48 * f[-2] - 36 * f[-3] + 16 * f[-4] - 3 * f[-5]) / (12 * h)
    d[-2] = -(-3 * f[-1] - 10 * f[-2] + 18 * f[-3] - 6 * f[-4] + f[-5]) / (12 * h)
    return np.moveaxis(d, 0, axis)


def _node_gradient(grid, values):
    return np.stack([_diff4(values, h, k) for k, h in enumerate(grid.spacing)], axis=-1)


def trapezoid_weights(grid):
    """Product trapezoid weights on all nodes (cell volume, halved per boundary axis)."""
    w = np.full(grid.node_shape, grid.cell_volume)
    for k, n in enumerate(grid.node_shape):
        edge = [slice(None)] * len(grid.node_shape)
        for i in (0, n - 1):
            edge[k] = i
            w[tuple(edge)] *= 0.5
    return w


def comparison_defect(forms, forms0, phi, psi, lam):
    """Defect of the discrete comparison identity between the perturbed and
    product forms.

    The form difference ``phi^T (K - lam M) psi - phi^T (K0 - lam M0) psi`` is
    compared with the deformation pairings ``(d phi, G^{-1} A d psi)_G`` and
    ``lam (phi, B psi)_G``, evaluated independently by trapezoid quadrature
    over all nodes with fourth-order difference gradients.  In the continuum the
    defect vanishes; here it is a quadrature error of order h^2 for smooth
    test functions on a rectangular cross-section.
    """
    grid, field = forms.grid, forms.field
    lhs = phi @ (forms.K @ psi) - lam * phi @ (forms.mass * psi)
    lhs0 = phi @ (forms0.K @ psi) - lam * phi @ (forms0.mass * psi)
    G = field.G
    dt = deformation_tensors(G, field.G0)
    w = trapezoid_weights(grid) * np.sqrt(np.linalg.det(G))
    Phi, Psi = grid.lift(phi), grid.lift(psi)
    dphi, dpsi = _node_gradient(grid, Phi), _node_gradient(grid, Psi)
    GinvA = np.linalg.solve(G, dt.A)
    pair_A = np.sum(w * np.einsum("...m,...mn,...n->...", dphi, GinvA, dpsi))
    pair_B = np.sum(w * Phi * dt.B * Psi)
    return float(lhs - lhs0 - pair_A + lam * pair_B)
