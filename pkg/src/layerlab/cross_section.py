"""Dirichlet eigenpairs of the cross-section.

Cross-sections live on uniform node grids centred at the origin.  Boundary
nodes and nodes outside a mask carry the Dirichlet value zero; only interior
nodes are unknowns.
"""

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy import ndimage

from .exceptions import DegenerateGroundState, EmptyInterior
from .spectral import EIG_TOL, smallest_eigenpairs

SHAPES = ("interval", "rectangle", "disk", "mask")
GAP_TOL = 1e-8
MIN_INTERIOR = 5


@dataclass(frozen=True)
class FiberGrid:
    """Node grid of a cross-section.

    ``axes`` are the node coordinates per axis (boundary nodes included),
    ``interior`` flags the unknowns.
    """

    axes: tuple
    interior: np.ndarray

    @property
    def spacing(self):
        return tuple(float(a[1] - a[0]) for a in self.axes)

    @property
    def shape(self):
        return self.interior.shape

    @property
    def ndim(self):
        return len(self.axes)

    @property
    def cell_volume(self):
        return float(np.prod(self.spacing))

    @property
    def n_unknowns(self):
        return int(self.interior.sum())

    def points(self):
        """Node coordinates, shape ``shape + (ndim,)``."""
        return np.stack(np.meshgrid(*self.axes, indexing="ij"), axis=-1)

    def cell_centers(self):
        mids = [0.5 * (a[1:] + a[:-1]) for a in self.axes]
        return np.stack(np.meshgrid(*mids, indexing="ij"), axis=-1)


def _axis(length, h=None, cells=None):
    if cells is None:
        cells = max(int(round(length / h)), 2)
    return np.linspace(-0.5 * length, 0.5 * length, int(cells) + 1)


@dataclass(frozen=True)
class CrossSectionDomain:
    """Bounded cross-section, described by shape parameters and a grid spacing.

    Use the constructors :meth:`interval`, :meth:`rectangle`, :meth:`disk`
    and :meth:`mask`.  For intervals and rectangles ``cells`` (cells per axis)
    may be given instead of ``h``; the spacing then divides the side exactly.
    """

    shape: str
    params: dict = field(default_factory=dict)
    h: float = None
    cells: tuple = None

    def __post_init__(self):
        if self.shape not in SHAPES:
            raise ValueError(f"unknown cross-section shape {self.shape!r}")
        if self.h is None and self.cells is None and self.shape != "mask":
            raise ValueError("grid spacing h or cells must be given")
        if self.h is not None and not self.h > 0:
            raise ValueError("grid spacing must be positive")
        for key, val in self.params.items():
            if key != "mask" and not val > 0:
                raise ValueError(f"{key} must be positive, got {val}")

    @classmethod
    def interval(cls, length, h=None, cells=None):
        return cls("interval", {"length": float(length)}, h, None if cells is None else (int(cells),))

    @classmethod
    def rectangle(cls, width, height, h=None, cells=None):
        if cells is not None and np.ndim(cells) == 0:
            cells = (cells, cells)
        return cls("rectangle", {"width": float(width), "height": float(height)}, h,
                   None if cells is None else tuple(int(c) for c in cells))

    @classmethod
    def disk(cls, radius, h):
        return cls("disk", {"radius": float(radius)}, h)

    @classmethod
    def mask(cls, mask, h):
        return cls("mask", {"mask": np.asarray(mask, dtype=bool)}, h)

    @property
    def ndim(self):
        if self.shape == "interval":
            return 1
        if self.shape == "mask":
            return self.params["mask"].ndim
        return 2

    @property
    def width(self):
        """Extent along the first axis."""
        p = self.params
        if self.shape == "interval":
            return p["length"]
        if self.shape == "rectangle":
            return p["width"]
        if self.shape == "disk":
            return 2 * p["radius"]
        return p["mask"].shape[0] * self.h

    def scaled(self, c):
        """Same shape scaled by ``c`` with the grid scaled alike."""
        params = {k: (v if k == "mask" else v * c) for k, v in self.params.items()}
        return CrossSectionDomain(self.shape, params, None if self.h is None else self.h * c, self.cells)

    def grid(self):
        p = self.params
        if self.shape == "interval":
            ax = _axis(p["length"], self.h, None if self.cells is None else self.cells[0])
            axes = (ax,)
            interior = np.ones(ax.size, dtype=bool)
            interior[[0, -1]] = False
        elif self.shape == "rectangle":
            cells = self.cells or (None, None)
            axes = (_axis(p["width"], self.h, cells[0]), _axis(p["height"], self.h, cells[1]))
            interior = np.zeros((axes[0].size, axes[1].size), dtype=bool)
            interior[1:-1, 1:-1] = True
        elif self.shape == "disk":
            r, h = p["radius"], self.h
            J = int(np.ceil(r / h)) + 1
            ax = h * np.arange(-J, J + 1)
            axes = (ax, ax)
            X, Y = np.meshgrid(ax, ax, indexing="ij")
            interior = X ** 2 + Y ** 2 < r ** 2 * (1 - 1e-12)
        else:
            mask = p["mask"]
            # pad with a frame of exterior nodes carrying the Dirichlet value
            interior = np.pad(mask, 1, constant_values=False)
            axes = tuple(self.h * (np.arange(s) - 0.5 * (s - 1)) for s in interior.shape)
        return FiberGrid(tuple(np.asarray(a, dtype=float) for a in axes), interior)


@dataclass(frozen=True)
class CrossSectionModes:
    energies: np.ndarray
    modes: np.ndarray
    grid: FiberGrid
    residuals: np.ndarray = None

    @property
    def E1(self):
        return float(self.energies[0])

    @property
    def ground_state(self):
        return self.modes[0]

    def mode_grid(self, k=0):
        """Mode ``k`` on the full node grid (zero on the Dirichlet nodes)."""
        out = np.zeros(self.grid.shape)
        out[self.grid.interior] = self.modes[k]
        return out


def second_difference(n_nodes, h):
    """Negative 1-D second difference on all nodes of an axis (boundary rows included)."""
    d = np.full(n_nodes, 2.0)
    o = -np.ones(n_nodes - 1)
    return sp.diags([o, d, o], [-1, 0, 1], format="csr") / h ** 2


def dirichlet_laplacian(grid):
    """Stiffness and mass (as weights) of the Dirichlet Laplacian on ``grid``.

    Returns ``(K, m)`` with ``K = vol * (-Delta_h)`` restricted to interior
    nodes and ``m = vol`` on each unknown.
    """
    shape = grid.shape
    L = None
    for ax, (n, h) in enumerate(zip(shape, grid.spacing)):
        factors = [sp.identity(s, format="csr") for s in shape]
        factors[ax] = second_difference(n, h)
        term = factors[0]
        for f in factors[1:]:
            term = sp.kron(term, f, format="csr")
        L = term if L is None else L + term
    idx = np.flatnonzero(grid.interior.ravel())
    vol = grid.cell_volume
    K = (L[idx][:, idx] * vol).tocsr()
    return K, np.full(idx.size, vol)


def _check_domain(grid):
    interior = grid.interior
    if not interior.any():
        raise EmptyInterior("cross-section has no interior grid points")
    for ax in range(interior.ndim):
        extent = interior.any(axis=tuple(i for i in range(interior.ndim) if i != ax)).sum()
        if extent < MIN_INTERIOR:
            raise EmptyInterior(f"axis {ax} has {extent} interior points, need >= {MIN_INTERIOR}")
    _, ncomp = ndimage.label(interior)
    if ncomp != 1:
        raise DegenerateGroundState(f"cross-section mask has {ncomp} connected components")


def dirichlet_modes(domain, count=6, eig_tol=EIG_TOL):
    """Lowest ``count`` Dirichlet eigenpairs of the cross-section, ascending.

    Modes are normalized in the discrete L2 inner product (weight = cell
    volume) and the ground state is made positive.
    """
    grid = domain.grid() if isinstance(domain, CrossSectionDomain) else domain
    _check_domain(grid)
    K, m = dirichlet_laplacian(grid)
    n_solve = min(max(count, 2), K.shape[0])
    res = smallest_eigenpairs(K, n_solve, eig_tol, M=m)
    E, V = res.values, res.vectors.T.copy()
    if E[1] - E[0] <= GAP_TOL:
        raise DegenerateGroundState(f"E2 - E1 = {E[1] - E[0]:.3e} does not exceed {GAP_TOL}")
    s = np.sign(V[0].sum())
    V[0] *= s if s != 0 else 1.0
    if V[0].min() < -1e-8 * np.abs(V[0]).max():
        raise DegenerateGroundState("ground state changes sign on the interior")
    return CrossSectionModes(E[:count], V[:count], grid, res.residuals[:count])
