"""Independent reference values used by the tests.

Nothing here imports layerlab: every oracle is computed from closed forms,
power series or dense linear algebra.
"""

import math

import numpy as np
import scipy.linalg
import sympy


# -- Bessel root by series bisection --------------------------------------------

def bessel_j0(x, terms=60):
    """J_0 from its power series sum (-1)^k (x/2)^(2k) / (k!)^2."""
    s, term = 0.0, 1.0
    q = -(x * x) / 4.0
    for k in range(terms):
        s += term
        term *= q / ((k + 1) ** 2)
    return s


def bessel_j0_first_zero(lo=2.0, hi=3.0, tol=1e-15):
    """First positive zero of J_0 by bisection (J_0(2) > 0 > J_0(3))."""
    flo = bessel_j0(lo)
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        fm = bessel_j0(mid)
        if (fm > 0) == (flo > 0):
            lo, flo = mid, fm
        else:
            hi = mid
    return 0.5 * (lo + hi)


# -- product spectra ------------------------------------------------------------

def discrete_dirichlet_1d(n_cells, length):
    """Eigenvalues of the 3-point Dirichlet second difference on n_cells cells."""
    h = length / n_cells
    m = np.arange(1, n_cells)
    return 4.0 / h ** 2 * np.sin(m * np.pi / (2 * n_cells)) ** 2


def continuum_strip(length, width, count, n_fiber=6, n_base=400):
    """Lowest eigenvalues (m pi / L)^2 + (k pi / w)^2 of the Dirichlet strip."""
    m = np.arange(1, n_base + 1)
    k = np.arange(1, n_fiber + 1)
    return np.sort(np.add.outer((m * np.pi / length) ** 2, (k * np.pi / width) ** 2).ravel())[:count]


def strip_count_below(length, width, threshold, n_fiber=20):
    """Number of (m pi/L)^2 + (k pi/w)^2 not exceeding ``threshold``:
    sum over k of floor(L/pi sqrt(threshold - (k pi/w)^2))."""
    total = 0
    for k in range(1, n_fiber + 1):
        rest = threshold - (k * np.pi / width) ** 2
        if rest <= 0:
            break
        total += math.floor(length / np.pi * math.sqrt(rest) + 1e-12)
    return total


def dense_eigvals(K, m, count=None):
    """Generalized eigenvalues of (K, diag m) by dense LAPACK."""
    Kd = K.toarray() if hasattr(K, "toarray") else np.asarray(K)
    w = scipy.linalg.eigh(0.5 * (Kd + Kd.T), np.diag(np.asarray(m, dtype=float)), eigvals_only=True)
    return w if count is None else w[:count]


# -- geometry closed forms ------------------------------------------------------

def graph_unit_normal(grad):
    """Unit normal (-grad, 1)/sqrt(1 + |grad|^2) of a codimension-one graph."""
    grad = np.asarray(grad, dtype=float)
    n = np.concatenate([-grad, np.ones(grad.shape[:-1] + (1,))], axis=-1)
    return n / np.linalg.norm(n, axis=-1, keepdims=True)


def symbolic_fermi_metric_curve():
    """Tube metrics of a planar curve (constant kappa) and of a twisted straight line.

    Expands  G_ij = g - 2 u S + u u S g^-1 S + C C^T,  C_ib = u_a Gamma_iab
    symbolically and returns sympy matrices with symbols (u,) or (u1, u2).
    """
    out = {}
    u, k = sympy.symbols("u kappa", real=True)
    g = sympy.Integer(1)
    S = k
    G11 = g - 2 * u * S + u * u * S * S / g
    out["planar"] = (sympy.Matrix([[G11, 0], [0, 1]]), u, k)
    u1, u2, t = sympy.symbols("u1 u2 tau", real=True)
    Gamma = sympy.Matrix([[0, t], [-t, 0]])   # Gamma[a, b] = <d f_a, f_b>
    uvec = sympy.Matrix([u1, u2])
    C = (uvec.T * Gamma)                     # row: C_b = u_a Gamma_ab
    G = sympy.zeros(3, 3)
    G[0, 0] = 1 + (C * C.T)[0, 0]
    G[0, 1:] = C
    G[1:, 0] = C.T
    G[1:, 1:] = sympy.eye(2)
    out["twisted"] = (sympy.simplify(G), (u1, u2), t)
    return out


# -- packet residual law --------------------------------------------------------

def packet_residual_ratio(radius, k, n_quad=20001):
    """``||(-d^2/dx^2 - k^2) xi|| / ||xi||`` for ``xi = b(x/R) cos(k x)``, b = (1-t^2)^3.

    The derivative is taken symbolically; the L2 norms by composite Simpson
    quadrature on the support.
    """
    x, R, kk = sympy.symbols("x R k", real=True)
    b = (1 - (x / R) ** 2) ** 3
    xi = b * sympy.cos(kk * x)
    res = -sympy.diff(xi, x, 2) - kk ** 2 * xi
    f_xi = sympy.lambdify((x, R, kk), xi, "numpy")
    f_res = sympy.lambdify((x, R, kk), res, "numpy")
    xs = np.linspace(-radius, radius, n_quad)
    w = np.ones(n_quad)
    w[1:-1:2], w[2:-1:2] = 4.0, 2.0
    w *= (xs[1] - xs[0]) / 3.0
    num = np.sqrt(np.sum(w * f_res(xs, radius, k) ** 2))
    den = np.sqrt(np.sum(w * f_xi(xs, radius, k) ** 2))
    return float(num / den)
