"""Sparse symmetric generalized eigensolver and SPD linear solves.

All routines work on a pencil ``(K, M)`` with ``K`` sparse symmetric positive
semidefinite and ``M`` diagonal positive.  ``M`` is passed around as its
diagonal (a 1-D array); a :class:`~layerlab.discretization.DiscreteForms`
instance may be given wherever a pencil is expected.
"""

import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
import scipy.sparse as sp
from scipy.sparse.linalg import eigsh, splu

from .exceptions import SolverNoConvergence

log = logging.getLogger(__name__)

SEED = 0xFE41
MAX_ITER = 5000
EIG_TOL = 1e-8
CG_TOL = 1e-10
# above this size "auto" switches the eigensolver preconditioner from Jacobi
# to a factorized shifted inverse
AUTO_LU_SIZE = 500
# below this many unknowns per block column the dense solver is used directly
DENSE_FACTOR = 4


@dataclass
class EigenResult:
    values: np.ndarray
    vectors: np.ndarray
    residuals: np.ndarray
    iterations: int
    converged: bool = True
    ritz_history: list = field(default_factory=list, repr=False)


def as_pencil(forms, M=None):
    """Return ``(K, m)`` with K in CSR form and m the diagonal of the mass matrix."""
    if M is None:
        K, M = forms.K, forms.M
    else:
        K = forms
    K = sp.csr_matrix(K) if sp.issparse(K) else sp.csr_matrix(np.asarray(K, dtype=float))
    if sp.issparse(M):
        m = M.diagonal()
    else:
        M = np.asarray(M, dtype=float)
        m = np.diag(M).copy() if M.ndim == 2 else M
    if m.shape[0] != K.shape[0]:
        raise ValueError(f"mass has {m.shape[0]} entries, stiffness is {K.shape}")
    if np.any(m <= 0):
        raise ValueError("mass weights must be strictly positive")
    return K, np.asarray(m, dtype=float)


def _svqb(V, m, drop_tol=1e-12):
    """M-orthonormal basis of range(V), dropping numerically dependent directions."""
    G = V.T @ (m[:, None] * V)
    G = 0.5 * (G + G.T)
    d = np.sqrt(np.abs(np.diag(G)))
    d[d == 0] = 1.0
    w, U = np.linalg.eigh(G / np.outer(d, d))
    keep = w > drop_tol * max(w.max(), 0.0)
    return (V / d) @ (U[:, keep] / np.sqrt(w[keep]))


def _project_out(Q, X, m):
    for _ in range(2):
        Q = Q - X @ (X.T @ (m[:, None] * Q))
    return Q


def _make_preconditioner(K, m, kind, shift):
    n = K.shape[0]
    if kind == "auto":
        kind = "jacobi" if n <= AUTO_LU_SIZE else "lu"
    if kind == "jacobi":
        d = K.diagonal() + m
        return lambda R: R / d[:, None]
    if kind == "lu":
        for s in (shift, -1.0):
            try:
                lu = splu((K - s * sp.diags(m)).tocsc())
            except RuntimeError:
                continue
            return lu.solve
        raise SolverNoConvergence("shifted factorization failed for preconditioner")
    if callable(kind):
        return kind
    raise ValueError(f"unknown preconditioner {kind!r}")


def _residuals(K, m, X, theta):
    R = K @ X - (m[:, None] * X) * theta
    return R, np.sqrt(np.sum(R * R / m[:, None], axis=0))


def _dense_eigenpairs(K, m, count):
    Kd = K.toarray()
    Kd = 0.5 * (Kd + Kd.T)
    w, V = scipy.linalg.eigh(Kd, np.diag(m), subset_by_index=[0, count - 1])
    _, res = _residuals(K, m, V, w)
    return EigenResult(w, V, res, iterations=0, converged=True, ritz_history=[w.copy()])


def smallest_eigenpairs(forms, count, eig_tol=EIG_TOL, *, M=None, max_iter=MAX_ITER,
                        preconditioner="auto", shift=0.0, guard=None, seed=SEED,
                        raise_on_failure=True):
    """Lowest ``count`` eigenpairs of ``K v = lambda M v`` by block LOBPCG.

    The iteration keeps an M-orthonormal block and performs Rayleigh-Ritz on
    ``[X, W, P]``, so the Ritz values are nonincreasing from one iteration to
    the next.  Converged columns are soft-locked.  ``preconditioner`` is
    ``"jacobi"`` (diagonal of K + M), ``"lu"`` (sparse LU of K - shift*M),
    ``"auto"`` or a callable acting on a block of residuals.

    Raises SolverNoConvergence after ``max_iter`` iterations; the exception's
    ``result`` holds the best block found.
    """
    K, m = as_pencil(forms, M)
    n = K.shape[0]
    if not 1 <= count <= n:
        raise ValueError(f"count must be in [1, {n}], got {count}")
    if guard is None:
        guard = max(4, count // 5)
    bs = min(n, count + guard)
    if n < DENSE_FACTOR * bs or n <= 32:
        return _dense_eigenpairs(K, m, count)

    apply_T = _make_preconditioner(K, m, preconditioner, shift)
    rng = np.random.default_rng(seed)
    X = _svqb(rng.standard_normal((n, bs)), m)
    AX = K @ X
    theta, C = np.linalg.eigh(0.5 * (X.T @ AX + AX.T @ X))
    X, AX = X @ C, AX @ C
    P = None
    history = [theta[:count].copy()]
    res = None
    it = 0
    for it in range(1, max_iter + 1):
        R = AX - (m[:, None] * X) * theta
        res = np.sqrt(np.sum(R * R / m[:, None], axis=0))
        done = res[:count] <= eig_tol
        if done.all():
            break
        active = np.ones(bs, dtype=bool)
        active[:count] = ~done
        blocks = [apply_T(R[:, active])]
        if P is not None:
            blocks.append(P[:, active])
        Q = _project_out(np.hstack(blocks), X, m)
        Q = _svqb(Q, m)
        Q = _svqb(_project_out(Q, X, m), m)
        if Q.shape[1] == 0:
            break
        AQ = K @ Q
        XAQ = X.T @ AQ
        H = np.block([[np.diag(theta), XAQ], [XAQ.T, 0.5 * (Q.T @ AQ + AQ.T @ Q)]])
        w, C = np.linalg.eigh(H)
        Cx, Cq = C[:bs, :bs], C[bs:, :bs]
        P, AP = Q @ Cq, AQ @ Cq
        X, AX = X @ Cx + P, AX @ Cx + AP
        theta = w[:bs]
        if it % 25 == 0:
            # refresh against drift in orthonormality and in the K X update
            X = _svqb(X, m)
            AX = K @ X
            theta, C = np.linalg.eigh(0.5 * (X.T @ AX + AX.T @ X))
            X, AX = X @ C, AX @ C
            P = None
        history.append(theta[:count].copy())
        if it % 50 == 0:
            log.debug("lobpcg", extra={"data": {"iteration": it, "max_residual": float(res[:count].max()),
                                                 "unconverged": int((~done).sum())}})
    _, res = _residuals(K, m, X[:, :count], theta[:count])
    converged = bool(np.all(res <= eig_tol))
    result = EigenResult(theta[:count].copy(), X[:, :count].copy(), res, it, converged, history)
    log.info("lobpcg_done", extra={"data": {"n": n, "count": count, "iterations": it,
                                            "converged": converged, "max_residual": float(res.max())}})
    if not converged and raise_on_failure:
        raise SolverNoConvergence(f"LOBPCG did not reach eig_tol={eig_tol} in {it} iterations", result)
    return result


def solve_spd(A, b, cg_tol=CG_TOL, max_iter=None, x0=None):
    """Solve ``A x = b`` for sparse SPD ``A`` by Jacobi-preconditioned CG.

    Stops when ``||b - A x|| <= cg_tol * ||b||``.
    """
    A = sp.csr_matrix(A) if sp.issparse(A) else np.asarray(A, dtype=float)
    b = np.asarray(b, dtype=float)
    n = b.shape[0]
    if max_iter is None:
        max_iter = 10 * n
    bnorm = np.linalg.norm(b)
    if bnorm == 0.0:
        return np.zeros(n)
    dinv = 1.0 / A.diagonal()
    x = np.zeros(n) if x0 is None else np.array(x0, dtype=float)
    r = b - A @ x
    z = dinv * r
    p = z.copy()
    rz = r @ z
    for _ in range(max_iter):
        if np.linalg.norm(r) <= cg_tol * bnorm:
            return x
        Ap = A @ p
        alpha = rz / (p @ Ap)
        x += alpha * p
        r -= alpha * Ap
        z = dinv * r
        rz_new = r @ z
        p = z + (rz_new / rz) * p
        rz = rz_new
    if np.linalg.norm(r) <= cg_tol * bnorm:
        return x
    raise SolverNoConvergence(f"CG did not reach cg_tol={cg_tol} in {max_iter} iterations", x)


def _inertia_count(K, m, threshold):
    A = (K - threshold * sp.diags(m)).tocsc()
    lu = splu(A, permc_spec="MMD_AT_PLUS_A", diag_pivot_thresh=0.0,
              options=dict(SymmetricMode=True))
    if not np.array_equal(lu.perm_r, lu.perm_c):
        return None
    d = lu.U.diagonal()
    if np.any(d == 0):
        return None
    return int(np.count_nonzero(d < 0))


def count_below(forms, threshold, *, M=None, method="auto", eig_tol=EIG_TOL, cap=None):
    """Number of generalized eigenvalues strictly below ``threshold``.

    ``method="inertia"`` counts negative pivots of a symmetric LDL^T-type
    factorization of ``K - threshold*M`` (Sylvester's law of inertia).
    ``method="ritz"`` grows a LOBPCG block until its top Ritz value passes the
    threshold.  ``"auto"`` tries inertia and falls back to Ritz counting.
    """
    K, m = as_pencil(forms, M)
    if method in ("auto", "inertia"):
        c = _inertia_count(K, m, threshold)
        if c is not None:
            return c
        if method == "inertia":
            raise SolverNoConvergence("symmetric factorization needed row pivoting")
    n = K.shape[0]
    k = min(n, 8)
    while True:
        res = smallest_eigenpairs(K, k, eig_tol, M=m)
        c = int(np.count_nonzero(res.values < threshold))
        if c < k or k == n or (cap is not None and k >= cap):
            return c
        k = min(n, 2 * k)


def eigenvalues_near(forms, target, k=1, *, M=None):
    """The ``k`` generalized eigenvalues closest to ``target`` (shift-invert Lanczos)."""
    K, m = as_pencil(forms, M)
    n = K.shape[0]
    if n <= 200 or k >= n - 1:
        w = scipy.linalg.eigh(K.toarray(), np.diag(m), eigvals_only=True)
        return np.sort(w[np.argsort(np.abs(w - target))[:k]])
    # ARPACK draws a random start vector unless given one
    v0 = np.random.default_rng(SEED).standard_normal(n)
    w = eigsh(K, k=k, M=sp.diags(m).tocsc(), sigma=target, which="LM", v0=v0,
              return_eigenvectors=False)
    return np.sort(w)
